import hashlib
import json

import pytest

from dialunify.cli import main
from dialunify.schema import Split, TaskToken, TextKnowledge, Turn, UnifiedRecord, dumps_record


def write_jsonl(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")


@pytest.fixture
def corpus(tmp_path):
    raw = tmp_path / "chat.raw.jsonl"
    write_jsonl(
        raw,
        [{"turns": [f"I am in Paris on Friday {i}", "nice city", "see you at 5"], "response": f"bye {i}", "persona": "likes tea"} for i in range(12)],
    )
    out = tmp_path / "chat.jsonl"
    assert main(["ingest", "--adapter", "chitchat_turns", "--input", str(raw), "--output", str(out), "--dataset", "pc", "--definition", "Reply to the user."]) == 0
    return tmp_path


def test_validate_clean_file(corpus, capsys):
    assert main(["validate", str(corpus / "chat.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["records"] == 12


def test_validate_bad_file(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text('{"task": "chat"}\n')
    assert main(["validate", str(tmp_path / "bad.jsonl")]) == 1
    assert "bad.jsonl:1" in capsys.readouterr().err


def test_ssl_gen_single_turn_corpus_skips_all(tmp_path, capsys):
    r = UnifiedRecord(TaskToken.COMM, "c", Split.TRAIN, (Turn("user", "hi"),), TextKnowledge("k"), "Reply.", "hello")
    (tmp_path / "one.jsonl").write_text(dumps_record(r) + "\n")
    rc = main(["ssl-gen", "--kind", "reo", "--input", str(tmp_path / "one.jsonl"), "--output", str(tmp_path / "reo.jsonl")])
    assert rc == 0
    report = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert report["skipped_fraction"] == {"TooFewTurns": 1.0}


def _stream_digest(corpus, capsys, *extra):
    capsys.readouterr()
    assert main(["stream", "--manifest", str(corpus / "m.json"), "--step", "512", "--seed", "0", *extra]) == 0
    return hashlib.sha256(capsys.readouterr().out.encode()).hexdigest()


def test_full_pipeline(corpus, capsys):
    d = corpus
    assert main(["ssl-gen", "--kind", "reo", "--input", str(d / "chat.jsonl"), "--output", str(d / "reo.jsonl"), "--provenance", str(d / "reo.prov")]) == 0
    assert main(["ssl-gen", "--kind", "clo", "--input", str(d / "chat.jsonl"), "--output", str(d / "clo.jsonl")]) == 0
    assert main(["manifest", str(d / "chat.jsonl"), str(d / "reo.jsonl"), str(d / "clo.jsonl"), "--output", str(d / "m.json")]) == 0
    capsys.readouterr()
    assert main(["stats", str(d / "m.json"), "--expect-total", "36"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["total"] == 36
    assert main(["stats", str(d / "m.json"), "--expect-total", "37"]) == 1
    assert _stream_digest(d, capsys) == _stream_digest(d, capsys)


def test_stream_checkpoint_resume(corpus, capsys):
    d = corpus
    main(["manifest", str(d / "chat.jsonl"), "--output", str(d / "m.json")])
    full = _run_stream(d, capsys, "--step", "4", "--epochs", "2")
    head = _run_stream(d, capsys, "--step", "4", "--epochs", "2", "--max-blocks", "2", "--checkpoint", str(d / "ck.json"))
    tail = _run_stream(d, capsys, "--step", "4", "--epochs", "2", "--resume", str(d / "ck.json"))
    assert head + tail == full
    assert len(full.splitlines()) == 6


def _run_stream(d, capsys, *args):
    capsys.readouterr()
    assert main(["stream", "--manifest", str(d / "m.json"), *args]) == 0
    return capsys.readouterr().out


def test_config_file_and_flags_win(corpus, capsys):
    d = corpus
    main(["manifest", str(d / "chat.jsonl"), "--output", str(d / "m.json")])
    cfg = d / "run.cfg"
    cfg.write_text(f"# stream settings\nmanifest = {d / 'm.json'}\nstep = 4\nseed = 3\n")
    capsys.readouterr()
    assert main(["stream", "--config", str(cfg), "--seed", "5", "--max-blocks", "1", "--print-config"]) == 0
    resolved = json.loads(capsys.readouterr().err.splitlines()[0])
    assert resolved["step"] == 4 and resolved["seed"] == 5


def test_eval(tmp_path, capsys):
    write_jsonl(tmp_path / "p.jsonl", ["the cat"])
    write_jsonl(tmp_path / "r.jsonl", ["the cat sat"])
    assert main(["eval", "--metric", "rouge_l", "--pred", str(tmp_path / "p.jsonl"), "--ref", str(tmp_path / "r.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.7722, abs=1e-4)
    write_jsonl(tmp_path / "ps.jsonl", [{"state": {"hotel-area": "north"}}, {}])
    write_jsonl(tmp_path / "rs.jsonl", [{"state": {"hotel-area": "north"}}, {"hotel-area": "south"}])
    assert main(["eval", "--metric", "jga", "--pred", str(tmp_path / "ps.jsonl"), "--ref", str(tmp_path / "rs.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.5
    assert main(["eval", "--metric", "combined", "--inform", "91.5", "--success", "84.7", "--bleu", "22.86"]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(110.96)
    assert main(["eval", "--metric", "combined", "--inform", "120", "--success", "0", "--bleu", "1"]) == 1


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["stream"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--metric", "nope"])
    assert exc.value.code == 2


def test_missing_file_is_data_error(tmp_path):
    assert main(["stats", str(tmp_path / "missing.json")]) == 1
