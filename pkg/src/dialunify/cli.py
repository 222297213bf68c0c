"""Command line entry point.

Commands: validate, ingest, manifest, ssl-gen, stats, stream, eval.
Exit status is 0 on success, 1 on data errors and 2 on usage errors.
Diagnostics go to stderr; data goes to files or stdout.

Every command accepts ``--config FILE``: ``key = value`` lines (``#``
comments allowed) that fill in options not given on the command line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .denoising import generate_files
from .ingest import (
    ADAPTERS,
    CorpusManifest,
    IngestError,
    IngestReport,
    ManifestError,
    build_manifest,
    ingest_file,
)
from .metrics import METRIC_VARIANTS, MetricError, ScoreReport, bleu4, combined_score, score
from .schema import RecordFormatError, TaskToken, loads_record, validate_record
from .scheduler import Checkpoint, SchedulerConfig, SchedulerError, write_stream
from .stats import EmptyManifest, check_total, corpus_stats

logger = logging.getLogger("dialunify")


class DataError(Exception):
    """Bad input data; maps to exit status 1."""


def _eprint(*args: Any) -> None:
    print(*args, file=sys.stderr)


def _dump(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=False)


# --- config handling -------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = line.split(sep, 1)
                break
        else:
            raise ValueError(f"{path}:{n}: expected 'key = value'")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _config_defaults(parser: argparse.ArgumentParser, raw: dict[str, str]) -> dict[str, Any]:
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    out: dict[str, Any] = {}
    for key, value in raw.items():
        action = actions.get(key)
        if action is None:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            out[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            conv = action.type or str
            out[key] = [conv(v) for v in value.replace(",", " ").split()]
        else:
            out[key] = value  # argparse applies `type` to string defaults
    return out


# --- commands --------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    records = errors = warnings = 0
    for path in args.files:
        with open(path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                records += 1
                try:
                    result = validate_record(loads_record(line))
                except RecordFormatError as exc:
                    errors += 1
                    _eprint(f"{path}:{line_no}: error: {exc}")
                    continue
                for v in result.violations:
                    _eprint(f"{path}:{line_no}: {v.severity}: {v}")
                errors += len(result.errors)
                warnings += len(result.warnings)
    print(_dump({"files": len(args.files), "records": records, "errors": errors, "warnings": warnings}))
    return 1 if errors else 0


def _parse_options(items: Sequence[str]) -> dict[str, Any]:
    opts: dict[str, Any] = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--option expects KEY=VALUE, got {item!r}")
        try:
            opts[key] = json.loads(value)
        except json.JSONDecodeError:
            opts[key] = value
    return opts


def cmd_ingest(args: argparse.Namespace) -> int:
    opts = {}
    if args.options_file:
        opts.update(json.loads(Path(args.options_file).read_text(encoding="utf-8")))
    opts.update(_parse_options(args.option))
    report = IngestReport()
    try:
        ingest_file(
            args.adapter,
            args.input,
            args.output,
            args.definition or "",
            dataset=args.dataset,
            split=args.split,
            task=args.task,
            strict=args.strict,
            report=report,
            **opts,
        )
    except IngestError as exc:
        _eprint(f"{args.input}: {exc}")
        return 1
    for d in report.diagnostics:
        _eprint(f"{args.input}:{d.line_no}: {d.code}: {d.reason}")
    summary = report.to_json()
    summary.pop("diagnostics")
    _eprint(_dump(summary))
    return 0


def cmd_manifest(args: argparse.Namespace) -> int:
    manifest = build_manifest(args.files)
    if args.output:
        manifest.save(args.output)
    else:
        print(json.dumps(manifest.to_json(), indent=2))
    _eprint(f"{len(manifest.entries)} entries, {manifest.total} records")
    return 0


def cmd_ssl_gen(args: argparse.Namespace) -> int:
    report = generate_files(
        args.kind, args.input, args.output, args.provenance, global_seed=args.seed, workers=args.workers
    )
    _eprint(_dump(report.to_json()))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    manifest = CorpusManifest.load(args.manifest)
    stats = corpus_stats(manifest, include_ssl=not args.no_ssl, split=args.split)
    print(_dump(stats.to_json()))
    _eprint(stats.table())
    if args.expect_total is not None:
        check = check_total(manifest, args.expect_total)
        if not check.ok:
            _eprint(f"total mismatch: actual {check.actual}, expected {check.expected}")
            return 1
        _eprint(f"total check passed: {check.actual}")
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    manifest = CorpusManifest.load(args.manifest)
    order = None
    if args.task_order:
        order = tuple(TaskToken.parse(t) for t in args.task_order)
    cfg = SchedulerConfig(step=args.step, seed=args.seed, epochs=args.epochs, task_order=order)
    start = Checkpoint.load(args.resume) if args.resume else None
    base_dir = Path(args.manifest).parent
    if args.output and args.output != "-":
        with open(args.output, "w", encoding="utf-8", newline="\n") as out:
            nxt = write_stream(manifest, cfg, out, start, args.max_blocks, base_dir)
    else:
        nxt = write_stream(manifest, cfg, sys.stdout, start, args.max_blocks, base_dir)
    if args.checkpoint:
        nxt.save(args.checkpoint)
    return 0


def _read_jsonl(path: str) -> list[Any]:
    items = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if line.strip():
                try:
                    items.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{line_no}: {exc.msg}") from exc
    return items


_TEXT_KEYS = ("text", "prediction", "reference", "target")
_STATE_KEYS = ("state", "slots", "belief_state")


def _as_text(item: Any) -> Any:
    if isinstance(item, dict):
        for key in _TEXT_KEYS:
            if key in item:
                return item[key]
        raise DataError(f"no text field in {item!r}")
    return item


def _as_pairs(item: Any) -> list[tuple[str, str]]:
    if isinstance(item, dict):
        for key in _STATE_KEYS:
            if key in item:
                return _as_pairs(item[key])
        return [(str(k), str(v)) for k, v in item.items()]
    if isinstance(item, list):
        return [(str(k), str(v)) for k, v in item]
    raise DataError(f"cannot read slot pairs from {item!r}")


def cmd_eval(args: argparse.Namespace) -> int:
    if args.metric == "combined":
        if args.inform is None or args.success is None:
            raise DataError("combined needs --inform and --success")
        bleu = args.bleu
        if bleu is None:
            if not (args.pred and args.ref):
                raise DataError("combined needs --bleu or --pred/--ref to compute it")
            preds = [_as_text(x) for x in _read_jsonl(args.pred)]
            refs = [_as_text(x) for x in _read_jsonl(args.ref)]
            bleu = bleu4(preds, refs)
        value = combined_score(args.inform, args.success, bleu)
        report = ScoreReport(
            "combined", value, 1, {**METRIC_VARIANTS["combined"], "inform": args.inform, "success": args.success, "bleu": bleu}
        )
    else:
        if not (args.pred and args.ref):
            raise DataError(f"{args.metric} needs --pred and --ref")
        preds = _read_jsonl(args.pred)
        refs = _read_jsonl(args.ref)
        if args.metric in ("f1", "jga"):
            preds = [_as_pairs(x) for x in preds]
            refs = [_as_pairs(x) for x in refs]
        else:
            preds = [_as_text(x) for x in preds]
            refs = [_as_text(x) for x in refs]
        report = score(args.metric, preds, refs)
    print(_dump(report.to_json()))
    return 0


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file supplying option defaults")
    common.add_argument("--print-config", action="store_true", help="print the resolved options to stderr")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dialunify", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check unified JSONL files")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("ingest", parents=[common], help="convert a raw dataset file to unified JSONL")
    p.add_argument("--adapter", required=True, choices=[a.value for a in ADAPTERS])
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--definition", help="one-sentence task definition")
    p.add_argument("--dataset", default="unknown")
    p.add_argument("--split", default="train", choices=["train", "dev", "test"])
    p.add_argument("--task", help="task token within the adapter's family")
    p.add_argument("--strict", action="store_true", help="abort on the first rejected line")
    p.add_argument("--option", action="append", default=[], metavar="KEY=JSON", help="adapter option")
    p.add_argument("--options-file", help="JSON object of adapter options")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("manifest", parents=[common], help="count records per (task, dataset, split)")
    p.add_argument("files", nargs="*")
    p.add_argument("--output")
    p.set_defaults(func=cmd_manifest)

    p = sub.add_parser("ssl-gen", parents=[common], help="generate reo/clo denoising records")
    p.add_argument("--kind", required=True, choices=["reo", "clo"])
    p.add_argument("--input", required=True, nargs="+")
    p.add_argument("--output", required=True)
    p.add_argument("--provenance", help="sidecar JSONL for provenance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ssl_gen)

    p = sub.add_parser("stats", parents=[common], help="per-task counts and proportions")
    p.add_argument("manifest")
    p.add_argument("--no-ssl", action="store_true", help="leave out reo/clo")
    p.add_argument("--split")
    p.add_argument("--expect-total", type=int)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("stream", parents=[common], help="emit task-iterative training batches")
    p.add_argument("--manifest", required=True)
    p.add_argument("--step", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--task-order", nargs="+")
    p.add_argument("--output", default="-")
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.add_argument("--checkpoint", help="write the next-block checkpoint here")
    p.add_argument("--max-blocks", type=int)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("eval", parents=[common], help="score predictions")
    p.add_argument("--metric", required=True, choices=list(METRIC_VARIANTS))
    p.add_argument("--pred")
    p.add_argument("--ref")
    p.add_argument("--inform", type=float)
    p.add_argument("--success", type=float)
    p.add_argument("--bleu", type=float)
    p.set_defaults(func=cmd_eval)
    return parser


def _subparser_names(parser: argparse.ArgumentParser) -> list[str]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return list(action.choices)
    return []


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    if known.config and command in _subparser_names(parser):
        sub = _subparser(parser, command)
        try:
            defaults = _config_defaults(sub, read_config(known.config))
        except (OSError, ValueError) as exc:
            parser.error(f"config: {exc}")
        sub.set_defaults(**defaults)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr)
    if args.print_config:
        resolved = {k: v for k, v in vars(args).items() if k != "func"}
        _eprint(_dump(resolved))
    try:
        return args.func(args)
    except (DataError, RecordFormatError, ManifestError, SchedulerError, MetricError, EmptyManifest) as exc:
        _eprint(f"error: {exc}")
        return 1
    except OSError as exc:
        _eprint(f"error: {exc}")
        return 1
    except ValueError as exc:
        _eprint(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
