from collections import defaultdict

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: dict[int, list[tuple[bool, str]]] = defaultdict(list)
_TITLES: dict[int, str] = {}


class AcceptanceLog:
    def record(self, criterion: int, title: str, ok: bool, detail: str = "") -> None:
        _TITLES[criterion] = title
        _ACCEPTANCE[criterion].append((ok, detail))
        status = "PASS" if ok else "FAIL"
        print(f"[acceptance {criterion}] {status} {title}: {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[n]
        ok = all(r for r, _ in results)
        failed = [d for r, d in results if not r]
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {_TITLES[n]}"
        if failed:
            line += " | failing: " + "; ".join(failed)
        terminalreporter.write_line(line)
