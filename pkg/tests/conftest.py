import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, d, jitter=0.1):
    A = rng.standard_normal((d, d))
    return A @ A.T + jitter * np.eye(d)


# --- acceptance reporting ---------------------------------------------------------

ACCEPTANCE_TITLES = {
    1: "discrete Fourier identities and summation by parts",
    2: "moments of squared spectral statistics",
    3: "efficiency table reproduction",
    4: "feasible CLT coverage",
    5: "matrix algebra",
    6: "cross-theorem consistency",
    7: "synchronization robustness",
    8: "n^(1/4) rate",
}
_ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """``criterion(number, passed, detail)`` records one sub-check of an acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title in ACCEPTANCE_TITLES.items():
        checks = _ACCEPTANCE.get(number)
        if not checks:
            tr.write_line(f"criterion {number} ({title}): NOT RUN")
            continue
        verdict = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {number} ({title}): {verdict}")
        for ok, detail in checks:
            tr.write_line(f"    [{'ok' if ok else 'x '}] {detail}")
