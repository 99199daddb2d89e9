import numpy as np
import pytest

from qglab.spectral import SpectralField, TorusGrid

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Register one acceptance line; the summary is printed at the end of the session."""

    def _record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, bool(passed), detail))

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def random_coeffs(grid: TorusGrid, rng: np.random.Generator, decay: float = 0.0) -> SpectralField:
    c = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
    if decay:
        c = c * (1.0 + grid.ksq) ** (-decay / 2)
    return SpectralField(grid, c)
