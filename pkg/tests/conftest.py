import numpy as np
import pytest

from tangent_harmonic.analysis import extended_field3
from tangent_harmonic.fields import EquivariantLift
from tangent_harmonic.solvers import solve_reduced_multilevel


def hedgehog(x):
    x = np.asarray(x, float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def constant_e3(x):
    x = np.asarray(x, float)
    return np.broadcast_to([0.0, 0.0, 1.0], x.shape).copy()


@pytest.fixture(scope="session")
def reduced_minimizers():
    """Reduced minimizers at m = 128, 256, 512 with their traces."""
    out = {}
    for m in (128, 256, 512):
        out[m] = solve_reduced_multilevel(m)
    return out


@pytest.fixture(scope="session")
def minimizer512(reduced_minimizers):
    return reduced_minimizers[512][0]


@pytest.fixture(scope="session")
def extended_minimizer(minimizer512):
    """Inversion-extended lift of the m = 512 minimizer on a 128^3 grid, R = 1.3."""
    return extended_field3(EquivariantLift(minimizer512), 128, 1.3)


# acceptance results: {criterion: {part: (ok, detail)}}
ACCEPTANCE = {}


def record(criterion, part, ok, detail=""):
    ACCEPTANCE.setdefault(criterion, {})[part] = (bool(ok), detail)
    print(f"criterion {criterion} [{part}]: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p[0] for p in parts.values())
        detail = "; ".join(f"{k}: {'ok' if v[0] else 'FAILED'} {v[1]}".rstrip() for k, v in parts.items())
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
