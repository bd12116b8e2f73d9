import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60
)
settings.load_profile("default")

BUILTIN_PARAMS = {
    "ou-linear": dict(m=1.0, gamma=1.0, kBT=1.0, omega=1.0),
    "em1d": dict(m=1.0, e=1.0, gamma=2.0, kBT=1.0, gamma_amp=1.0, phi=1.0, mod_amp=0.5),
    "em2d": dict(m=1.0, e=1.0, B=1.0, gamma=2.0, kBT=1.0, gamma_amp=0.5),
    "manifold1d": dict(m=1.0, gamma=1.0, kBT=1.0),
    "manifold2d": dict(m=1.5, gamma=1.0, kBT=0.7, gamma_amp=0.3, mod_amp=0.3),
    "poly1d": dict(gamma=1.0, kBT=1.0, d3=0.05, k2=3),
    "nuclear1d": dict(c1=1.0, c2=1.0, m=1.0),
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at vector ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


# ---------------------------------------------------------------- acceptance reporting

import time
from contextlib import contextmanager
from types import SimpleNamespace

ACCEPTANCE = {}


@pytest.fixture
def criterion(capsys):
    """Record one acceptance criterion as a single PASS/FAIL line.

    Usage: ``with criterion(4, "strong rate") as rec: ...; rec.detail = "..."``.
    """

    @contextmanager
    def record(number, title):
        rec = SimpleNamespace(detail="")
        start = time.perf_counter()
        ok = False
        try:
            yield rec
            ok = True
        finally:
            line = (
                f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {rec.detail} "
                f"[{time.perf_counter() - start:.1f}s]"
            )
            ACCEPTANCE[number] = line
            with capsys.disabled():
                print("\n" + line, flush=True)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
