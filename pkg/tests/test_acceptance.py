"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The Monte Carlo criteria use 10^4 paths and take several minutes in total.
"""
import time

import numpy as np
import pytest

from smallmass.core import NuclearLog, PolynomialRadial, Quadratic, SystemSpec
from smallmass.experiments import energy_boundedness, momentum_decay_sweep, strong_error_sweep
from smallmass.homogenize import j_matrix, limiting_coeffs
from smallmass.linalg import LyapunovProblem, lyap_quadrature, lyap_solve, stability_margin, sym
from smallmass.noise import TimeGrid
from smallmass.registry import benchmark_system, builtin_names, make_builtin
from smallmass.sde import run_ensemble
from smallmass.validate import check_assumptions

from conftest import BUILTIN_PARAMS

EPS = [2.0**-k for k in range(4, 10)]
N_PATHS = 10_000
SEED = 2024
WINDOW = (0.85, 1.15)
POLY = PolynomialRadial((0.5, 0.1), 1)


def in_window(slope):
    return WINDOW[0] <= slope <= WINDOW[1]


def rel_change(a, b):
    return abs(a - b) / b


# ---------------------------------------------------------------- random specs

def _spd(rng, n, floor=0.3):
    L = rng.normal(size=(n, n))
    return L @ L.T / n + floor * np.eye(n)


def _random_drag(rng, n):
    G0 = _spd(rng, n)
    amp = rng.uniform(0, 0.25 * np.linalg.eigvalsh(G0)[0], n)
    phase = rng.uniform(0, 2 * np.pi, n)

    def gamma(t, q):
        q = np.asarray(q, dtype=float)
        return G0 + (amp * np.sin(q + phase))[..., None] * np.eye(n)

    return gamma


def _random_psi(rng, n):
    M = rng.normal(size=(n, n))
    c = rng.normal(size=n)
    return lambda t, q: np.einsum("ij,...j->...i", M, q) + 0.3 * np.sin(q + c)


def _fd_spec(rng, n, A, kBT):
    gamma = _random_drag(rng, n)

    def sigma(t, q, p):
        return np.linalg.cholesky(2.0 * kBT * gamma(t, q))

    return SystemSpec(n=n, kinetic=Quadratic(), A=A, gamma=gamma, sigma=sigma, psi=_random_psi(rng, n))


# ---------------------------------------------------------------- 1-3, 9: algebra

def test_criterion_01_lyapunov_identity(criterion):
    with criterion(1, "J = kBT I for A = I, Sigma = 2 kBT gamma") as rec:
        rng = np.random.default_rng(1)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 5))
            kBT = rng.uniform(0.2, 3.0)
            eye = np.eye(n)
            spec = _fd_spec(rng, n, lambda t, q, e=eye: np.broadcast_to(e, np.shape(q)[:-1] + e.shape), kBT)
            q = rng.uniform(-2, 2, n)
            worst = max(worst, np.linalg.norm(j_matrix(spec, rng.uniform(), q) - kBT * eye))
        elapsed = time.perf_counter() - start
        rec.detail = f"max Frobenius deviation {worst:.2e} over 50 specs in {elapsed:.2f}s"
        assert worst <= 1e-8
        assert elapsed < 5


def test_criterion_02_manifold_identity(criterion):
    with criterion(2, "J = kBT g for A = g^-1 diagonal") as rec:
        rng = np.random.default_rng(2)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 5))
            kBT = rng.uniform(0.2, 3.0)
            base = rng.uniform(0.3, 3.0, n)
            amp = rng.uniform(-0.8, 0.8, n)

            def g_diag(q, base=base, amp=amp):
                return base * (1 + amp * np.sin(np.asarray(q, dtype=float)))

            def A(t, q, n=n, g_diag=g_diag):
                return (1.0 / g_diag(q))[..., None] * np.eye(n)

            spec = _fd_spec(rng, n, A, kBT)
            q = rng.uniform(-2, 2, n)
            worst = max(worst, np.linalg.norm(j_matrix(spec, 0.0, q) - kBT * np.diag(g_diag(q))))
        elapsed = time.perf_counter() - start
        rec.detail = f"max Frobenius deviation {worst:.2e} over 50 specs in {elapsed:.2f}s"
        assert worst <= 1e-8
        assert elapsed < 5


def test_criterion_03_lyapunov_oracle(criterion):
    with criterion(3, "direct Lyapunov solve vs quadrature") as rec:
        rng = np.random.default_rng(3)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(1, 7))
            W = rng.normal(size=(n, n))
            B = _spd(rng, n, 0.2) + (W - W.T)
            R = _spd(rng, n, 0.1)
            prob = LyapunovProblem(B, R)
            worst = max(worst, np.linalg.norm(lyap_solve(prob) - lyap_quadrature(prob)))
        elapsed = time.perf_counter() - start
        rec.detail = f"max Frobenius gap {worst:.2e} over 200 problems in {elapsed:.1f}s"
        assert worst <= 1e-8
        assert elapsed < 30


def test_criterion_09_spectral_lemmas(criterion):
    with criterion(9, "spectral margin bounds on 1000 draws each") as rec:
        rng = np.random.default_rng(9)
        start = time.perf_counter()
        worst = {"symmetric floor": 0.0, "product": 0.0, "inverse": 0.0}
        for _ in range(1000):
            n = int(rng.integers(1, 7))
            M = rng.normal(size=(n, n))
            worst["symmetric floor"] = max(worst["symmetric floor"], np.linalg.eigvalsh(sym(M))[0] - stability_margin(M))

            A = _spd(rng, n, 0.05)
            W = rng.normal(size=(n, n))
            B = _spd(rng, n, 0.05) + (W - W.T)
            bound = np.linalg.eigvalsh(A)[0] * np.linalg.eigvalsh(sym(B))[0]
            worst["product"] = max(worst["product"], bound - stability_margin(A @ B))

            lam = np.linalg.eigvalsh(sym(B))[0]
            Binv = np.linalg.inv(B)
            floor = np.linalg.eigvalsh(sym(Binv))[0]
            worst["inverse"] = max(worst["inverse"], lam / np.linalg.norm(B, 2) ** 2 - floor)
        elapsed = time.perf_counter() - start
        rec.detail = ", ".join(f"{k} bound worst violation {max(v, 0):.1e}" for k, v in worst.items()) + f" in {elapsed:.1f}s"
        assert all(v <= 1e-10 for v in worst.values())
        assert elapsed < 10


# ---------------------------------------------------------------- 4-8: rates

@pytest.fixture(scope="module")
def benchmark_sweep():
    # noise drawn on the eps/40 grid so the finest point pairs with the halved-dt run
    return strong_error_sweep(benchmark_system(), EPS, 2, 1.0, N_PATHS, master_seed=SEED, dt_rule=20, substeps=2)


def test_criterion_04_strong_rate(criterion, benchmark_sweep):
    with criterion(4, "strong rate, benchmark, SupExpectation p=2") as rec:
        rep = benchmark_sweep
        half = strong_error_sweep(benchmark_system(), EPS[-1:], 2, 1.0, N_PATHS, master_seed=SEED, dt_rule=40)
        change = rel_change(rep.errors[-1], half.errors[0])
        rec.detail = (
            f"slope {rep.slope:.3f} +/- {rep.slope_stderr:.3f}; "
            f"dt-halving change at eps=2^-9 {100 * change:.1f}%"
        )
        assert rep.aborted_fraction == 0.0
        assert in_window(rep.slope)
        assert change < 0.10


def test_criterion_05_noise_drift_needed(criterion, benchmark_sweep):
    with criterion(5, "dropping the noise-induced drift breaks convergence") as rec:
        rep = strong_error_sweep(
            benchmark_system(), EPS, 2, 1.0, N_PATHS, master_seed=SEED, dt_rule=20, substeps=2,
            include_noise_drift=False,
        )
        gap = benchmark_sweep.slope - rep.slope
        plateau = rep.errors[-1] / rep.errors[-2]
        rec.detail = (
            f"slope without S {rep.slope:.3f}, with S {benchmark_sweep.slope:.3f}, gap {gap:.3f}; "
            f"last error ratio {plateau:.3f}"
        )
        assert rep.slope < 0.5 or plateau > 0.9
        assert gap >= 0.3


def test_criterion_06_momentum_decay(criterion):
    with criterion(6, "momentum decay, benchmark, p=2") as rep_line:
        rep = momentum_decay_sweep(benchmark_system(), EPS, 2, 1.0, N_PATHS, master_seed=SEED)
        rep_line.detail = f"slope {rep.slope:.3f} +/- {rep.slope_stderr:.3f}"
        assert in_window(rep.slope)


def test_criterion_07_energy_bounded(criterion):
    with criterion(7, "sup_t E[K] flat in eps") as rec:
        rep = energy_boundedness(benchmark_system(), [0.1, 0.01, 0.001], 1, 1.0, N_PATHS, master_seed=SEED)
        rec.detail = f"values {', '.join(f'{v:.4f}' for v in rep.values)}; max/min {rep.ratio:.3f}"
        assert rep.ratio <= 2.0


def test_criterion_08_kinetic_independence(criterion):
    with criterion(8, "limit independent of the kinetic profile") as rec:
        q = np.linspace(-3, 3, 41)[:, None]
        models = [Quadratic(1.0), POLY, NuclearLog(1.0, 1.0, 1.0)]
        outs = [limiting_coeffs(benchmark_system(m), 0.3, q) for m in models]
        fields = ("gamma_tilde", "gamma_tilde_inv", "Q", "J", "S", "limiting_drift", "limiting_diffusion")
        identical = all(np.array_equal(getattr(outs[0], f), getattr(o, f)) for o in outs[1:] for f in fields)

        spec = benchmark_system(POLY)
        stated = strong_error_sweep(spec, EPS, 2, 1.0, N_PATHS, master_seed=SEED, dt_rule=20)
        # the polynomial profile relaxes faster than the quadratic one and needs a finer
        # step before the errors are eps-dominated; check that regime as well
        fine = strong_error_sweep(spec, EPS, 2, 1.0, 2000, master_seed=SEED, dt_rule=80, substeps=2)
        half = strong_error_sweep(spec, EPS[-1:], 2, 1.0, 2000, master_seed=SEED, dt_rule=160)
        change = rel_change(fine.errors[-1], half.errors[0])
        rec.detail = (
            f"coefficients bitwise identical: {identical}; polynomial slope at dt=eps/20 "
            f"{stated.slope:.3f} +/- {stated.slope_stderr:.3f}; at dt=eps/80 {fine.slope:.3f} "
            f"+/- {fine.slope_stderr:.3f} with dt-halving change {100 * change:.1f}%"
        )
        assert identical
        assert in_window(stated.slope)
        assert in_window(fine.slope)
        assert change < 0.10


# ---------------------------------------------------------------- 10: Gibbs law

def test_criterion_10_gibbs(criterion):
    with criterion(10, "ou-linear stationary law") as rec:
        m, gamma, kBT, omega, eps = 1.5, 1.0, 0.8, 1.3, 0.1
        spec = make_builtin("ou-linear", dict(m=m, gamma=gamma, kBT=kBT, omega=omega))
        grid = TimeGrid.from_dt(0.0, 6.0, eps / 100)
        st = run_ensemble(
            spec, eps, grid, N_PATHS, SEED,
            {
                "q": lambda s, e, t, q, p, ql: q[:, 0],
                "q2": lambda s, e, t, q, p, ql: q[:, 0] ** 2,
                "u2": lambda s, e, t, q, p, ql: p[:, 0] ** 2,
                "K": lambda s, e, t, q, p, ql: p[:, 0] ** 2 / (2 * e * m),
            },
            with_limit=False,
        )
        checks = {
            "Var(q)": (st.mean["q2"][-1] - st.mean["q"][-1] ** 2, kBT / omega**2, st.stderr("q2")[-1]),
            "E[K]": (st.mean["K"][-1], kBT / 2, st.stderr("K")[-1]),
            "E[u^2]": (st.mean["u2"][-1], eps * m * kBT, st.stderr("u2")[-1]),
        }
        rec.detail = "; ".join(
            f"{k} {v:.4f} vs {o:.4f} ({abs(v - o) / se:.1f} se)" for k, (v, o, se) in checks.items()
        )
        for v, o, se in checks.values():
            assert abs(v - o) <= 3 * se


# ---------------------------------------------------------------- 11: validator

def _random_params(rng, name):
    """A draw from the documented parameter ranges of a builtin."""
    pos = lambda lo=0.5, hi=2.0: float(rng.uniform(lo, hi))
    sym = lambda a: float(rng.uniform(-a, a))
    gamma = pos()
    common = dict(gamma=gamma, kBT=pos(), gamma_amp=sym(0.9 * gamma), kappa=pos(0.2, 2.0))
    if name == "ou-linear":
        return dict(m=pos(), gamma=gamma, kBT=pos(), omega=pos())
    if name == "em1d":
        return dict(common, m=pos(), e=sym(2), phi=sym(1), mod_amp=sym(0.9), mod_freq=pos())
    if name == "em2d":
        return dict(common, m=pos(), e=sym(2), B=sym(2))
    if name in ("manifold1d", "manifold2d"):
        return dict(common, m=pos(), g0=pos(), g_amp=sym(0.9), mod_amp=sym(0.9), mod_freq=pos())
    if name == "poly1d":
        k1 = int(rng.integers(1, 3))
        k2 = int(rng.integers(k1, 5))
        d = {f"d{j}": (pos(0.05, 1.0) if k1 <= j <= k2 else 0.0) for j in range(1, 5)}
        return dict(common, k1=k1, k2=k2, mod_amp=sym(0.9), mod_freq=pos(), **d)
    if name == "nuclear1d":
        return dict(common, c1=pos(), c2=pos(), m=pos(), scaling=str(rng.choice(["ZetaScaled", "Unscaled"])))
    raise KeyError(name)


def test_criterion_11_validator(criterion):
    with criterion(11, "validator passes builtins, catches seeded failures") as rec:
        rng = np.random.default_rng(11)
        failed = []
        checked = 0
        for name in builtin_names():
            for params in (BUILTIN_PARAMS[name], _random_params(rng, name), _random_params(rng, name)):
                rep = check_assumptions(make_builtin(name, params), samples=2000)
                checked += 1
                if not rep.passed:
                    failed.append((name, params, [e.id for e in rep.failures()]))

        poly = check_assumptions(benchmark_system(PolynomialRadial((0.5, 0.0), 1)), samples=2000)
        top = poly.entry("K.poly_floor")

        def decaying(t, q):
            q = np.asarray(q, dtype=float)
            out = np.zeros(q.shape + (2,))
            out[..., 0, 0] = 1.0
            out[..., 1, 1] = np.exp(-q[..., 1] ** 2)
            return out

        spec = make_builtin("em2d", dict(m=1, e=1, B=0.0, gamma=1, kBT=1)).replace(gamma=decaying, dgamma=None)
        drag = check_assumptions(spec, samples=2000).entry("A2.2")
        rec.detail = (
            f"{checked - len(failed)}/{checked} builtin configurations pass; "
            f"zero top coefficient -> {top.status} (witness {top.witness}); "
            f"decaying drag -> {drag.status} (witness q={drag.witness and [round(x, 2) for x in drag.witness['q']]})"
        )
        assert not failed, failed
        assert top.status == "fail" and top.witness
        assert drag.status == "fail" and drag.witness and abs(drag.witness["q"][1]) > 3
