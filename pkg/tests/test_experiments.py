import csv
import json

import numpy as np
import pytest

from smallmass.errors import ExperimentInvalid
from smallmass.experiments import (
    ConvergenceReport, EnergyReport, Mode, energy_boundedness, fit_rate, momentum_decay_sweep,
    strong_error_sweep,
)
from smallmass.registry import make_builtin

OU = dict(m=1.0, gamma=1.0, kBT=1.0, omega=1.0)
EPS6 = [2.0**-k for k in range(4, 10)]


def ou(**kw):
    return make_builtin("ou-linear", {**OU, **kw})


def noiseless(spec):
    return spec.replace(sigma=lambda t, q, p: np.zeros(np.shape(q) + (spec.k,)))


# ---------------------------------------------------------------- fit_rate

def test_fit_identity():
    xs = np.array([0.1, 0.2, 0.4, 0.8])
    slope, intercept, se = fit_rate(xs, xs)
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert intercept == pytest.approx(0.0, abs=1e-12)


def test_fit_quadratic():
    xs = np.geomspace(1e-3, 1, 7)
    assert fit_rate(xs, 3.0 * xs**2)[0] == pytest.approx(2.0, abs=1e-12)


def test_fit_noisy_synthetic(rng):
    xs = np.geomspace(1e-4, 1, 20)
    ys = xs**0.5 * (1 + 0.01 * rng.standard_normal(xs.size))
    slope, _, se = fit_rate(xs, ys)
    assert 0.45 <= slope <= 0.55
    assert se < 0.01


@pytest.mark.parametrize("xs,ys", [([1, 2], [1, 2]), ([1, 1, 1], [1, 2, 3]), ([1, 2, 3], [1, 0, 2])])
def test_fit_rejects_bad_input(xs, ys):
    with pytest.raises(ValueError):
        fit_rate(xs, ys)


# ---------------------------------------------------------------- strong_error_sweep

def test_ou_strong_rate():
    rep = strong_error_sweep(ou(), EPS6, p=2, T=1, n_paths=10_000, master_seed=2024, q0=[0.5])
    assert 0.85 <= rep.slope <= 1.15
    assert all(e >= 0 for e in rep.errors)
    assert rep.aborted_fraction == 0.0


def test_deterministic_errors_decrease():
    rep = strong_error_sweep(noiseless(ou()), [0.1, 0.05, 0.02, 0.01], n_paths=100, q0=[1.0])
    assert all(a > b for a, b in zip(rep.errors, rep.errors[1:]))
    assert max(rep.stderr) == pytest.approx(0.0, abs=1e-15)


def test_repeated_eps_identical():
    rep = strong_error_sweep(ou(), [0.1, 0.1], n_paths=200, master_seed=3, q0=[0.5])
    assert rep.errors[0] == rep.errors[1]
    assert np.isnan(rep.slope)


def test_expectation_sup_dominates():
    a = strong_error_sweep(ou(), [0.2, 0.1, 0.05], n_paths=300, master_seed=1, q0=[0.5])
    b = strong_error_sweep(ou(), [0.2, 0.1, 0.05], n_paths=300, master_seed=1, q0=[0.5], mode=Mode.EXPECTATION_SUP)
    assert all(y >= x for x, y in zip(a.errors, b.errors))
    assert b.mode == "ExpectationSup"


def test_stderr_halves_with_quadrupled_paths():
    """Doubling study: stderr shrinks like 1/sqrt(n)."""
    se = [
        strong_error_sweep(ou(), [0.1], n_paths=n, master_seed=5, q0=[0.5]).stderr[0]
        for n in (500, 1000, 2000)
    ]
    for a, b in zip(se, se[1:]):
        assert a / b == pytest.approx(np.sqrt(2), rel=0.2)


def test_sweep_argument_checks():
    with pytest.raises(ValueError):
        strong_error_sweep(ou(), [0.1], n_paths=50)
    with pytest.raises(ValueError):
        strong_error_sweep(ou(), [0.05, 0.1], n_paths=100)
    with pytest.raises(ValueError):
        strong_error_sweep(ou(), [0.1, -0.1], n_paths=100)


def test_abort_budget_enforced():
    spec = ou().replace(F=lambda t, q, p: np.where(q > 0.5, np.nan, 0.0))
    with pytest.raises(ExperimentInvalid) as info:
        strong_error_sweep(spec, [0.1], n_paths=100, q0=[0.3])
    assert info.value.aborted_fraction > 0.01


# ---------------------------------------------------------------- momentum

def test_ou_momentum_rate():
    rep = momentum_decay_sweep(ou(), [0.2, 0.1, 0.05, 0.025, 0.0125], n_paths=2000, master_seed=7, p0=[0.0])
    assert 0.85 <= rep.slope <= 1.15


def test_momentum_trivially_zero():
    spec = noiseless(make_builtin("ou-linear", {**OU, "omega": 1.0})).replace(
        V=None, grad_V=None
    )
    rep = momentum_decay_sweep(spec, [0.1, 0.05, 0.02], n_paths=100, q0=[0.3], p0=[0.0])
    assert rep.errors == [0.0, 0.0, 0.0]
    assert np.isnan(rep.slope)


def test_momentum_stationary_variance():
    eps = 0.05
    rep = momentum_decay_sweep(ou(), [eps], T=3.0, n_paths=4000, master_seed=11)
    # explicit stepping inflates the stationary variance by 1/(1 - a dt/2), a = gamma/(eps m)
    oracle = eps * OU["m"] * OU["kBT"] / (1 - 0.5 / 20)
    assert abs(rep.errors[0] - oracle) < 5 * rep.stderr[0] + 0.02 * oracle


# ---------------------------------------------------------------- energy

def test_ou_energy_flat():
    rep = energy_boundedness(ou(), [0.1, 0.01, 0.001], n_paths=400, master_seed=2, q0=[1.0])
    assert rep.ratio <= 2.0


def test_energy_dissipative_decay():
    spec = noiseless(ou()).replace(V=None, grad_V=None)
    rep = energy_boundedness(spec, [0.1, 0.05, 0.02], n_paths=100, p0=[0.3])
    for eps, v in zip(rep.eps_list, rep.values):
        assert v <= 0.3**2 / (2 * eps) * (1 + 1e-12)


def test_energy_equipartition():
    rep = energy_boundedness(ou(), [0.1, 0.05], T=3.0, n_paths=4000, master_seed=3)
    # started at rest, E[K] rises to kBT/2 (times the explicit-step inflation); sup picks the top
    for v, se in zip(rep.values, rep.stderr):
        assert v == pytest.approx(0.5 / (1 - 0.5 / 20), abs=5 * se + 0.02)


# ---------------------------------------------------------------- serialization

def test_report_roundtrip(tmp_path):
    rep = strong_error_sweep(ou(), [0.2, 0.1, 0.05], n_paths=100, master_seed=4, q0=[0.5])
    path = tmp_path / "r.json"
    rep.to_json(path)
    data = json.loads(path.read_text())
    assert data["schema_version"] == 1
    back = ConvergenceReport.from_dict(data)
    assert back.errors == rep.errors and back.slope == rep.slope
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["eps", "value", "stderr", "aborted_fraction"]
    assert [float(r[1]) for r in rows[1:]] == rep.errors
    with pytest.raises(ValueError):
        ConvergenceReport.from_dict({**data, "schema_version": 99})


def test_energy_report_roundtrip():
    rep = energy_boundedness(ou(), [0.1, 0.05], n_paths=100)
    back = EnergyReport.from_dict(json.loads(rep.to_json()))
    assert back.values == rep.values
