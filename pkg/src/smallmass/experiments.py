"""Monte Carlo convergence studies in the mass parameter eps.

Each sweep runs coupled ensembles (see :func:`.sde.run_ensemble`) for a list
of ``eps`` values on grids with ``dt = eps / dt_rule`` and fits a log-log
slope to the per-eps estimates.

Report serialization
--------------------
``ConvergenceReport.to_json`` / ``EnergyReport.to_json`` write one object with
``schema_version``, every field of the dataclass and a ``config`` block of
run settings. ``to_csv`` writes the rows ``eps,value,stderr,aborted_fraction``
with a header line.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy import stats

from . import core
from .core import State
from .noise import TimeGrid
from .sde import DEFAULT_CHUNK, Scheme, run_ensemble

__all__ = [
    "Mode",
    "ConvergenceReport",
    "EnergyReport",
    "SCHEMA_VERSION",
    "fit_rate",
    "strong_error_sweep",
    "momentum_decay_sweep",
    "energy_boundedness",
    "grid_for",
]

SCHEMA_VERSION = 1


class Mode(enum.Enum):
    SUP_EXPECTATION = "SupExpectation"  # sup_t E|q_eps - q|^p
    EXPECTATION_SUP = "ExpectationSup"  # E sup_t |q_eps - q|^p


def fit_rate(xs, ys):
    """Least-squares line through ``(ln xs, ln ys)``.

    Returns
    -------
    slope, intercept, slope_stderr : float
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D of equal length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("xs and ys must be positive")
    lx = np.log(xs)
    if np.ptp(lx) == 0.0:
        raise ValueError("degenerate xs: zero variance")
    res = stats.linregress(lx, np.log(ys))
    return float(res.slope), float(res.intercept), float(res.stderr)


def grid_for(eps, T, dt_rule):
    """Grid on ``[0, T]`` with ``dt <= eps / dt_rule``."""
    return TimeGrid.from_dt(0.0, T, eps / dt_rule)


def _check_eps_list(eps_list):
    eps = np.asarray(eps_list, dtype=float)
    if eps.ndim != 1 or eps.size == 0:
        raise ValueError("eps_list must be a non-empty 1-D sequence")
    if np.any(eps <= 0):
        raise ValueError("eps values must be positive")
    if np.any(np.diff(eps) > 0):
        raise ValueError("eps_list must be non-increasing")
    return [float(e) for e in eps]


def _fit_or_nan(eps, vals):
    vals = np.asarray(vals)
    if len(set(eps)) < 3 or np.any(vals <= 0):
        return float("nan"), float("nan"), float("nan"), [float("nan")] * len(eps)
    slope, intercept, se = fit_rate(eps, vals)
    resid = np.log(vals) - (intercept + slope * np.log(eps))
    return slope, intercept, se, resid.tolist()


class _Serializable:
    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, enum.Enum):
                d[k] = v.value
        d["schema_version"] = SCHEMA_VERSION
        return d

    def to_json(self, path=None, indent=2):
        text = json.dumps(self.to_dict(), indent=indent, sort_keys=True, allow_nan=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {version}")
        return cls(**d)

    def _rows(self):
        raise NotImplementedError

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "value", "stderr", "aborted_fraction"])
            for row in self._rows():
                w.writerow([repr(float(x)) for x in row])


@dataclass
class ConvergenceReport(_Serializable):
    """Per-eps error estimates and the fitted rate ``error ~ eps^slope``.

    ``errors[i]`` estimates the target functional at ``eps_list[i]`` and
    ``stderr[i]`` is its Monte Carlo standard error. Slope fields are NaN
    when fewer than three distinct eps values were run. ``intercept`` is
    reported but carries no guarantee.
    """

    kind: str
    eps_list: List[float]
    p: float
    errors: List[float]
    stderr: List[float]
    slope: float
    slope_stderr: float
    intercept: float
    residuals: List[float]
    n_paths: int
    dt_rule: float
    aborted: List[float]
    mode: Optional[str] = None
    T: float = 1.0
    config: dict = field(default_factory=dict)

    @property
    def aborted_fraction(self):
        return max(self.aborted) if self.aborted else 0.0

    def _rows(self):
        return zip(self.eps_list, self.errors, self.stderr, self.aborted)


@dataclass
class EnergyReport(_Serializable):
    """``sup_t E[K^q]`` per eps and the max/min ratio across eps."""

    eps_list: List[float]
    q_order: float
    values: List[float]
    stderr: List[float]
    ratio: float
    n_paths: int
    dt_rule: float
    aborted: List[float]
    T: float = 1.0
    config: dict = field(default_factory=dict)

    @property
    def aborted_fraction(self):
        return max(self.aborted) if self.aborted else 0.0

    def _rows(self):
        return zip(self.eps_list, self.values, self.stderr, self.aborted)


# --------------------------------------------------------------------------
# observed quantities
# --------------------------------------------------------------------------


def _gap_power(p):
    def fn(spec, eps, t, q, pm, ql):
        return np.linalg.norm(q - ql, axis=-1) ** p

    return fn


def _u_power(p):
    def fn(spec, eps, t, q, pm, ql):
        return np.linalg.norm(pm - spec.psi(t, q), axis=-1) ** p

    return fn


def _kinetic_power(q_order):
    def fn(spec, eps, t, q, pm, ql):
        return core.eval_kinetic(spec, eps, State(t, q, pm)) ** q_order

    return fn


def _sup_expectation(st, name):
    i = int(np.argmax(st.mean[name]))
    return float(st.mean[name][i]), float(st.stderr(name)[i])


def _expectation_sup(st, name):
    v = st.path_sup[name][st.alive]
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def _common(n_paths, T, dt_rule):
    if n_paths < 100:
        raise ValueError(f"n_paths must be >= 100, got {n_paths}")
    if not T > 0:
        raise ValueError("T must be positive")
    if not dt_rule > 0:
        raise ValueError("dt_rule must be positive")


def _config(spec, **extra):
    cfg = {"system": spec.name, "params": dict(spec.params)}
    for k, v in extra.items():
        cfg[k] = v.value if isinstance(v, enum.Enum) else v
    return cfg


def _sweep(spec, eps_list, T, n_paths, dt_rule, quantities, with_limit, run_kw):
    out = []
    for eps in eps_list:
        st = run_ensemble(
            spec, eps, grid_for(eps, T, dt_rule), n_paths,
            quantities=quantities, with_limit=with_limit, **run_kw,
        )
        out.append(st)
    return out


def strong_error_sweep(
    spec,
    eps_list,
    p=2.0,
    T=1.0,
    n_paths=10_000,
    mode=Mode.SUP_EXPECTATION,
    *,
    master_seed=0,
    dt_rule=20.0,
    scheme=Scheme.EXPLICIT_EM,
    q0=None,
    include_noise_drift=True,
    substeps=1,
    threads=None,
    chunk_size=DEFAULT_CHUNK,
):
    """Strong error between the full system and its limit, per eps.

    ``SupExpectation`` takes the largest per-time Monte Carlo mean of
    ``|q_eps - q|^p`` over the grid; ``ExpectationSup`` averages per-path
    grid maxima. Both legs start from ``q0`` with ``p = psi(0, q0)``.

    Raises
    ------
    ExperimentInvalid
        Some eps lost more than 1% of its paths to blow-up.
    """
    mode = Mode(mode)
    eps_list = _check_eps_list(eps_list)
    _common(n_paths, T, dt_rule)
    run_kw = dict(
        master_seed=master_seed, scheme=scheme, q0=q0, include_noise_drift=include_noise_drift,
        substeps=substeps, threads=threads, chunk_size=chunk_size,
    )
    runs = _sweep(spec, eps_list, T, n_paths, dt_rule, {"gap": _gap_power(p)}, True, run_kw)
    pick = _sup_expectation if mode is Mode.SUP_EXPECTATION else _expectation_sup
    vals = [pick(st, "gap") for st in runs]
    errors = [v[0] for v in vals]
    slope, intercept, se, resid = _fit_or_nan(eps_list, errors)
    return ConvergenceReport(
        kind="strong_error",
        eps_list=eps_list,
        p=float(p),
        errors=errors,
        stderr=[v[1] for v in vals],
        slope=slope,
        slope_stderr=se,
        intercept=intercept,
        residuals=resid,
        n_paths=int(n_paths),
        dt_rule=float(dt_rule),
        aborted=[st.aborted_fraction for st in runs],
        mode=mode.value,
        T=float(T),
        config=_config(
            spec, master_seed=int(master_seed), scheme=Scheme(scheme), substeps=int(substeps),
            include_noise_drift=bool(include_noise_drift),
            q0=None if q0 is None else np.asarray(q0, dtype=float).tolist(),
        ),
    )


def momentum_decay_sweep(
    spec,
    eps_list,
    p=2.0,
    T=1.0,
    n_paths=10_000,
    *,
    master_seed=0,
    dt_rule=20.0,
    scheme=Scheme.EXPLICIT_EM,
    q0=None,
    p0=None,
    threads=None,
    chunk_size=DEFAULT_CHUNK,
):
    """``sup_t E|p_eps - psi(t, q_eps)|^p`` per eps (full system only)."""
    eps_list = _check_eps_list(eps_list)
    _common(n_paths, T, dt_rule)
    run_kw = dict(
        master_seed=master_seed, scheme=scheme, q0=q0, p0=p0, threads=threads,
        chunk_size=chunk_size,
    )
    runs = _sweep(spec, eps_list, T, n_paths, dt_rule, {"u": _u_power(p)}, False, run_kw)
    vals = [_sup_expectation(st, "u") for st in runs]
    errors = [v[0] for v in vals]
    slope, intercept, se, resid = _fit_or_nan(eps_list, errors)
    return ConvergenceReport(
        kind="momentum_decay",
        eps_list=eps_list,
        p=float(p),
        errors=errors,
        stderr=[v[1] for v in vals],
        slope=slope,
        slope_stderr=se,
        intercept=intercept,
        residuals=resid,
        n_paths=int(n_paths),
        dt_rule=float(dt_rule),
        aborted=[st.aborted_fraction for st in runs],
        mode=Mode.SUP_EXPECTATION.value,
        T=float(T),
        config=_config(
            spec, master_seed=int(master_seed), scheme=Scheme(scheme),
            q0=None if q0 is None else np.asarray(q0, dtype=float).tolist(),
            p0=None if p0 is None else np.asarray(p0, dtype=float).tolist(),
        ),
    )


def energy_boundedness(
    spec,
    eps_list,
    q_order=1.0,
    T=1.0,
    n_paths=10_000,
    *,
    master_seed=0,
    dt_rule=20.0,
    scheme=Scheme.EXPLICIT_EM,
    q0=None,
    p0=None,
    threads=None,
    chunk_size=DEFAULT_CHUNK,
):
    """``sup_t E[K_eps(t, x_t)^q_order]`` per eps and its max/min ratio."""
    eps_list = _check_eps_list(eps_list)
    _common(n_paths, T, dt_rule)
    run_kw = dict(
        master_seed=master_seed, scheme=scheme, q0=q0, p0=p0, threads=threads,
        chunk_size=chunk_size,
    )
    runs = _sweep(spec, eps_list, T, n_paths, dt_rule, {"K": _kinetic_power(q_order)}, False, run_kw)
    vals = [_sup_expectation(st, "K") for st in runs]
    values = [v[0] for v in vals]
    lo = min(values)
    ratio = max(values) / lo if lo > 0 else float("inf")
    return EnergyReport(
        eps_list=eps_list,
        q_order=float(q_order),
        values=values,
        stderr=[v[1] for v in vals],
        ratio=float(ratio),
        n_paths=int(n_paths),
        dt_rule=float(dt_rule),
        aborted=[st.aborted_fraction for st in runs],
        T=float(T),
        config=_config(
            spec, master_seed=int(master_seed), scheme=Scheme(scheme),
            q0=None if q0 is None else np.asarray(q0, dtype=float).tolist(),
            p0=None if p0 is None else np.asarray(p0, dtype=float).tolist(),
        ),
    )
