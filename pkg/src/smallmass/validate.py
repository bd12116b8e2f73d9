"""Sampled audits of the hypotheses behind the small-mass limit.

Global bounds such as "gamma has eigenvalues >= lambda > 0 everywhere"
cannot be decided numerically. The checks here sample ``(t, q, z, eps)``
from a box, split the ``q`` and ``z`` samples into radial shells and look
for trends across shells: a floor that keeps shrinking or a ratio that
keeps growing towards the boundary is reported as a failure with the worst
sampled point as witness. A pass only certifies the sampled region.

Here ``z = (p - psi(t, q)) / sqrt(eps)`` and ``K(t, q, z) = Ktilde(eps, t, A z.z)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import core
from .core import PolynomialRadial, State
from .linalg import spd_floor, sym

__all__ = [
    "Box",
    "AssumptionEntry",
    "AssumptionReport",
    "ConfinementResult",
    "LyapunovTrace",
    "check_assumptions",
    "confinement_check",
    "lyapunov_diagnostic",
]

N_SHELLS = 4
GROWTH = 1.2  # per-shell increase of a supposedly bounded ratio that counts as growth
FLOOR_DECAY = 1e-3  # outer/inner shell ratio of a floor that counts as decay
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Box:
    """Sampling region: ``t`` in ``[t0, T]``, each ``q`` and ``z`` coordinate in the given range."""

    t0: float = 0.0
    T: float = 1.0
    q: Tuple[float, float] = (-5.0, 5.0)
    z: Tuple[float, float] = (-5.0, 5.0)

    def __post_init__(self):
        for name in ("q", "z"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise ValueError(f"box.{name} must be a finite interval, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if not (np.isfinite(self.t0) and np.isfinite(self.T) and self.T >= self.t0):
            raise ValueError("box needs finite t0 <= T")


@dataclass
class AssumptionEntry:
    id: str
    description: str
    status: str  # "pass" | "fail" | "unchecked"
    witness: Optional[dict] = None
    constants: dict = field(default_factory=dict)
    note: str = ""


@dataclass
class AssumptionReport:
    """Per-hypothesis results plus the sampling that produced them."""

    system: str
    entries: List[AssumptionEntry]
    sampling: dict
    evaluation_failures: List[dict] = field(default_factory=list)
    caveats: List[str] = field(default_factory=list)

    @property
    def passed(self):
        """No entry failed (unchecked entries do not count against)."""
        return all(e.status != "fail" for e in self.entries)

    def entry(self, id):
        for e in self.entries:
            if e.id == id:
                return e
        raise KeyError(id)

    def failures(self):
        return [e for e in self.entries if e.status == "fail"]

    def to_dict(self):
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        d["passed"] = self.passed
        return d

    def to_json(self, path=None, indent=2):
        text = json.dumps(_jsonable(self.to_dict()), indent=indent, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def table(self):
        """Plain-text summary, one row per entry."""
        rows = [f"{'id':<14} {'status':<10} detail"]
        for e in self.entries:
            detail = ", ".join(f"{k}={_fmt(v)}" for k, v in e.constants.items())
            if e.status == "fail" and e.witness:
                detail = (detail + "; " if detail else "") + "witness " + _fmt_witness(e.witness)
            elif e.note and not detail:
                detail = e.note
            rows.append(f"{e.id:<14} {e.status:<10} {detail}")
        return "\n".join(rows)


def _fmt(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def _fmt_witness(w):
    return "{" + ", ".join(f"{k}: {_fmt(v) if not isinstance(v, list) else [round(x, 4) for x in v]}" for k, v in w.items()) + "}"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


@dataclass
class _Samples:
    t: np.ndarray
    q: np.ndarray
    z: np.ndarray
    eps: np.ndarray
    q_shell: np.ndarray
    z_shell: np.ndarray


def _shell_points(rng, N, n, lo, hi):
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    shell = rng.permutation(np.arange(N) % N_SHELLS)
    r = (shell + rng.uniform(size=N)) / N_SHELLS
    d = rng.standard_normal((N, n))
    d /= np.max(np.abs(d), axis=1, keepdims=True)
    return c + h * r[:, None] * d, shell


def _sample(spec, box, N, eps_list, rng):
    q, qs = _shell_points(rng, N, spec.n, *box.q)
    z, zs = _shell_points(rng, N, spec.n, *box.z)
    t = rng.uniform(box.t0, box.T, size=N) if box.T > box.t0 else np.full(N, box.t0)
    eps = np.asarray(eps_list, dtype=float)[rng.integers(len(eps_list), size=N)]
    return _Samples(t, q, z, eps, qs, zs)


def _witness(S, i, value, **extra):
    w = {"t": float(S.t[i]), "q": S.q[i].tolist(), "z": S.z[i].tolist(), "eps": float(S.eps[i]), "value": float(value)}
    w.update(extra)
    return w


class _Evaluator:
    """Pointwise-in-time evaluation of coefficient fields over all samples.

    Coefficients take a scalar ``t``, so samples are grouped by their time
    value. Non-finite outputs mark the sample as failed for that field.
    """

    def __init__(self, spec, S):
        self.spec = spec
        self.S = S
        self.failures = {}
        self._times, self._inv = np.unique(S.t, return_inverse=True)

    def __call__(self, name, fn, *per_sample):
        S = self.S
        out = None
        for j, t in enumerate(self._times):
            idx = np.nonzero(self._inv == j)[0]
            try:
                with np.errstate(all="ignore"):
                    val = np.asarray(fn(float(t), S.q[idx], *(a[idx] for a in per_sample)), dtype=float)
            except Exception as exc:  # recorded, not fatal
                self._fail(name, idx, repr(exc))
                continue
            if out is None:
                out = np.full((S.t.size,) + val.shape[1:], np.nan)
            out[idx] = val
        if out is None:
            return None
        bad = ~np.all(np.isfinite(out.reshape(out.shape[0], -1)), axis=1)
        if np.any(bad):
            self._fail(name, np.nonzero(bad)[0], "non-finite value")
        return out

    def _fail(self, name, idx, reason):
        rec = self.failures.setdefault(name, {"field": name, "count": 0, "reason": reason, "witness": None})
        rec["count"] += int(len(idx))
        if rec["witness"] is None:
            i = int(idx[0])
            rec["witness"] = {"t": float(self.S.t[i]), "q": self.S.q[i].tolist()}


def _per_shell(values, shell, how):
    out = np.full(N_SHELLS, np.nan)
    for s in range(N_SHELLS):
        v = values[(shell == s) & np.isfinite(values)]
        if v.size:
            out[s] = how(v)
    return out


def _grows(per_shell):
    """Shell maxima of a quantity that should stay bounded keep increasing."""
    v = per_shell[np.isfinite(per_shell)]
    if v.size < 3:
        return False
    tiny = 1e-12 * max(1.0, float(np.max(np.abs(v))))
    return bool(v[-1] > GROWTH * v[-2] + tiny and v[-2] > v[-3] + tiny)


def _decays(per_shell):
    """Shell minima of a quantity that should stay away from 0 keep shrinking."""
    v = per_shell[np.isfinite(per_shell)]
    if v.size < 3:
        return False
    return bool(v[-1] * GROWTH < v[-2] and v[-2] < v[-3])


def _argmax_in_last_shell(values, shell):
    last = np.where((shell == N_SHELLS - 1) & np.isfinite(values), values, -np.inf)
    return int(np.argmax(last))


# --------------------------------------------------------------------------
# individual checks
# --------------------------------------------------------------------------


def _kinetic_parts(spec, ev, S):
    A = ev("A", lambda t, q: spec.A(t, q))
    if A is None:
        return None
    zeta = np.einsum("...a,...ab,...b->...", S.z, A, S.z)
    kin = spec.kinetic

    def k_field(method):
        out = np.empty(S.t.size)
        for i in range(S.t.size):
            out[i] = getattr(kin, method)(S.eps[i], S.t[i], zeta[i])
        return out

    with np.errstate(all="ignore"):
        K = k_field("value")
        K1 = k_field("d_zeta")
        K2 = k_field("d2_zeta")
        Kt = k_field("d_t")
    dA = ev("dA", lambda t, q: core.A_grad(spec, t, q))
    dA_dt = ev("dA_dt", lambda t, q: core.A_dt(spec, t, q))
    return dict(A=A, zeta=zeta, K=K, K1=K1, K2=K2, Kt=Kt, dA=dA, dA_dt=dA_dt)


def _check_growth_bounds(spec, S, kp):
    """A1: the three inequalities linking K to its derivatives."""
    entries = []
    K, K1, K2, A, z = kp["K"], kp["K1"], kp["K2"], kp["A"], S.z
    Az = np.einsum("...ab,...b->...a", A, z)
    grad_z = 2.0 * K1[:, None] * Az
    hess_z = 2.0 * K1[:, None, None] * A + 4.0 * K2[:, None, None] * np.einsum("...a,...b->...ab", Az, Az)
    gz = np.linalg.norm(grad_z, axis=-1)
    hz = np.linalg.norm(hess_z, axis=(-2, -1))

    # A1.1: max(|d_t K|, |grad_q K|) <= M + C K
    if kp["dA"] is not None and kp["dA_dt"] is not None:
        dzq = np.einsum("...kab,...a,...b->...k", kp["dA"], z, z)
        dzt = np.einsum("...ab,...a,...b->...", kp["dA_dt"], z, z)
        lhs = np.maximum(np.abs(kp["Kt"] + K1 * dzt), np.abs(K1) * np.linalg.norm(dzq, axis=-1))
        r = lhs / (1.0 + K)
        shells = _per_shell(r, S.z_shell, np.max)
        C = float(np.nanmax(np.where(K > 1.0, lhs / np.maximum(K, 1e-300), 0.0), initial=0.0))
        M = float(np.nanmax(lhs - C * K, initial=0.0))
        if _grows(shells):
            i = _argmax_in_last_shell(r, S.z_shell)
            entries.append(AssumptionEntry("A1.1", "time/position derivatives of K bounded by M + C K", "fail",
                                           _witness(S, i, r[i], ratio="max(|dK/dt|, |grad_q K|) / (1 + K)"),
                                           {"per_shell_max": shells.tolist()}))
        else:
            entries.append(AssumptionEntry("A1.1", "time/position derivatives of K bounded by M + C K", "pass",
                                           None, {"M": max(M, 0.0), "C": C}))
    else:
        entries.append(AssumptionEntry("A1.1", "time/position derivatives of K bounded by M + C K", "unchecked",
                                       note="derivatives of A could not be evaluated"))

    # A1.2: |grad_z K|^2 + M >= c K
    pos = K > 0
    g = np.where(pos, gz**2 / np.where(pos, K, 1.0), np.inf)
    shells = _per_shell(np.where(pos, g, np.nan), S.z_shell, np.min)
    big = pos & (K >= 1.0)
    c = float(np.min(g[big])) if np.any(big) else float(np.min(g[pos], initial=np.inf))
    bad = (not np.isfinite(c)) or c <= 0 or _decays(shells)
    if bad:
        cand = np.where(S.z_shell == N_SHELLS - 1, np.where(pos, g, np.inf), np.inf)
        i = int(np.argmin(cand))
        entries.append(AssumptionEntry("A1.2", "|grad_z K|^2 + M >= c K", "fail",
                                       _witness(S, i, g[i], ratio="|grad_z K|^2 / K"),
                                       {"per_shell_min": shells.tolist()}))
    else:
        M = float(np.max(np.maximum(c * K - gz**2, 0.0), initial=0.0))
        entries.append(AssumptionEntry("A1.2", "|grad_z K|^2 + M >= c K", "pass", None, {"c": c, "M": M}))

    # A1.3: max(|grad_z K|, |Hess_z K|_F) <= M + delta K for every delta
    r = np.maximum(gz, hz) / (1.0 + K)
    shells = _per_shell(r, S.z_shell, np.max)
    v = shells[np.isfinite(shells)]
    rising = v.size >= 2 and v[-1] > v[-2] * (1.0 + 1e-6) + 1e-12
    if rising:
        i = _argmax_in_last_shell(r, S.z_shell)
        entries.append(AssumptionEntry("A1.3", "z-derivatives of K are o(K)", "fail",
                                       _witness(S, i, r[i], ratio="max(|grad_z K|, |Hess_z K|) / (1 + K)"),
                                       {"per_shell_max": shells.tolist()}))
    else:
        entries.append(AssumptionEntry("A1.3", "z-derivatives of K are o(K)", "pass", None,
                                       {"outer_shell_ratio": float(v[-1]) if v.size else float("nan")}))

    # A3: K >= c |z|^(2 eta)
    nz = np.linalg.norm(z, axis=-1)
    top = nz >= np.quantile(nz, 0.9)
    ok = top & (K > 0) & (nz > 0)
    if np.count_nonzero(ok) >= 3 and np.ptp(np.log(nz[ok])) > 0:
        slope = np.polyfit(np.log(nz[ok]), np.log(K[ok]), 1)[0]
        eta = 0.5 * float(slope)
    else:
        eta = float("nan")
    if np.isfinite(eta) and eta > 0:
        ratio = np.where(nz > 0, K / np.where(nz > 0, nz, 1.0) ** (2.0 * eta), np.inf)
        i = int(np.argmin(ratio))
        c3 = float(ratio[i])
    else:
        i, c3 = int(np.argmax(nz)), float("nan")
    if np.isfinite(c3) and c3 > 0:
        entries.append(AssumptionEntry("A3", "K >= c |z|^(2 eta)", "pass", None, {"c": c3, "eta": eta}))
    else:
        entries.append(AssumptionEntry("A3", "K >= c |z|^(2 eta)", "fail", _witness(S, i, K[i], eta=eta),
                                       {"c": c3, "eta": eta}))
    return entries


def _check_kinetic_profile(spec, S, kp):
    entries = []
    K = kp["K"]
    neg = np.nonzero(~(K >= 0))[0]
    if neg.size:
        i = int(neg[np.argmin(np.nan_to_num(K[neg], nan=-np.inf))])
        entries.append(AssumptionEntry("A5.K", "Ktilde >= 0 on zeta >= 0", "fail", _witness(S, i, K[i])))
    else:
        entries.append(AssumptionEntry("A5.K", "Ktilde >= 0 on zeta >= 0", "pass"))
    kin = spec.kinetic
    if isinstance(kin, PolynomialRadial):
        ts = np.unique(np.concatenate([S.t, [S.t.min(), S.t.max()]]))
        worst = None
        for label, c in (("d_k1", kin.coeffs[0]), ("d_k2", kin.coeffs[-1])):
            vals = np.array([float(c(t)) if callable(c) else float(c) for t in ts])
            j = int(np.argmin(vals))
            if worst is None or vals[j] < worst[1]:
                worst = (label, vals[j], ts[j])
        label, val, t = worst
        if val > 0:
            entries.append(AssumptionEntry("K.poly_floor", "extreme coefficients bounded below by a positive constant",
                                           "pass", None, {"floor": float(val)}))
        else:
            entries.append(AssumptionEntry("K.poly_floor", "extreme coefficients bounded below by a positive constant",
                                           "fail", {"t": float(t), "coefficient": label, "value": float(val)},
                                           {"floor": float(val)}))
    return entries


def _floor_entry(id, desc, S, floors, shell):
    lam = float(np.nanmin(floors)) if np.any(np.isfinite(floors)) else float("nan")
    shells = _per_shell(floors, shell, np.min)
    first = shells[np.isfinite(shells)]
    decaying = first.size >= 2 and (first[-1] < FLOOR_DECAY * first[0] or _decays(shells))
    if not (lam > 0) or decaying:
        i = int(np.nanargmin(floors))
        return AssumptionEntry(id, desc, "fail", _witness(S, i, floors[i]), {"floor": lam, "per_shell_min": shells.tolist()})
    return AssumptionEntry(id, desc, "pass", None, {"floor": lam})


def _bounded_entry(id, desc, S, norms, shell, label):
    shells = _per_shell(norms, shell, np.max)
    if _grows(shells):
        i = _argmax_in_last_shell(norms, shell)
        return AssumptionEntry(id, desc, "fail", _witness(S, i, norms[i], field=label), {"per_shell_max": shells.tolist()})
    return None


def _sym_floor(M):
    try:
        return spd_floor(M, rtol=1e-10)
    except ValueError:
        return None


def _check_coefficients(spec, ev, S, kp):
    entries = []
    n = spec.n
    # A2.2: gamma symmetric with eigenvalue floor lambda > 0
    G = ev("gamma", lambda t, q: spec.gamma(t, q))
    if G is None:
        entries.append(AssumptionEntry("A2.2", "gamma symmetric, eigenvalues >= lambda > 0", "unchecked",
                                       note="gamma could not be evaluated"))
    else:
        fin = np.all(np.isfinite(G.reshape(len(G), -1)), axis=1)
        floors = np.full(len(G), np.nan)
        asym = np.linalg.norm(G - np.swapaxes(G, -1, -2), axis=(-2, -1)) > 1e-10 * np.maximum(
            1.0, np.linalg.norm(G, axis=(-2, -1)))
        if np.any(asym & fin):
            i = int(np.nonzero(asym & fin)[0][0])
            entries.append(AssumptionEntry("A2.2", "gamma symmetric, eigenvalues >= lambda > 0", "fail",
                                           _witness(S, i, 0.0, reason="asymmetric")))
        else:
            floors[fin] = np.linalg.eigvalsh(sym(G[fin]))[:, 0]
            entries.append(_floor_entry("A2.2", "gamma symmetric, eigenvalues >= lambda > 0", S, floors, S.q_shell))

    # A5: A symmetric, eigenvalues in [c, C]
    A = kp["A"] if kp else None
    if A is None:
        entries.append(AssumptionEntry("A5", "A symmetric, eigenvalues in [c, C]", "unchecked",
                                       note="A could not be evaluated"))
    else:
        fin = np.all(np.isfinite(A.reshape(len(A), -1)), axis=1)
        asym = np.linalg.norm(A - np.swapaxes(A, -1, -2), axis=(-2, -1)) > 1e-10 * np.maximum(
            1.0, np.linalg.norm(A, axis=(-2, -1)))
        if np.any(asym & fin):
            i = int(np.nonzero(asym & fin)[0][0])
            entries.append(AssumptionEntry("A5", "A symmetric, eigenvalues in [c, C]", "fail",
                                           _witness(S, i, 0.0, reason="asymmetric")))
        else:
            ev_all = np.full((len(A), n), np.nan)
            ev_all[fin] = np.linalg.eigvalsh(sym(A[fin]))
            e = _floor_entry("A5", "A symmetric, eigenvalues in [c, C]", S, ev_all[:, 0], S.q_shell)
            top = ev_all[:, -1]
            grow = _bounded_entry("A5", "A symmetric, eigenvalues in [c, C]", S, top, S.q_shell, "A (largest eigenvalue)")
            if e.status == "pass" and grow is not None:
                e = grow
            if e.status == "pass":
                e.constants = {"c": float(np.nanmin(ev_all[:, 0])), "C": float(np.nanmax(top))}
            entries.append(e)

    # A2.1: grad V bounded -- replaced by the confinement condition
    entries.append(AssumptionEntry(
        "A2.1", "grad V bounded", "unchecked",
        note="not required by the weaker non-explosion setting; see confinement_check"))

    # A2.3: gamma, F, d_t psi, sigma bounded
    p = ev("psi", lambda t, q: spec.psi(t, q))
    p = None if p is None else p + np.sqrt(S.eps)[:, None] * S.z
    fields = [("gamma", G)]
    if p is not None:
        fields.append(("F", ev("F", lambda t, q, pp: spec.F(t, q, pp), p)))
        fields.append(("sigma", ev("sigma", lambda t, q, pp: spec.sigma(t, q, pp), p)))
    fields.append(("dpsi_dt", ev("dpsi_dt", lambda t, q: core.psi_dt(spec, t, q))))
    fail = None
    for label, val in fields:
        if val is None:
            continue
        norms = np.linalg.norm(val.reshape(len(val), -1), axis=1)
        fail = _bounded_entry("A2.3", "gamma, F, d_t psi, sigma bounded", S, norms, S.q_shell, label)
        if fail is not None:
            break
    entries.append(fail or AssumptionEntry("A2.3", "gamma, F, d_t psi, sigma bounded", "pass"))

    entries.append(AssumptionEntry("A2.4", "initial kinetic energy bounded", "unchecked",
                                   note="property of the initial law; runs start on p = psi(0, q0) where K = 0"))
    entries.append(AssumptionEntry("A4", "gamma is C^1 and independent of p", "pass",
                                   note="structural: gamma takes (t, q) only"))
    entries.append(AssumptionEntry("A6", "Ktilde independent of q", "pass",
                                   note="structural: kinetic profiles take (eps, t, zeta) only"))

    # A7: derivative bounds on psi, gamma, A and Lipschitz grad V
    derivs = [
        ("dpsi", ev("dpsi", lambda t, q: core.psi_jacobian(spec, t, q))),
        ("d2psi", ev("d2psi", lambda t, q: core.psi_hessian(spec, t, q))),
        ("dgamma", ev("dgamma", lambda t, q: core.gamma_grad(spec, t, q))),
        ("dA", kp["dA"] if kp else None),
        ("dA_dt", kp["dA_dt"] if kp else None),
        ("hess_V", ev("hess_V", lambda t, q: core._fd_q(lambda tt, qq: core.V_grad(spec, tt, qq), t, q))),
    ]
    fail = None
    for label, val in derivs:
        if val is None:
            continue
        norms = np.linalg.norm(val.reshape(len(val), -1), axis=1)
        fail = _bounded_entry("A7", "coefficient derivatives bounded, grad V Lipschitz", S, norms, S.q_shell, label)
        if fail is not None:
            break
    entries.append(fail or AssumptionEntry("A7", "coefficient derivatives bounded, grad V Lipschitz", "pass"))
    return entries


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def check_assumptions(spec, box=None, samples=4000, eps_list=(1.0, 0.1, 0.01), seed=0):
    """Audit ``spec`` on ``samples`` random points of ``box``.

    Parameters
    ----------
    box : Box, optional
        Defaults to ``t in [0, 1]``, ``q`` and ``z`` in ``[-5, 5]^n``.
    samples : int
        At least 1000.
    eps_list : sequence of float
        Mass parameters to sample; bounds are only checked at these values.

    Returns
    -------
    AssumptionReport
        Deterministic given the arguments. Coefficient evaluation failures are
        collected in ``evaluation_failures`` instead of being raised.
    """
    box = Box() if box is None else box
    if int(samples) != samples or samples < 1000:
        raise ValueError(f"samples must be an integer >= 1000, got {samples}")
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(not e > 0 for e in eps_list):
        raise ValueError("eps_list must be non-empty and positive")
    rng = np.random.default_rng(seed)
    S = _sample(spec, box, int(samples), eps_list, rng)
    ev = _Evaluator(spec, S)
    kp = _kinetic_parts(spec, ev, S)
    entries = []
    if kp is not None:
        entries += _check_growth_bounds(spec, S, kp)
        entries += _check_kinetic_profile(spec, S, kp)
    entries += _check_coefficients(spec, ev, S, kp)
    order = {"A1": 0, "A2": 1, "A3": 2, "A4": 3, "A5": 4, "A6": 5, "A7": 6, "K.": 7}
    entries.sort(key=lambda e: (order.get(e.id[:2], 9), e.id))
    return AssumptionReport(
        system=spec.name,
        entries=entries,
        sampling={
            "box": {"t": [box.t0, box.T], "q": list(box.q), "z": list(box.z)},
            "samples": int(samples),
            "shells": N_SHELLS,
            "eps_list": eps_list,
            "seed": int(seed),
        },
        evaluation_failures=list(ev.failures.values()),
        caveats=[
            "results certify the sampled box only",
            "bounds required uniformly in eps are checked at the listed eps values only",
        ],
    )


@dataclass(frozen=True)
class ConfinementResult:
    """Smallest sampled ``(a, b)`` with ``a + b |q|^2 + V >= 0``."""

    a: float
    b: float
    status: str
    witness: Optional[dict] = None
    per_shell_b: Tuple[float, ...] = ()


def confinement_check(spec, box=None, samples=4000, seed=0):
    """Fit ``a, b >= 0`` such that ``a + b |q|^2 + V(t, q) >= 0`` on the sample.

    ``b`` is read off the outermost shell of the box; the check fails when
    the required ``b`` keeps growing towards the boundary, i.e. ``V`` falls
    off faster than quadratically.
    """
    box = Box() if box is None else box
    if int(samples) != samples or samples < 1000:
        raise ValueError(f"samples must be an integer >= 1000, got {samples}")
    rng = np.random.default_rng(seed)
    S = _sample(spec, box, int(samples), [1.0], rng)
    ev = _Evaluator(spec, S)
    V = ev("V", lambda t, q: spec.V(t, q))
    if V is None:
        return ConfinementResult(float("nan"), float("nan"), "unchecked")
    r2 = np.sum(S.q**2, axis=-1)
    need = np.where(r2 > 0, -V / np.where(r2 > 0, r2, 1.0), -np.inf)
    shells = _per_shell(np.where(np.isfinite(V), need, np.nan), S.q_shell, np.max)
    b = float(max(0.0, np.nanmax(shells[-1:]) if np.isfinite(shells[-1]) else 0.0))
    a = float(max(0.0, np.nanmax(-V - b * r2)))
    per_b = tuple(float(max(0.0, x)) for x in shells)
    if _grows(np.maximum(shells, 0.0)):
        i = _argmax_in_last_shell(need, S.q_shell)
        w = {"t": float(S.t[i]), "q": S.q[i].tolist(), "V": float(V[i]), "required_b": float(need[i])}
        return ConfinementResult(a, b, "fail", w, per_b)
    return ConfinementResult(a, b, "pass", None, per_b)


@dataclass(frozen=True)
class LyapunovTrace:
    """``U = a + (1 + b)|q|^2 + H_eps`` along a path.

    ``last_finite`` indexes the last finite value of ``U`` (-1 if none);
    ``growth_rate`` is the least-squares slope of ``ln(1 + U)`` in time over
    the finite prefix and ``flagged`` marks a rate above the budget.
    """

    t: np.ndarray
    U: np.ndarray
    last_finite: int
    growth_rate: float
    flagged: bool
    a: float
    b: float


def lyapunov_diagnostic(spec, eps, path: Sequence[State], a=None, b=None, rate_budget=1.0):
    """Evaluate the non-explosion Lyapunov function along ``path``.

    Parameters
    ----------
    path : sequence of State
        May end in non-finite states (e.g. after a blow-up).
    a, b : float, optional
        Confinement constants; fitted with :func:`confinement_check` if omitted.
    rate_budget : float
        Largest acceptable growth rate of ``ln(1 + U)`` per unit time.
    """
    if a is None or b is None:
        res = confinement_check(spec)
        a = res.a if a is None else a
        b = res.b if b is None else b
    t = np.array([s.t for s in path], dtype=float)
    U = np.full(t.size, np.nan)
    with np.errstate(all="ignore"):
        for i, s in enumerate(path):
            if not s.is_finite():
                continue
            try:
                H = float(core.hamiltonian(spec, eps, s))
            except (FloatingPointError, ValueError):
                continue
            U[i] = a + (1.0 + b) * float(np.sum(s.q**2)) + H
    fin = np.isfinite(U)
    last = int(np.nonzero(fin)[0][-1]) if np.any(fin) else -1
    prefix = fin.copy()
    if last >= 0:
        prefix[last + 1:] = False
    rate = float("nan")
    if np.count_nonzero(prefix) >= 2 and np.ptp(t[prefix]) > 0:
        rate = float(np.polyfit(t[prefix], np.log1p(np.maximum(U[prefix], 0.0)), 1)[0])
    flagged = bool(np.isfinite(rate) and rate > rate_budget)
    return LyapunovTrace(t, U, last, rate, flagged, float(a), float(b))
