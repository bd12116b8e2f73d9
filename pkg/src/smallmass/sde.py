"""Time stepping for the full system and its small-mass limit.

Both legs are driven by the same Brownian increments (see :mod:`.noise`),
which is what strong-error estimates need. The kernels work on batches of
paths, ``q`` and ``p`` of shape ``(N, n)``.

Two schemes are available for the full system:

``ExplicitEM``
    Euler-Maruyama on ``(q, p)``. Needs ``dt`` well below the momentum
    relaxation time ``eps / lambda``; the default ``dt = eps / 20``.
``SemiImplicitDrag``
    Works on ``u = p - psi(t, q)`` and treats the effective drag
    ``gt = gamma + dpsi - dpsi^T`` implicitly. For a quadratic kinetic
    energy this is one linear solve with ``I + (dt / (eps m)) gt A`` per
    step and is stable for any ``dt``. Other kinetic profiles are advanced
    by explicit sub-steps sized by the stiffness guard.
"""
from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from . import core
from .core import Quadratic, State
from .errors import BlowUpError, EvaluationError, ExperimentInvalid
from .homogenize import limiting_coeffs, tilde_gamma
from .noise import NoisePath, TimeGrid, brownian_increments

__all__ = [
    "Scheme",
    "TimeGrid",
    "NoisePath",
    "TrajectoryEnsemble",
    "PairPath",
    "EnsembleStats",
    "EXPLICIT_GUARD",
    "stiffness_rate",
    "default_dt",
    "step_full",
    "step_limit",
    "integrate_pair",
    "run_ensemble",
    "sample_ensemble",
]

EXPLICIT_GUARD = 1.0  # max dt * stiffness_rate for explicit momentum updates
_SUBSTEP_GUARD = 0.25
DEFAULT_CHUNK = 2048
ABORT_BUDGET = 0.01


class Scheme(enum.Enum):
    EXPLICIT_EM = "ExplicitEM"
    SEMI_IMPLICIT_DRAG = "SemiImplicitDrag"


def default_dt(eps, scheme=Scheme.EXPLICIT_EM, dt_user=None):
    """``eps / 20`` for explicit stepping; ``min(eps, dt_user)`` for semi-implicit."""
    scheme = Scheme(scheme)
    if scheme is Scheme.EXPLICIT_EM:
        return eps / 20.0 if dt_user is None else dt_user
    return eps if dt_user is None else min(eps, dt_user)


def _mv(M, x):
    return np.einsum("...ij,...j->...i", M, x)


# --------------------------------------------------------------------------
# batched kernels
# --------------------------------------------------------------------------


def _rate(kp, eps, gtA):
    n = gtA.shape[-1]
    if n == 1:
        nrm = np.abs(gtA[..., 0, 0])
    else:
        nrm = np.linalg.norm(gtA, ord=2, axis=(-2, -1))
    return 2.0 * kp * nrm / eps


def stiffness_rate(spec, eps, s):
    """Fastest momentum relaxation rate ``2 Ktilde' |gt A|_2 / eps`` over the batch in ``s``."""
    A, _, _, z = core._u_zeta(spec, eps, s)
    kp = spec.kinetic.d_zeta(eps, s.t, z)
    gtA = tilde_gamma(spec, s.t, s.q) @ A
    return float(np.max(_rate(kp, eps, gtA)))


def _explicit(spec, eps, t, q, p, dt, dW):
    A = spec.A(t, q)
    u = p - spec.psi(t, q)
    Au = _mv(A, u)
    z = np.einsum("...a,...a->...", Au, u) / eps
    kp = spec.kinetic.d_zeta(eps, t, z)
    v = (2.0 / eps) * kp[..., None] * Au
    dA = core.A_grad(spec, t, q)
    dpsi = core.psi_jacobian(spec, t, q)
    gq = np.einsum("...kab,...a,...b->...k", dA, u, u) - 2.0 * np.einsum("...a,...ak->...k", Au, dpsi)
    gq = kp[..., None] * gq / eps + core.V_grad(spec, t, q)
    force = -_mv(spec.gamma(t, q), v) - gq + spec.F(t, q, p)
    q_new = q + v * dt
    p_new = p + force * dt + _mv(spec.sigma(t, q, p), dW)
    return q_new, p_new


def _semi_implicit_quadratic(spec, eps, t, q, p, dt, dW):
    A = spec.A(t, q)
    psi = spec.psi(t, q)
    u = p - psi
    c = 1.0 / (eps * spec.kinetic.mass)  # 2 Ktilde' / eps
    dA = core.A_grad(spec, t, q)
    gt = tilde_gamma(spec, t, q)
    # explicit part of du: everything except -gt v
    r = -0.5 * c * np.einsum("...kab,...a,...b->...k", dA, u, u)
    r = r - core.V_grad(spec, t, q) - core.psi_dt(spec, t, q) + spec.F(t, q, p)
    rhs = u + r * dt + _mv(spec.sigma(t, q, p), dW)
    M = np.eye(spec.n) + (dt * c) * (gt @ A)
    if spec.n == 1:
        u_new = rhs / M[..., 0]
    else:
        u_new = np.linalg.solve(M, rhs[..., None])[..., 0]
    q_new = q + (c * dt) * _mv(A, u_new)
    p_new = spec.psi(t + dt, q_new) + u_new
    return q_new, p_new


def _substep_count(spec, eps, t, q, p, dt):
    A = spec.A(t, q)
    u = p - spec.psi(t, q)
    z = np.einsum("...a,...ab,...b->...", u, A, u) / eps
    kp = spec.kinetic.d_zeta(eps, t, z)
    rate = _rate(kp, eps, tilde_gamma(spec, t, q) @ A)
    rate = np.max(np.where(np.isfinite(rate), rate, 0.0), initial=0.0)
    return max(1, int(math.ceil(dt * rate / _SUBSTEP_GUARD)))


def _advance(spec, eps, t, q, p, dt, dW, scheme):
    if scheme is Scheme.EXPLICIT_EM:
        return _explicit(spec, eps, t, q, p, dt, dW)
    if isinstance(spec.kinetic, Quadratic):
        return _semi_implicit_quadratic(spec, eps, t, q, p, dt, dW)
    # non-quadratic profile: explicit sub-steps, the increment split evenly
    m = _substep_count(spec, eps, t, q, p, dt)
    h = dt / m
    for j in range(m):
        q, p = _explicit(spec, eps, t + j * h, q, p, h, dW / m)
    return q, p


def _limit_advance(spec, t, q, dt, dW, include_noise_drift):
    d = limiting_coeffs(spec, t, q, include_noise_drift=include_noise_drift, check=False)
    return q + d.limiting_drift * dt + _mv(d.limiting_diffusion, dW)


def _rowwise(fn, widths, *arrays):
    """Apply a batched step; rows whose coefficients fail come back as NaN.

    ``widths`` gives the last-axis size of each output of ``fn`` (an int for
    a single array). A failing coefficient on one path must not take the
    whole batch down, so on the (rare) error the batch is redone row by row.
    """
    try:
        return fn(*arrays)
    except EvaluationError:
        pass
    single = isinstance(widths, int)
    widths = (widths,) if single else widths
    cols = [[] for _ in widths]
    for i in range(arrays[0].shape[0]):
        try:
            r = fn(*(a[i:i + 1] for a in arrays))
            r = (r,) if single else r
        except EvaluationError:
            r = tuple(np.full((1, w), np.nan) for w in widths)
        for c, x in zip(cols, r):
            c.append(x)
    out = tuple(np.concatenate(c, axis=0) for c in cols)
    return out[0] if single else out


def _finite_rows(x):
    return np.all(np.isfinite(x), axis=-1)


# --------------------------------------------------------------------------
# single-path API
# --------------------------------------------------------------------------


def step_full(spec, eps, s, dt, dW, scheme=Scheme.EXPLICIT_EM):
    """One step of the full system from ``s``.

    Parameters
    ----------
    s : State
        ``q`` and ``p`` of shape ``(n,)`` or a batch ``(N, n)``.
    dW : array_like, shape (k,) or (N, k)

    Raises
    ------
    ValueError
        ``dt <= 0``, or ``ExplicitEM`` with ``dt`` above the stiffness guard.
    BlowUpError
        The new state is not finite; carries the last finite state.
    """
    scheme = Scheme(scheme)
    core._check_eps(eps)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if scheme is Scheme.EXPLICIT_EM:
        rate = stiffness_rate(spec, eps, s)
        if dt * rate > EXPLICIT_GUARD:
            raise ValueError(
                f"dt={dt:.3e} exceeds the explicit stiffness guard {EXPLICIT_GUARD / rate:.3e}; "
                "reduce dt or use SemiImplicitDrag"
            )
    dW = np.asarray(dW, dtype=float)
    with np.errstate(all="ignore"):
        q, p = _advance(spec, eps, s.t, s.q, s.p, dt, dW, scheme)
    new = State(s.t + dt, q, p)
    if not new.is_finite():
        raise BlowUpError(s, s.t)
    return new


def step_limit(spec, q, t, dt, dW, include_noise_drift=True):
    """Euler-Maruyama step of the limiting equation."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    q = np.asarray(q, dtype=float)
    with np.errstate(all="ignore"):
        out = _limit_advance(spec, t, q, dt, np.asarray(dW, dtype=float), include_noise_drift)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(State(t, q, np.full_like(q, np.nan)), t, leg="limit")
    return out


@dataclass(frozen=True)
class PairPath:
    """Coupled full and limit trajectories of one path.

    ``q_limit_coarse`` is the limit leg re-run on every ``coarse_factor``-th
    grid point with aggregated increments (``None`` if not requested).
    """

    t: np.ndarray
    q_full: np.ndarray
    p_full: np.ndarray
    q_limit: np.ndarray
    t_coarse: Optional[np.ndarray] = None
    q_limit_coarse: Optional[np.ndarray] = None

    def full_states(self):
        return [State(t, q, p) for t, q, p in zip(self.t, self.q_full, self.p_full)]


def integrate_pair(
    spec,
    eps,
    x0,
    q0,
    grid,
    noise,
    scheme=Scheme.EXPLICIT_EM,
    coarse_factor=None,
    include_noise_drift=True,
):
    """Integrate the full system from ``x0`` and the limit from ``q0`` with one noise path.

    Raises
    ------
    ValueError
        Grid and noise disagree in length or dimension.
    BlowUpError
        Either leg became non-finite; ``leg`` is ``"full"`` or ``"limit"``.
    """
    scheme = Scheme(scheme)
    core._check_eps(eps)
    if noise.steps != grid.steps or noise.k != spec.k:
        raise ValueError(
            f"noise has {noise.steps} steps x {noise.k} components; "
            f"grid needs {grid.steps} x {spec.k}"
        )
    dt = grid.dt
    ts = grid.times()
    qf = np.empty((grid.steps + 1, spec.n))
    pf = np.empty_like(qf)
    ql = np.empty_like(qf)
    qf[0], pf[0] = x0.q, x0.p
    ql[0] = np.asarray(q0, dtype=float)
    dWs = noise.increments
    with np.errstate(all="ignore"):
        for i in range(grid.steps):
            t = ts[i]
            try:
                q, p = _advance(spec, eps, t, qf[i][None], pf[i][None], dt, dWs[i][None], scheme)
            except EvaluationError:
                q = p = np.full((1, spec.n), np.nan)
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
                raise BlowUpError(State(t, qf[i], pf[i]), t, leg="full")
            qf[i + 1], pf[i + 1] = q[0], p[0]
            try:
                nxt = _limit_advance(spec, t, ql[i][None], dt, dWs[i][None], include_noise_drift)
            except EvaluationError:
                nxt = np.full((1, spec.n), np.nan)
            if not np.all(np.isfinite(nxt)):
                raise BlowUpError(State(t, ql[i], np.full(spec.n, np.nan)), t, leg="limit")
            ql[i + 1] = nxt[0]
    tc = qc = None
    if coarse_factor is not None:
        coarse = noise.coarsen(coarse_factor)
        hc = dt * coarse_factor
        tc = grid.t0 + hc * np.arange(coarse.steps + 1)
        qc = np.empty((coarse.steps + 1, spec.n))
        qc[0] = ql[0]
        for i in range(coarse.steps):
            qc[i + 1] = step_limit(spec, qc[i], tc[i], hc, coarse.increments[i], include_noise_drift)
    return PairPath(ts, qf, pf, ql, tc, qc)


# --------------------------------------------------------------------------
# ensembles
# --------------------------------------------------------------------------


def resolve_threads(threads=None):
    """``threads`` if given, else ``$SMALLMASS_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("SMALLMASS_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    return int(threads)


def _initial(spec, t0, q0, p0, N):
    q0 = np.zeros(spec.n) if q0 is None else np.asarray(q0, dtype=float)
    q = np.broadcast_to(q0, (N, spec.n)).copy()
    if p0 is None:
        p = np.asarray(spec.psi(t0, q), dtype=float).copy()
    else:
        p = np.broadcast_to(np.asarray(p0, dtype=float), (N, spec.n)).copy()
    return q, p


@dataclass
class _Chunk:
    path_start: int
    count: int
    alive: np.ndarray
    mean: Dict[str, np.ndarray] = field(default_factory=dict)
    m2: Dict[str, np.ndarray] = field(default_factory=dict)
    counts: Optional[np.ndarray] = None
    path_sup: Dict[str, np.ndarray] = field(default_factory=dict)
    record: Optional[tuple] = None


def _run_chunk(cfg, path_start, count):
    spec, eps, grid = cfg["spec"], cfg["eps"], cfg["grid"]
    scheme, substeps = cfg["scheme"], cfg["substeps"]
    quantities = cfg["quantities"]
    with_limit = cfg["with_limit"]
    dt = grid.dt
    ts = grid.times()
    q, p = _initial(spec, grid.t0, cfg["q0"], cfg["p0"], count)
    q_init, p_init = q.copy(), p.copy()
    ql = q.copy()
    alive = np.ones(count, dtype=bool)
    S = grid.steps + 1
    ch = _Chunk(path_start, count, alive, counts=np.zeros(S, dtype=np.int64))
    for name in quantities:
        ch.mean[name] = np.zeros(S)
        ch.m2[name] = np.zeros(S)
        ch.path_sup[name] = np.full(count, -np.inf)
    if cfg["record"]:
        rq = np.empty((S, count, spec.n))
        rp = np.empty_like(rq)
        rl = np.empty_like(rq) if with_limit else None
        ch.record = (rq, rp, rl)

    def observe(i, t):
        nalive = np.count_nonzero(alive)
        ch.counts[i] = nalive
        for name, fn in quantities.items():
            val = np.asarray(fn(spec, eps, t, q, p, ql), dtype=float)
            if nalive:
                # two-pass moments within the chunk; chunks are merged pairwise later
                m = val[alive].mean()
                ch.mean[name][i] = m
                ch.m2[name][i] = np.sum((val[alive] - m) ** 2)
            np.maximum(ch.path_sup[name], np.where(alive, val, -np.inf), out=ch.path_sup[name])
        if ch.record is not None:
            rq[i], rp[i] = q, p
            if rl is not None:
                rl[i] = ql

    observe(0, ts[0])
    block = cfg["block"]
    with np.errstate(all="ignore"):
        for b0 in range(0, grid.steps, block):
            nb = min(block, grid.steps - b0)
            dWb = brownian_increments(
                cfg["seed"], path_start, count, b0, nb, spec.k, dt, substeps
            )
            for j in range(nb):
                i = b0 + j
                t = ts[i]
                q, p = _rowwise(
                    lambda a, b, w: _advance(spec, eps, t, a, b, dt, w, scheme),
                    (spec.n, spec.n), q, p, dWb[j],
                )
                ok = _finite_rows(q) & _finite_rows(p)
                if with_limit:
                    ql = _rowwise(
                        lambda a, w: _limit_advance(spec, t, a, dt, w, cfg["include_noise_drift"]),
                        spec.n, ql, dWb[j],
                    )
                    ok &= _finite_rows(ql)
                if not ok.all():
                    bad = ~ok
                    alive &= ok
                    # park dead paths on their initial state so they stay finite
                    q[bad], p[bad] = q_init[bad], p_init[bad]
                    if with_limit:
                        ql[bad] = q_init[bad]
                observe(i + 1, ts[i + 1])
    return ch


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time moments and per-path suprema of observed quantities.

    ``mean[name][i]`` averages over paths alive at step ``i``;
    ``path_sup[name]`` holds the running maximum per path (NaN for aborted
    paths).
    """

    times: np.ndarray
    n_paths: int
    alive: np.ndarray
    counts: np.ndarray
    mean: Dict[str, np.ndarray]
    var: Dict[str, np.ndarray]
    path_sup: Dict[str, np.ndarray]

    @property
    def aborted_fraction(self):
        return 1.0 - np.count_nonzero(self.alive) / self.n_paths

    def stderr(self, name):
        return np.sqrt(self.var[name] / np.maximum(self.counts, 1))


def _merge(chunks, times, n_paths):
    counts = sum(c.counts for c in chunks)
    alive = np.concatenate([c.alive for c in chunks])
    mean, var, sup = {}, {}, {}
    for name in chunks[0].mean:
        # pairwise (Chan et al.) combination in fixed chunk order: deterministic
        # and free of the cancellation in E[x^2] - E[x]^2
        n = np.zeros_like(times)
        m = np.zeros_like(times)
        m2 = np.zeros_like(times)
        for c in chunks:
            nb = c.counts.astype(float)
            tot = n + nb
            safe = np.where(tot > 0, tot, 1.0)
            delta = c.mean[name] - m
            m = m + delta * nb / safe
            m2 = m2 + c.m2[name] + delta * delta * n * nb / safe
            n = tot
        mean[name] = m
        var[name] = m2 / np.maximum(n - 1, 1)
        ps = np.concatenate([c.path_sup[name] for c in chunks])
        sup[name] = np.where(alive, ps, np.nan)
    return EnsembleStats(times, n_paths, alive, counts, mean, var, sup)


def _execute(cfg, n_paths, chunk_size, threads):
    starts = list(range(0, n_paths, chunk_size))
    jobs = [(s, min(chunk_size, n_paths - s)) for s in starts]
    threads = resolve_threads(threads)
    if threads == 1 or len(jobs) == 1:
        return [_run_chunk(cfg, s, c) for s, c in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: _run_chunk(cfg, *job), jobs))


def _config(spec, eps, grid, master_seed, scheme, q0, p0, with_limit, include_noise_drift, substeps, quantities, record, block):
    core._check_eps(eps)
    scheme = Scheme(scheme)
    if int(substeps) != substeps or substeps < 1:
        raise ValueError(f"substeps must be a positive integer, got {substeps}")
    q, p = _initial(spec, grid.t0, q0, p0, 1)
    if scheme is Scheme.EXPLICIT_EM:
        rate = stiffness_rate(spec, eps, State(grid.t0, q, p))
        if grid.dt * rate > EXPLICIT_GUARD:
            raise ValueError(
                f"dt={grid.dt:.3e} exceeds the explicit stiffness guard {EXPLICIT_GUARD / rate:.3e}"
            )
    if with_limit:
        limiting_coeffs(spec, grid.t0, q, check=True)  # fail early on an unsolvable Lyapunov problem
    return dict(
        spec=spec, eps=float(eps), grid=grid, seed=int(master_seed), scheme=scheme,
        q0=q0, p0=p0, with_limit=with_limit, include_noise_drift=include_noise_drift,
        substeps=int(substeps), quantities=dict(quantities or {}), record=record, block=block,
    )


def run_ensemble(
    spec,
    eps,
    grid,
    n_paths,
    master_seed,
    quantities,
    *,
    scheme=Scheme.EXPLICIT_EM,
    q0=None,
    p0=None,
    with_limit=True,
    include_noise_drift=True,
    substeps=1,
    chunk_size=DEFAULT_CHUNK,
    threads=None,
    abort_budget=ABORT_BUDGET,
):
    """Simulate ``n_paths`` coupled paths and accumulate statistics.

    Parameters
    ----------
    quantities : dict of str to callable
        ``fn(spec, eps, t, q, p, q_limit) -> (N,)`` evaluated at every grid
        point (``q_limit`` equals the start value when ``with_limit`` is off).
    q0, p0 : array_like, optional
        Initial position (default 0) and momentum (default ``psi(t0, q0)``);
        the limit leg starts at ``q0`` too.
    substeps : int
        Noise is drawn on a grid ``substeps`` times finer and summed, so a run
        on ``grid.refine(substeps)`` sees the same Brownian path.
    threads : int, optional
        Worker threads; results do not depend on it.

    Raises
    ------
    ExperimentInvalid
        More than ``abort_budget`` of the paths blew up.
    """
    cfg = _config(
        spec, eps, grid, master_seed, scheme, q0, p0, with_limit,
        include_noise_drift, substeps, quantities, False, _block_len(n_paths, chunk_size),
    )
    chunks = _execute(cfg, n_paths, chunk_size, threads)
    stats = _merge(chunks, grid.times(), n_paths)
    if stats.aborted_fraction > abort_budget:
        raise ExperimentInvalid(stats.aborted_fraction, abort_budget)
    return stats


def _block_len(n_paths, chunk_size):
    # keep one noise block around 2**21 doubles per chunk
    return max(16, (1 << 21) // max(1, min(n_paths, chunk_size)))


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Recorded coupled paths on a common grid.

    ``q_full``, ``p_full`` and ``q_limit`` have shape ``(steps + 1, N, n)``;
    aborted paths (``alive == False``) are parked at their initial state
    after the failing step and should be ignored.
    """

    grid: TimeGrid
    eps: float
    q_full: np.ndarray
    p_full: np.ndarray
    q_limit: Optional[np.ndarray]
    master_seed: int
    path_indices: np.ndarray
    alive: np.ndarray
    scheme: Scheme

    @property
    def n_paths(self):
        return self.q_full.shape[1]

    def full_path(self, i):
        """Path ``i`` as a list of :class:`State`."""
        ts = self.grid.times()
        return [State(t, self.q_full[j, i], self.p_full[j, i]) for j, t in enumerate(ts)]

    def limit_path(self, i):
        return None if self.q_limit is None else self.q_limit[:, i]

    def write_csv(self, directory, long_format=False, prefix="path"):
        """Dump trajectories; returns the list of files written.

        Full paths have columns ``t, q_1..q_n, p_1..p_n`` and limit paths
        ``t, q_1..q_n``. With ``long_format`` all paths go to one file per
        leg with a leading ``path_index`` column.
        """
        os.makedirs(directory, exist_ok=True)
        n = self.q_full.shape[-1]
        ts = self.grid.times()
        qh = [f"q_{i + 1}" for i in range(n)]
        ph = [f"p_{i + 1}" for i in range(n)]
        legs = [("full", ["t"] + qh + ph, lambda i: np.column_stack([ts, self.q_full[:, i], self.p_full[:, i]]))]
        if self.q_limit is not None:
            legs.append(("limit", ["t"] + qh, lambda i: np.column_stack([ts, self.q_limit[:, i]])))
        written = []
        for leg, header, rows in legs:
            if long_format:
                fname = os.path.join(directory, f"{prefix}_{leg}.csv")
                with open(fname, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["path_index"] + header)
                    for i, idx in enumerate(self.path_indices):
                        for r in rows(i):
                            w.writerow([int(idx)] + [repr(float(x)) for x in r])
                written.append(fname)
            else:
                for i, idx in enumerate(self.path_indices):
                    fname = os.path.join(directory, f"{prefix}_{leg}_{int(idx):06d}.csv")
                    with open(fname, "w", newline="") as fh:
                        w = csv.writer(fh)
                        w.writerow(header)
                        for r in rows(i):
                            w.writerow([repr(float(x)) for x in r])
                    written.append(fname)
        return written


def sample_ensemble(
    spec,
    eps,
    grid,
    n_paths,
    master_seed,
    *,
    scheme=Scheme.EXPLICIT_EM,
    q0=None,
    p0=None,
    with_limit=True,
    include_noise_drift=True,
    substeps=1,
    chunk_size=256,
    threads=None,
):
    """Simulate and keep whole trajectories (memory ``O(steps * n_paths)``)."""
    cfg = _config(
        spec, eps, grid, master_seed, scheme, q0, p0, with_limit,
        include_noise_drift, substeps, {}, True, _block_len(n_paths, chunk_size),
    )
    chunks = _execute(cfg, n_paths, chunk_size, threads)
    rq = np.concatenate([c.record[0] for c in chunks], axis=1)
    rp = np.concatenate([c.record[1] for c in chunks], axis=1)
    rl = np.concatenate([c.record[2] for c in chunks], axis=1) if with_limit else None
    alive = np.concatenate([c.alive for c in chunks])
    return TrajectoryEnsemble(
        grid, float(eps), rq, rp, rl, int(master_seed), np.arange(n_paths), alive, Scheme(scheme)
    )
