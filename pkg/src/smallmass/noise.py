"""Reproducible Brownian increments.

Standard normals are a pure function of ``(master_seed, path_index,
fine_step, component)``: the fine-step axis is cut into fixed blocks of
:data:`BLOCK` steps and block ``b`` is read from a Philox stream keyed by
``(master_seed, b)``, laid out path-major. Any subset of paths and steps can
therefore be drawn independently, in any order and from any worker, and a
coarse grid obtained by summing ``substeps`` consecutive fine increments
sees exactly the same Brownian path as the fine grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BLOCK", "TimeGrid", "NoisePath", "standard_normals", "brownian_increments"]

BLOCK = 256  # fine steps per Philox key; part of the stream layout, never change
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 < t0 + dt < ... < T`` with ``steps`` intervals."""

    t0: float
    T: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not self.T > self.t0:
            raise ValueError("need T > t0")
        object.__setattr__(self, "steps", int(self.steps))

    @classmethod
    def from_dt(cls, t0, T, dt):
        """Grid with spacing at most ``dt``."""
        steps = max(1, int(np.ceil((T - t0) / dt - 1e-9)))
        return cls(t0, T, steps)

    @property
    def dt(self):
        return (self.T - self.t0) / self.steps

    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def refine(self, factor):
        return TimeGrid(self.t0, self.T, self.steps * factor)


def _box_muller(raw):
    # raw: uint64 array with even last axis; consecutive pairs -> two normals
    r = raw.reshape(raw.shape[:-1] + (-1, 2))
    u1 = ((r[..., 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53  # (0, 1]
    u2 = (r[..., 1] >> np.uint64(11)).astype(np.float64) * _INV53
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    out = np.empty(r.shape[:-1] + (2,))
    out[..., 0] = rad * np.cos(ang)
    out[..., 1] = rad * np.sin(ang)
    return out.reshape(raw.shape)


def _block_normals(master_seed, block, path_start, path_count, k):
    per_path = BLOCK * k  # multiple of 4 since BLOCK is
    key = (int(master_seed) & _MASK64) | (int(block) << 64)
    bg = np.random.Philox(key=key, counter=(path_start * per_path) // 4)
    raw = bg.random_raw(path_count * per_path).reshape(path_count, per_path)
    return _box_muller(raw).reshape(path_count, BLOCK, k)


def standard_normals(master_seed, path_start, path_count, step_start, step_count, k):
    """Standard normals on the fine grid.

    Returns
    -------
    ndarray, shape (step_count, path_count, k)
    """
    out = np.empty((step_count, path_count, k))
    s = step_start
    end = step_start + step_count
    while s < end:
        b = s // BLOCK
        lo = s - b * BLOCK
        hi = min(BLOCK, end - b * BLOCK)
        z = _block_normals(master_seed, b, path_start, path_count, k)
        out[s - step_start : s - step_start + hi - lo] = np.swapaxes(z[:, lo:hi], 0, 1)
        s = b * BLOCK + hi
    return out


def brownian_increments(master_seed, path_start, path_count, step_start, step_count, k, dt, substeps=1):
    """Increments ``dW`` on a grid of spacing ``dt``.

    Each coarse increment is the sum of ``substeps`` fine N(0, dt/substeps)
    draws, so grids related by refinement share one Brownian path.

    Returns
    -------
    ndarray, shape (step_count, path_count, k)
    """
    z = standard_normals(
        master_seed, path_start, path_count, step_start * substeps, step_count * substeps, k
    )
    if substeps > 1:
        z = z.reshape(step_count, substeps, path_count, k).sum(axis=1)
    return z * np.sqrt(dt / substeps)


@dataclass(frozen=True)
class NoisePath:
    """Brownian increments of one path on a :class:`TimeGrid`."""

    increments: np.ndarray
    master_seed: int
    path_index: int
    substeps: int = 1

    @classmethod
    def generate(cls, master_seed, path_index, grid, k, substeps=1):
        dW = brownian_increments(master_seed, path_index, 1, 0, grid.steps, k, grid.dt, substeps)
        return cls(dW[:, 0, :], int(master_seed), int(path_index), substeps)

    @property
    def steps(self):
        return self.increments.shape[0]

    @property
    def k(self):
        return self.increments.shape[1]

    def coarsen(self, factor):
        """Sum consecutive groups of ``factor`` increments."""
        if self.steps % factor:
            raise ValueError(f"{self.steps} steps not divisible by {factor}")
        inc = self.increments.reshape(self.steps // factor, factor, self.k).sum(axis=1)
        return NoisePath(inc, self.master_seed, self.path_index, self.substeps * factor)
