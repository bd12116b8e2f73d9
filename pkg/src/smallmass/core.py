"""System model for dissipative, noisy Hamiltonian dynamics at small mass.

A system is the family of Hamiltonians

    H_eps(t, q, p) = Ktilde(eps, t, zeta) + V(t, q),
    zeta = A(t, q)[a, b] u_a u_b / eps,   u = p - psi(t, q),

driven by

    dq = grad_p H dt
    dp = (-gamma grad_p H - grad_q H + F) dt + sigma dW.

Array conventions
-----------------
Every coefficient callable takes a scalar time ``t`` and positions ``q`` of
shape ``(..., n)`` and must broadcast over the leading axes:

========================  ===================  ==================================
field                     output shape         meaning
========================  ===================  ==================================
``A(t, q)``               ``(..., n, n)``      symmetric "metric" ``A^{ab}``
``psi(t, q)``             ``(..., n)``         momentum offset
``V(t, q)``               ``(...)``            potential
``gamma(t, q)``           ``(..., n, n)``      symmetric drag
``sigma(t, q, p)``        ``(..., n, k)``      noise coefficient
``F(t, q, p)``            ``(..., n)``         external force
``dA(t, q)``              ``(..., n, n, n)``   ``[k, a, b] = d_{q^k} A^{ab}``
``dA_dt(t, q)``           ``(..., n, n)``
``dpsi(t, q)``            ``(..., n, n)``      ``[i, k] = d_{q^k} psi_i``
``d2psi(t, q)``           ``(..., n, n, n)``   ``[i, k, m] = d_{q^k} d_{q^m} psi_i``
``dpsi_dt(t, q)``         ``(..., n)``
``grad_V(t, q)``          ``(..., n)``
``dgamma(t, q)``          ``(..., n, n, n)``   ``[k, i, j] = d_{q^k} gamma_{ij}``
========================  ===================  ==================================

Derivative fields are optional; missing ones fall back to central finite
differences. Wrap a callable that only handles a single point with
:func:`pointwise`.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import EvaluationError

__all__ = [
    "KineticEnergyModel",
    "Quadratic",
    "PolynomialRadial",
    "NuclearLog",
    "Custom",
    "Scaling",
    "SystemSpec",
    "State",
    "pointwise",
    "eval_kinetic",
    "hamiltonian",
    "grad_p_H",
    "grad_q_H",
    "zeta",
    "psi_jacobian",
    "psi_hessian",
    "psi_dt",
    "A_grad",
    "A_dt",
    "gamma_grad",
    "V_grad",
    "evaluate",
]

_CBRT_EPS = np.finfo(float).eps ** (1.0 / 3.0)
_QRT_EPS = np.finfo(float).eps ** 0.25

Coeff = Union[float, Callable[[float], float]]


# --------------------------------------------------------------------------
# kinetic energy profiles
# --------------------------------------------------------------------------


class KineticEnergyModel:
    """Scalar profile ``Ktilde(eps, t, zeta)`` and its derivatives.

    Subclasses implement :meth:`value`, :meth:`d_zeta`, :meth:`d2_zeta` and
    :meth:`d_t`. All methods broadcast over array ``zeta``.
    """

    def value(self, eps, t, zeta):
        raise NotImplementedError

    def d_zeta(self, eps, t, zeta):
        raise NotImplementedError

    def d2_zeta(self, eps, t, zeta):
        raise NotImplementedError

    def d_t(self, eps, t, zeta):
        return np.zeros_like(np.asarray(zeta, dtype=float))


@dataclass(frozen=True)
class Quadratic(KineticEnergyModel):
    """``Ktilde = zeta / (2 m)``."""

    mass: float = 1.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    def value(self, eps, t, zeta):
        return np.asarray(zeta, dtype=float) / (2.0 * self.mass)

    def d_zeta(self, eps, t, zeta):
        return np.full(np.shape(zeta), 0.5 / self.mass)

    def d2_zeta(self, eps, t, zeta):
        return np.zeros(np.shape(zeta))


def _coeff_value(c, t):
    return float(c(t)) if callable(c) else float(c)


def _coeff_dt(c, t):
    if not callable(c):
        return 0.0
    h = max(1.0, abs(t)) * _CBRT_EPS
    return (float(c(t + h)) - float(c(t - h))) / (2.0 * h)


@dataclass(frozen=True)
class PolynomialRadial(KineticEnergyModel):
    """``Ktilde = sum_{l=k1}^{k2} d_l(t) zeta^l``.

    Parameters
    ----------
    coeffs : sequence
        ``d_{k1}, ..., d_{k2}``; each a float or a callable of ``t``.
    k1 : int
        Lowest power, ``k1 >= 1``.
    """

    coeffs: Sequence[Coeff] = (1.0,)
    k1: int = 1

    def __post_init__(self):
        if int(self.k1) != self.k1 or self.k1 < 1:
            raise ValueError(f"k1 must be an integer >= 1, got {self.k1}")
        if len(self.coeffs) == 0:
            raise ValueError("need at least one coefficient")
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    @property
    def k2(self):
        return self.k1 + len(self.coeffs) - 1

    @property
    def powers(self):
        return range(self.k1, self.k2 + 1)

    def value(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        out = np.zeros_like(zeta)
        for l, c in zip(self.powers, self.coeffs):
            out = out + _coeff_value(c, t) * zeta**l
        return out

    def d_zeta(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        out = np.zeros_like(zeta)
        for l, c in zip(self.powers, self.coeffs):
            out = out + l * _coeff_value(c, t) * zeta ** (l - 1)
        return out

    def d2_zeta(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        out = np.zeros_like(zeta)
        for l, c in zip(self.powers, self.coeffs):
            if l >= 2:
                out = out + l * (l - 1) * _coeff_value(c, t) * zeta ** (l - 2)
        return out

    def d_t(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        out = np.zeros_like(zeta)
        for l, c in zip(self.powers, self.coeffs):
            out = out + _coeff_dt(c, t) * zeta**l
        return out


class Scaling(enum.Enum):
    """Where eps enters the logarithmic term of :class:`NuclearLog`."""

    UNSCALED = "Unscaled"  # c1 ln^2(1 + c2 |p|^2)
    ZETA_SCALED = "ZetaScaled"  # c1 ln^2(1 + c2 |p|^2 / eps)


@dataclass(frozen=True)
class NuclearLog(KineticEnergyModel):
    """``Ktilde = zeta/(2m) + c1 ln^2(1 + c2' zeta)``.

    ``c2' = c2`` for :attr:`Scaling.ZETA_SCALED` and ``c2' = c2 eps`` for
    :attr:`Scaling.UNSCALED` (the log then sees the unscaled ``|p|^2``).
    """

    c1: float = 1.0
    c2: float = 1.0
    mass: float = 1.0
    scaling: Scaling = Scaling.ZETA_SCALED

    def __post_init__(self):
        for name in ("c1", "c2", "mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "scaling", Scaling(self.scaling))

    def _c2(self, eps):
        return self.c2 * eps if self.scaling is Scaling.UNSCALED else self.c2

    def value(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return zeta / (2.0 * self.mass) + self.c1 * np.log1p(self._c2(eps) * zeta) ** 2

    def d_zeta(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        c2 = self._c2(eps)
        w = 1.0 + c2 * zeta
        return 0.5 / self.mass + 2.0 * self.c1 * c2 * np.log(w) / w

    def d2_zeta(self, eps, t, zeta):
        zeta = np.asarray(zeta, dtype=float)
        c2 = self._c2(eps)
        w = 1.0 + c2 * zeta
        return 2.0 * self.c1 * c2**2 * (1.0 - np.log(w)) / w**2


@dataclass(frozen=True)
class Custom(KineticEnergyModel):
    """User supplied profile; callables take ``(eps, t, zeta)``.

    ``d2_zeta`` and ``d_t`` default to finite differences of ``d_zeta`` and
    ``value`` respectively.
    """

    value_fn: Callable
    d_zeta_fn: Callable
    d2_zeta_fn: Optional[Callable] = None
    d_t_fn: Optional[Callable] = None

    def value(self, eps, t, zeta):
        return np.asarray(self.value_fn(eps, t, zeta), dtype=float)

    def d_zeta(self, eps, t, zeta):
        return np.asarray(self.d_zeta_fn(eps, t, zeta), dtype=float)

    def d2_zeta(self, eps, t, zeta):
        if self.d2_zeta_fn is not None:
            return np.asarray(self.d2_zeta_fn(eps, t, zeta), dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        h = np.maximum(1.0, np.abs(zeta)) * _CBRT_EPS
        # one-sided at the zeta >= 0 boundary
        lo = np.maximum(zeta - h, 0.0)
        hi = lo + 2.0 * h
        return (self.d_zeta(eps, t, hi) - self.d_zeta(eps, t, lo)) / (hi - lo)

    def d_t(self, eps, t, zeta):
        if self.d_t_fn is not None:
            return np.asarray(self.d_t_fn(eps, t, zeta), dtype=float)
        h = max(1.0, abs(t)) * _CBRT_EPS
        return (self.value(eps, t + h, zeta) - self.value(eps, t - h, zeta)) / (2.0 * h)


# --------------------------------------------------------------------------
# system specification
# --------------------------------------------------------------------------


def pointwise(fn):
    """Lift a single-point coefficient callable to the batched convention.

    The wrapped callable loops over the leading axes of ``q`` (and ``p`` when
    given), so it is slow; prefer writing coefficients with numpy broadcasting.
    """

    @functools.wraps(fn)
    def wrapper(t, q, *rest):
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            return np.asarray(fn(t, q, *rest), dtype=float)
        batch = q.shape[:-1]
        flat_q = q.reshape(-1, q.shape[-1])
        flat_rest = [np.asarray(r, dtype=float).reshape(-1, q.shape[-1]) for r in rest]
        outs = [
            np.asarray(fn(t, flat_q[i], *(r[i] for r in flat_rest)), dtype=float)
            for i in range(flat_q.shape[0])
        ]
        out = np.stack(outs)
        return out.reshape(batch + out.shape[1:])

    return wrapper


def _zero_vector(n):
    def psi(t, q):
        return np.zeros(np.shape(q))

    return psi


def _zero_scalar(t, q):
    return np.zeros(np.shape(q)[:-1])


def _zero_force(t, q, p):
    return np.zeros(np.shape(q))


@dataclass(frozen=True)
class SystemSpec:
    """Complete coefficient bundle of one Hamiltonian SDE family.

    See the module docstring for the shape conventions. ``psi``, ``V`` and
    ``F`` default to zero; ``k`` defaults to ``n``.
    """

    n: int
    kinetic: KineticEnergyModel
    A: Callable
    gamma: Callable
    sigma: Callable
    psi: Optional[Callable] = None
    V: Optional[Callable] = None
    F: Optional[Callable] = None
    k: Optional[int] = None
    dA: Optional[Callable] = None
    dA_dt: Optional[Callable] = None
    dpsi: Optional[Callable] = None
    d2psi: Optional[Callable] = None
    dpsi_dt: Optional[Callable] = None
    grad_V: Optional[Callable] = None
    dgamma: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.k is None:
            object.__setattr__(self, "k", self.n)
        if self.psi is None:
            object.__setattr__(self, "psi", _zero_vector(self.n))
            if self.dpsi is None:
                object.__setattr__(self, "dpsi", lambda t, q: np.zeros(np.shape(q) + (self.n,)))
            if self.d2psi is None:
                object.__setattr__(
                    self, "d2psi", lambda t, q: np.zeros(np.shape(q) + (self.n, self.n))
                )
            if self.dpsi_dt is None:
                object.__setattr__(self, "dpsi_dt", lambda t, q: np.zeros(np.shape(q)))
        if self.V is None:
            object.__setattr__(self, "V", _zero_scalar)
            if self.grad_V is None:
                object.__setattr__(self, "grad_V", lambda t, q: np.zeros(np.shape(q)))
        if self.F is None:
            object.__setattr__(self, "F", _zero_force)

    def replace(self, **changes):
        """Copy with some fields replaced (see :func:`dataclasses.replace`)."""
        import dataclasses

        return dataclasses.replace(self, **changes)


@dataclass
class State:
    """Phase-space point(s) ``x = (q, p)`` at time ``t``.

    ``q`` and ``p`` have shape ``(..., n)``; a batch of states shares ``t``.
    """

    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.t = float(self.t)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p)))


# --------------------------------------------------------------------------
# coefficient evaluation with finite-difference fallbacks
# --------------------------------------------------------------------------


def evaluate(spec, fieldname, t, q, *rest):
    """Evaluate coefficient ``fieldname`` and reject non-finite output."""
    fn = getattr(spec, fieldname)
    out = np.asarray(fn(t, q, *rest), dtype=float)
    if not np.all(np.isfinite(out)):
        raise EvaluationError(fieldname)
    return out


def _fd_q(fn, t, q, h_scale=_CBRT_EPS):
    """Central differences in q; output ``(..., n, *out)`` with the derivative axis after the batch."""
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    parts = []
    for k in range(n):
        h = np.maximum(1.0, np.abs(q[..., k])) * h_scale
        qp = q.copy()
        qm = q.copy()
        qp[..., k] += h
        qm[..., k] -= h
        step = qp[..., k] - qm[..., k]
        fp = np.asarray(fn(t, qp), dtype=float)
        fm = np.asarray(fn(t, qm), dtype=float)
        extra = fp.ndim - step.ndim
        parts.append((fp - fm) / step.reshape(step.shape + (1,) * extra))
    return np.stack(parts, axis=q.ndim - 1)


def _fd_t(fn, t, q):
    h = max(1.0, abs(t)) * _CBRT_EPS
    tp, tm = t + h, t - h
    return (np.asarray(fn(tp, q), dtype=float) - np.asarray(fn(tm, q), dtype=float)) / (tp - tm)


def _checked(name, arr):
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(name)
    return arr


def psi_jacobian(spec, t, q):
    """``[..., i, k] = d psi_i / d q^k``."""
    if spec.dpsi is not None:
        return _checked("dpsi", np.asarray(spec.dpsi(t, q), dtype=float))
    d = _fd_q(spec.psi, t, q)  # [..., k, i]
    return _checked("dpsi", np.swapaxes(d, -1, -2))


def psi_hessian(spec, t, q):
    """``[..., i, k, m] = d^2 psi_i / d q^k d q^m``."""
    if spec.d2psi is not None:
        return _checked("d2psi", np.asarray(spec.d2psi(t, q), dtype=float))
    if spec.dpsi is not None:
        d = _fd_q(spec.dpsi, t, q)  # [..., m, i, k]
        return _checked("d2psi", np.moveaxis(d, -3, -1))
    # mixed second-difference stencil on psi itself
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    out = np.empty(q.shape + (n, n))
    hs = [np.maximum(1.0, np.abs(q[..., k])) * _QRT_EPS for k in range(n)]
    for k in range(n):
        for m in range(k, n):
            def shifted(sk, sm):
                qq = q.copy()
                qq[..., k] += sk * hs[k]
                qq[..., m] += sm * hs[m]
                return np.asarray(spec.psi(t, qq), dtype=float)

            if k == m:
                val = (shifted(1, 0) - 2.0 * np.asarray(spec.psi(t, q)) + shifted(-1, 0)) / (
                    hs[k][..., None] ** 2
                )
            else:
                val = (shifted(1, 1) - shifted(1, -1) - shifted(-1, 1) + shifted(-1, -1)) / (
                    4.0 * (hs[k] * hs[m])[..., None]
                )
            out[..., :, k, m] = val
            out[..., :, m, k] = val
    return _checked("d2psi", out)


def psi_dt(spec, t, q):
    if spec.dpsi_dt is not None:
        return _checked("dpsi_dt", np.asarray(spec.dpsi_dt(t, q), dtype=float))
    return _checked("dpsi_dt", _fd_t(spec.psi, t, q))


def A_grad(spec, t, q):
    """``[..., k, a, b] = d A^{ab} / d q^k``."""
    if spec.dA is not None:
        return _checked("dA", np.asarray(spec.dA(t, q), dtype=float))
    return _checked("dA", _fd_q(spec.A, t, q))


def A_dt(spec, t, q):
    if spec.dA_dt is not None:
        return _checked("dA_dt", np.asarray(spec.dA_dt(t, q), dtype=float))
    return _checked("dA_dt", _fd_t(spec.A, t, q))


def gamma_grad(spec, t, q):
    """``[..., k, i, j] = d gamma_{ij} / d q^k``."""
    if spec.dgamma is not None:
        return _checked("dgamma", np.asarray(spec.dgamma(t, q), dtype=float))
    return _checked("dgamma", _fd_q(spec.gamma, t, q))


def V_grad(spec, t, q):
    if spec.grad_V is not None:
        return _checked("grad_V", np.asarray(spec.grad_V(t, q), dtype=float))
    return _checked("grad_V", _fd_q(spec.V, t, q))


# --------------------------------------------------------------------------
# Hamiltonian and its gradients
# --------------------------------------------------------------------------


def _check_eps(eps):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def _u_zeta(spec, eps, s):
    _check_eps(eps)
    A = evaluate(spec, "A", s.t, s.q)
    u = s.p - evaluate(spec, "psi", s.t, s.q)
    Au = np.einsum("...ab,...b->...a", A, u)
    z = np.einsum("...a,...a->...", Au, u) / eps
    return A, u, Au, z


def zeta(spec, eps, s):
    """``A^{ab} u_a u_b / eps``."""
    return _u_zeta(spec, eps, s)[3]


def eval_kinetic(spec, eps, s):
    """Kinetic energy ``Ktilde(eps, t, |p - psi|_A^2 / eps)``."""
    z = _u_zeta(spec, eps, s)[3]
    return _checked("kinetic", spec.kinetic.value(eps, s.t, z))


def hamiltonian(spec, eps, s):
    return eval_kinetic(spec, eps, s) + evaluate(spec, "V", s.t, s.q)


def grad_p_H(spec, eps, s):
    """``(2/eps) Ktilde'(zeta) A u``."""
    _, _, Au, z = _u_zeta(spec, eps, s)
    kp = _checked("kinetic", spec.kinetic.d_zeta(eps, s.t, z))
    return (2.0 / eps) * kp[..., None] * Au


def grad_q_H(spec, eps, s):
    """Gradient of ``H_eps`` in q (chain rule through A and psi, plus grad V)."""
    _, u, Au, z = _u_zeta(spec, eps, s)
    kp = _checked("kinetic", spec.kinetic.d_zeta(eps, s.t, z))
    dA = A_grad(spec, s.t, s.q)
    dpsi = psi_jacobian(spec, s.t, s.q)
    dz = np.einsum("...kab,...a,...b->...k", dA, u, u)
    dz = dz - 2.0 * np.einsum("...a,...ak->...k", Au, dpsi)
    return kp[..., None] * dz / eps + V_grad(spec, s.t, s.q)
