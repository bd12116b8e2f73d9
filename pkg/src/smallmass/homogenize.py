"""Coefficients of the homogenized (small-mass) limiting equation.

In the limit the position obeys

    dq = gt^{-1} (-d_t psi - grad V + F(t, q, psi)) dt + S dt + gt^{-1} sigma(t, q, psi) dW

with the effective drag ``gt = gamma + dpsi - dpsi^T`` and the noise-induced
drift ``S^i = Q^{ijl} J_{jl}``. ``J`` solves the Lyapunov equation

    (gt A) J + J (gt A)^T = Sigma(t, q, psi),   Sigma = sigma sigma^T,

and only the matrix ``A`` of the kinetic energy enters; the profile ``Ktilde``
never does.

All functions broadcast over leading axes of ``q``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import core
from .errors import FluctuationDissipationError
from .linalg import lyap_solve_batch

__all__ = [
    "DriftAssembly",
    "FluctDissMode",
    "tilde_gamma",
    "tilde_gamma_grad",
    "q_tensor",
    "j_matrix",
    "noise_drift",
    "limiting_coeffs",
    "fluctdiss_drift",
]


@dataclass(frozen=True)
class DriftAssembly:
    """Snapshot of all limiting-equation coefficients at ``(t, q)``.

    Array fields carry the batch axes of ``q`` in front.
    """

    t: float
    q: np.ndarray
    gamma_tilde: np.ndarray
    gamma_tilde_inv: np.ndarray
    Q: np.ndarray
    J: np.ndarray
    S: np.ndarray
    limiting_drift: np.ndarray
    limiting_diffusion: np.ndarray

    def to_dict(self):
        return {
            "t": self.t,
            "q": self.q.tolist(),
            "gamma_tilde": self.gamma_tilde.tolist(),
            "gamma_tilde_inv": self.gamma_tilde_inv.tolist(),
            "Q": self.Q.tolist(),
            "J": self.J.tolist(),
            "S": self.S.tolist(),
            "limiting_drift": self.limiting_drift.tolist(),
            "limiting_diffusion": self.limiting_diffusion.tolist(),
        }


def tilde_gamma(spec, t, q):
    """``gt_{ik} = gamma_{ik} + d_k psi_i - d_i psi_k``."""
    q = np.asarray(q, dtype=float)
    jac = core.psi_jacobian(spec, t, q)
    return core.evaluate(spec, "gamma", t, q) + jac - np.swapaxes(jac, -1, -2)


def tilde_gamma_grad(spec, t, q):
    """``[..., m, i, k] = d_{q^m} gt_{ik}``."""
    q = np.asarray(q, dtype=float)
    hess = core.psi_hessian(spec, t, q)  # [i, k, m]
    curl = np.einsum("...ikm->...mik", hess) - np.einsum("...kim->...mik", hess)
    return core.gamma_grad(spec, t, q) + curl


def _inv(M):
    # closed forms for the common tiny cases; LAPACK call overhead dominates there
    n = M.shape[-1]
    if n == 1:
        return 1.0 / M
    if n == 2:
        a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
        det = a * d - b * c
        out = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2)
        return out / det[..., None, None]
    return np.linalg.inv(M)


def _inverse_and_grad(spec, t, q):
    gt = tilde_gamma(spec, t, q)
    ginv = _inv(gt)
    dgt = tilde_gamma_grad(spec, t, q)
    # d(gt^{-1}) = -gt^{-1} (d gt) gt^{-1}
    dginv = -np.einsum("...ia,...mab,...bj->...mij", ginv, dgt, ginv)
    return gt, ginv, dginv


def _q_from_parts(ginv, dginv, A, dA):
    return np.einsum("...kij,...kl->...ijl", dginv, A) - 0.5 * np.einsum(
        "...ik,...kjl->...ijl", ginv, dA
    )


def q_tensor(spec, t, q):
    """``Q^{ijl} = d_k(gt^{-1})^{ij} A^{kl} - 1/2 (gt^{-1})^{ik} d_k A^{jl}``."""
    q = np.asarray(q, dtype=float)
    _, ginv, dginv = _inverse_and_grad(spec, t, q)
    return _q_from_parts(ginv, dginv, core.evaluate(spec, "A", t, q), core.A_grad(spec, t, q))


def _sigma_on_manifold(spec, t, q):
    psi = core.evaluate(spec, "psi", t, q)
    return core.evaluate(spec, "sigma", t, q, psi), psi


def _j_from_parts(gt, A, sig, check=True):
    B = gt @ A
    Sigma = sig @ np.swapaxes(sig, -1, -2)
    return lyap_solve_batch(B, Sigma, check=check)


def j_matrix(spec, t, q):
    """Lyapunov contraction ``J = G : Sigma`` with sigma taken at ``p = psi``."""
    q = np.asarray(q, dtype=float)
    gt = tilde_gamma(spec, t, q)
    sig, _ = _sigma_on_manifold(spec, t, q)
    return _j_from_parts(gt, core.evaluate(spec, "A", t, q), sig)


def noise_drift(spec, t, q):
    """``S^i = Q^{ijl} J_{jl}``."""
    return limiting_coeffs(spec, t, q).S


def limiting_coeffs(spec, t, q, include_noise_drift=True, check=True):
    """Assemble every coefficient of the limiting equation at ``(t, q)``.

    Parameters
    ----------
    include_noise_drift : bool
        With ``False`` the drift omits ``S`` (``S`` itself is still reported).
        Only useful to demonstrate that the limit is wrong without it.
    check : bool
        Verify the Lyapunov stability margin.
    """
    q = np.asarray(q, dtype=float)
    t = float(t)
    gt, ginv, dginv = _inverse_and_grad(spec, t, q)
    A = core.evaluate(spec, "A", t, q)
    Q = _q_from_parts(ginv, dginv, A, core.A_grad(spec, t, q))
    sig, psi = _sigma_on_manifold(spec, t, q)
    J = _j_from_parts(gt, A, sig, check=check)
    S = np.einsum("...ijl,...jl->...i", Q, J)
    force = (
        -core.psi_dt(spec, t, q)
        - core.V_grad(spec, t, q)
        + core.evaluate(spec, "F", t, q, psi)
    )
    drift = np.einsum("...ij,...j->...i", ginv, force)
    if include_noise_drift:
        drift = drift + S
    diffusion = ginv @ sig
    return DriftAssembly(t, q, gt, ginv, Q, J, S, drift, diffusion)


class FluctDissMode(enum.Enum):
    EUCLIDEAN = "Euclidean"
    MANIFOLD = "Manifold"


def fluctdiss_drift(spec, t, q, kBT, mode=FluctDissMode.EUCLIDEAN, atol=1e-10):
    """Closed-form noise-induced drift under ``Sigma = 2 kBT gamma``.

    ``Euclidean``: ``S^i = kBT d_j (gt^{-1})^{ij}`` (requires q-independent A).
    ``Manifold``: with ``g = A^{-1}``,
    ``S^i = kBT (d_j (gt^{-1})^{ij} - 1/2 (gt^{-1})^{ij} g_{kl} d_j A^{kl})``.

    Meant as a cross-check for :func:`noise_drift`, not as a production path.
    """
    mode = FluctDissMode(mode)
    q = np.asarray(q, dtype=float)
    kBT = np.asarray(kBT, dtype=float)
    sig, _ = _sigma_on_manifold(spec, t, q)
    Sigma = sig @ np.swapaxes(sig, -1, -2)
    target = 2.0 * kBT[..., None, None] * core.evaluate(spec, "gamma", t, q)
    gap = np.linalg.norm(Sigma - target, axis=(-2, -1))
    scale = np.maximum(1.0, np.linalg.norm(Sigma, axis=(-2, -1)))
    if np.any(gap > atol * scale):
        raise FluctuationDissipationError(
            f"Sigma != 2 kBT gamma (max deviation {np.max(gap):.3e})"
        )
    _, ginv, dginv = _inverse_and_grad(spec, t, q)
    S = np.einsum("...jij->...i", dginv)
    dA = core.A_grad(spec, t, q)
    if mode is FluctDissMode.EUCLIDEAN:
        if np.max(np.abs(dA), initial=0.0) > 1e-8:
            raise ValueError("Euclidean closed form needs q-independent A; use mode='Manifold'")
    else:
        g = np.linalg.inv(core.evaluate(spec, "A", t, q))
        S = S - 0.5 * np.einsum("...ij,...kl,...jkl->...i", ginv, g, dA)
    return kBT[..., None] * S
