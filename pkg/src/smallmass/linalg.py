"""Dense linear algebra kernels.

The Lyapunov solver works on ``B J + J B^T = RHS`` with ``B`` stable in the
sense that every eigenvalue has positive real part. The production path is a
direct solve of the ``n^2 x n^2`` linearised system; :func:`lyap_quadrature`
evaluates the integral representation instead and is kept as an independent
check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec

from .errors import LyapunovError, QuadratureError

__all__ = [
    "LyapunovProblem",
    "expm",
    "lyap_solve",
    "lyap_solve_batch",
    "lyap_quadrature",
    "stability_margin",
    "spd_floor",
    "sym",
]


@dataclass(frozen=True)
class LyapunovProblem:
    """``B J + J B^T = RHS``."""

    B: np.ndarray
    RHS: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        R = np.atleast_2d(np.asarray(self.RHS, dtype=float))
        if B.ndim != 2 or B.shape[0] != B.shape[1] or R.shape != B.shape:
            raise ValueError(f"need square B and RHS of equal shape, got {B.shape}, {R.shape}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "RHS", R)

    @property
    def n(self):
        return self.B.shape[0]


def sym(M):
    """Symmetric part ``(M + M^T) / 2`` over the last two axes."""
    M = np.asarray(M)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


# --------------------------------------------------------------------------
# matrix exponential: scaling and squaring with Pade approximants
# --------------------------------------------------------------------------

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}
# largest 1-norm for which each degree meets unit roundoff
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade(M, m):
    c = _PADE[m]
    n = M.shape[0]
    ident = np.eye(n)
    M2 = M @ M
    if m == 13:
        M4 = M2 @ M2
        M6 = M4 @ M2
        U = M @ (M6 @ (c[13] * M6 + c[11] * M4 + c[9] * M2)
                 + c[7] * M6 + c[5] * M4 + c[3] * M2 + c[1] * ident)
        V = M6 @ (c[12] * M6 + c[10] * M4 + c[8] * M2) + c[6] * M6 + c[4] * M4 + c[2] * M2 + c[0] * ident
    else:
        powers = [ident, M2]
        for _ in range(2, m // 2 + 1):
            powers.append(powers[-1] @ M2)
        U = sum(c[j] * powers[j // 2] for j in range(m, 0, -2))
        U = M @ U
        V = sum(c[j] * powers[j // 2] for j in range(m - 1, -1, -2))
    return np.linalg.solve(V - U, V + U)


def expm(M):
    """Matrix exponential of a square matrix.

    Scaling and squaring with a diagonal Pade approximant of degree 3, 5, 7,
    9 or 13 chosen from the 1-norm (Higham 2005).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("expm input has non-finite entries")
    if M.shape[0] == 0:
        return M.copy()
    norm = np.linalg.norm(M, 1)
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            return _pade(M, m)
    s = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
    R = _pade(M / 2.0**s, 13)
    for _ in range(s):
        R = R @ R
    return R


# --------------------------------------------------------------------------
# spectral utilities
# --------------------------------------------------------------------------


def stability_margin(M):
    """Smallest real part over the eigenvalues of ``M`` (batched over leading axes)."""
    M = np.asarray(M, dtype=float)
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"eigensolver failed: {exc}") from exc
    out = np.min(ev.real, axis=-1)
    return float(out) if out.ndim == 0 else out


def spd_floor(M, rtol=1e-12):
    """Smallest eigenvalue of the symmetric matrix ``M`` (batched).

    Raises ``ValueError`` when ``M`` is asymmetric beyond ``rtol * |M|``.
    """
    M = np.asarray(M, dtype=float)
    asym = np.linalg.norm(M - np.swapaxes(M, -1, -2), axis=(-2, -1))
    scale = np.linalg.norm(M, axis=(-2, -1))
    if np.any(asym > rtol * np.maximum(scale, np.finfo(float).tiny)):
        raise ValueError(f"matrix not symmetric: asymmetry {np.max(asym):.3e}")
    out = np.linalg.eigvalsh(sym(M))[..., 0]
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Lyapunov equation
# --------------------------------------------------------------------------


def _lyap_operator(B):
    # row-major vec: vec(B J) = (B kron I) vec J, vec(J B^T) = (I kron B) vec J
    n = B.shape[-1]
    ident = np.eye(n)
    L = np.einsum("...ij,kl->...ikjl", B, ident) + np.einsum("ij,...kl->...ikjl", ident, B)
    return L.reshape(B.shape[:-2] + (n * n, n * n))


def lyap_solve_batch(B, RHS, check=True):
    """Solve ``B J + J B^T = RHS`` for a stack of problems.

    Parameters
    ----------
    B, RHS : ndarray, shape (..., n, n)
    check : bool
        Verify the stability margin first (costs one batched eigensolve).
    """
    B = np.asarray(B, dtype=float)
    RHS = np.asarray(RHS, dtype=float)
    n = B.shape[-1]
    if check:
        margin = np.min(np.atleast_1d(stability_margin(B)))
        if not margin > 0:
            raise LyapunovError(float(margin))
    if n == 1:
        return RHS / (2.0 * B)
    L = _lyap_operator(B)
    rhs = RHS.reshape(RHS.shape[:-2] + (n * n, 1))
    J = np.linalg.solve(L, rhs).reshape(RHS.shape)
    return sym(J)


def lyap_solve(prob):
    """Solve the Lyapunov problem by direct linearised solve.

    Returns
    -------
    J : ndarray, shape (n, n)
        Symmetric solution of ``B J + J B^T = RHS``.
    """
    margin = stability_margin(prob.B)
    if not margin > 0:
        raise LyapunovError(margin)
    return lyap_solve_batch(prob.B, prob.RHS, check=False)


def lyap_quadrature(prob, tol=1e-10, max_doublings=60):
    """``int_0^inf exp(-yB) RHS exp(-yB^T) dy`` by adaptive quadrature.

    The integral is truncated where the integrand (divided by the decay rate)
    drops below ``tol * |RHS|``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    margin = stability_margin(prob.B)
    if not margin > 0:
        raise LyapunovError(margin)
    B, R = prob.B, prob.RHS
    rnorm = max(np.linalg.norm(R), np.finfo(float).tiny)

    def integrand(y):
        E = expm(-y * B)
        return E @ R @ E.T

    y_max = max(np.log(max(rnorm / tol, 2.0)) / (2.0 * margin), 1.0 / margin)
    # non-normal B can have transient growth, so push the horizon out until
    # the neglected tail is below tol
    for _ in range(max_doublings):
        if np.linalg.norm(integrand(y_max)) / (2.0 * margin) <= tol * min(rnorm, 1.0):
            break
        y_max *= 1.5
    else:
        raise QuadratureError(np.linalg.norm(integrand(y_max)) / (2.0 * margin), tol)

    val, err = quad_vec(integrand, 0.0, y_max, epsabs=tol, epsrel=0.0, norm="max", limit=2000)
    if err > 10.0 * tol:
        raise QuadratureError(err, tol)
    return sym(val)
