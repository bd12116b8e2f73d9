"""Builtin example systems.

Names and parameter schemas live in ``registry.json`` next to this module;
:func:`manifest` returns it parsed. Every builtin uses the
fluctuation-dissipation noise ``sigma sigma^T = 2 kBT gamma`` and supplies
analytic derivatives for all coefficient fields.
"""
from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

import numpy as np

from .core import NuclearLog, PolynomialRadial, Quadratic, Scaling, SystemSpec
from .errors import RegistryError

__all__ = ["manifest", "builtin_names", "resolve_params", "make_builtin", "benchmark_system"]


@lru_cache(maxsize=None)
def _manifest_text():
    return resources.files(__package__).joinpath("registry.json").read_text()


def manifest():
    """Machine-readable registry manifest (fresh copy)."""
    return json.loads(_manifest_text())


def builtin_names():
    return sorted(manifest()["systems"])


def _check_value(name, pname, schema, value):
    kind = schema["type"]
    if kind == "enum":
        if value not in schema["choices"]:
            raise RegistryError(f"{name}: {pname} must be one of {schema['choices']}, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        raise RegistryError(f"{name}: {pname} must be a number, got {value!r}")
    if kind == "int":
        if int(value) != value:
            raise RegistryError(f"{name}: {pname} must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if not math.isfinite(value):
        raise RegistryError(f"{name}: {pname} must be finite")
    constraint = schema.get("constraint", "finite")
    if constraint == "positive" and not value > 0:
        raise RegistryError(f"{name}: {pname} must be positive, got {value}")
    if constraint == "nonnegative" and not value >= 0:
        raise RegistryError(f"{name}: {pname} must be nonnegative, got {value}")
    return value


def resolve_params(name, params=None):
    """Validate ``params`` for builtin ``name`` and fill in defaults."""
    systems = manifest()["systems"]
    if name not in systems:
        raise RegistryError(f"unknown builtin system {name!r}; known: {sorted(systems)}")
    schema = systems[name]["params"]
    params = dict(params or {})
    unknown = set(params) - set(schema)
    if unknown:
        raise RegistryError(f"{name}: unknown parameter(s) {sorted(unknown)}")
    out = {}
    for pname, ps in schema.items():
        if pname in params:
            out[pname] = _check_value(name, pname, ps, params[pname])
        elif ps.get("required", False):
            raise RegistryError(f"{name}: missing required parameter {pname!r}")
        else:
            out[pname] = ps["default"]
    return out


# --------------------------------------------------------------------------
# coefficient building blocks (all broadcast over leading axes of q)
# --------------------------------------------------------------------------


def _modulation(amp, freq):
    def f(t):
        return 1.0 + amp * math.sin(freq * t)

    def df(t):
        return amp * freq * math.cos(freq * t)

    return f, df


def _constant(M):
    M = np.asarray(M, dtype=float)

    def fn(t, q, *rest):
        return np.broadcast_to(M, np.shape(q)[:-1] + M.shape)

    return fn


def _diag_drag(gamma, amp, n):
    idx = np.arange(n)
    eye = np.eye(n)

    def gamma_fn(t, q):
        q = np.asarray(q, dtype=float)
        return (gamma + amp * np.sin(q))[..., None] * eye

    def dgamma(t, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape + (n, n))
        out[..., idx, idx, idx] = amp * np.cos(q)
        return out

    return gamma_fn, dgamma


def _fd_noise(gamma, amp, kBT, n):
    eye = np.eye(n)

    def sigma(t, q, p):
        q = np.asarray(q, dtype=float)
        return np.sqrt(2.0 * kBT * (gamma + amp * np.sin(q)))[..., None] * eye

    return sigma


def _harmonic(stiffness):
    def V(t, q):
        q = np.asarray(q, dtype=float)
        return 0.5 * stiffness * np.sum(q * q, axis=-1)

    def grad_V(t, q):
        return stiffness * np.asarray(q, dtype=float)

    return V, grad_V


def _zeros(extra):
    def fn(t, q):
        return np.zeros(np.shape(q) + extra)

    return fn


def _check_amp(name, label, amp, bound):
    if not abs(amp) < bound:
        raise RegistryError(f"{name}: |{label}| must be < {bound}, got {amp}")


def _drag_and_noise(name, P, n):
    _check_amp(name, "gamma_amp", P["gamma_amp"], P["gamma"])
    gamma_fn, dgamma = _diag_drag(P["gamma"], P["gamma_amp"], n)
    return dict(gamma=gamma_fn, dgamma=dgamma, sigma=_fd_noise(P["gamma"], P["gamma_amp"], P["kBT"], n))


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _ou_linear(P):
    V, grad_V = _harmonic(P["omega"] ** 2)
    return dict(
        n=1,
        kinetic=Quadratic(P["m"]),
        A=_constant(np.eye(1)),
        dA=_zeros((1, 1)),
        dA_dt=_zeros((1,)),
        V=V,
        grad_V=grad_V,
        **_drag_and_noise("ou-linear", dict(P, gamma_amp=0.0), 1),
    )


def _em1d(P):
    e, phi = P["e"], P["phi"]
    f, df = _modulation(P["mod_amp"], P["mod_freq"])

    def psi(t, q):
        return np.full(np.shape(q), e * phi * f(t))

    def dpsi_dt(t, q):
        return np.full(np.shape(q), e * phi * df(t))

    V, grad_V = _harmonic(e * P["kappa"])
    return dict(
        n=1,
        kinetic=Quadratic(P["m"]),
        A=_constant(np.eye(1)),
        dA=_zeros((1, 1)),
        dA_dt=_zeros((1,)),
        psi=psi,
        dpsi=_zeros((1,)),
        d2psi=_zeros((1, 1)),
        dpsi_dt=dpsi_dt,
        V=V,
        grad_V=grad_V,
        **_drag_and_noise("em1d", P, 1),
    )


def _em2d(P):
    eB = P["e"] * P["B"]
    f, df = _modulation(P["mod_amp"], P["mod_freq"])

    def _rot(q):
        q = np.asarray(q, dtype=float)
        return np.stack([-q[..., 1], q[..., 0]], axis=-1)

    def psi(t, q):
        return 0.5 * eB * f(t) * _rot(q)

    def dpsi(t, q):
        out = np.zeros(np.shape(q) + (2,))
        out[..., 0, 1] = -0.5 * eB * f(t)
        out[..., 1, 0] = 0.5 * eB * f(t)
        return out

    def dpsi_dt(t, q):
        return 0.5 * eB * df(t) * _rot(q)

    V, grad_V = _harmonic(P["e"] * P["kappa"])
    return dict(
        n=2,
        kinetic=Quadratic(P["m"]),
        A=_constant(np.eye(2)),
        dA=_zeros((2, 2)),
        dA_dt=_zeros((2,)),
        psi=psi,
        dpsi=dpsi,
        d2psi=_zeros((2, 2)),
        dpsi_dt=dpsi_dt,
        V=V,
        grad_V=grad_V,
        **_drag_and_noise("em2d", P, 2),
    )


def _metric_pieces(name, P, n):
    """Diagonal metric ``g_ii = g0 (1 + g_amp sin q_{s(i)}) f(t)``, ``A = g^{-1}``.

    ``s`` is the identity in 1D and swaps the coordinates in 2D.
    """
    _check_amp(name, "g_amp", P["g_amp"], 1.0)
    _check_amp(name, "mod_amp", P["mod_amp"], 1.0)
    g0, ga = P["g0"], P["g_amp"]
    f, df = _modulation(P["mod_amp"], P["mod_freq"])
    src = np.arange(n)[::-1] if n == 2 else np.arange(n)
    idx = np.arange(n)

    def _g(t, q):
        return g0 * (1.0 + ga * np.sin(np.asarray(q, dtype=float)[..., src])) * f(t)

    def A(t, q):
        out = np.zeros(np.shape(q) + (n,))
        out[..., idx, idx] = 1.0 / _g(t, q)
        return out

    def dA(t, q):
        q = np.asarray(q, dtype=float)
        g = _g(t, q)
        out = np.zeros(q.shape + (n, n))
        # d A^{ii} / d q^{s(i)}
        out[..., src, idx, idx] = -g0 * ga * np.cos(q[..., src]) * f(t) / g**2
        return out

    def dA_dt(t, q):
        q = np.asarray(q, dtype=float)
        g = _g(t, q)
        out = np.zeros(q.shape + (n,))
        out[..., idx, idx] = -g0 * (1.0 + ga * np.sin(q[..., src])) * df(t) / g**2
        return out

    return dict(A=A, dA=dA, dA_dt=dA_dt)


def _manifold(n):
    name = f"manifold{n}d"

    def build(P):
        V, grad_V = _harmonic(P["kappa"])
        return dict(
            n=n,
            kinetic=Quadratic(P["m"]),
            V=V,
            grad_V=grad_V,
            **_metric_pieces(name, P, n),
            **_drag_and_noise(name, P, n),
        )

    return build


def _poly1d(P):
    k1, k2 = P["k1"], P["k2"]
    if not 1 <= k1 <= k2 <= 4:
        raise RegistryError(f"poly1d: need 1 <= k1 <= k2 <= 4, got k1={k1}, k2={k2}")
    _check_amp("poly1d", "mod_amp", P["mod_amp"], 1.0)
    f, _ = _modulation(P["mod_amp"], P["mod_freq"])
    coeffs = []
    for l in range(k1, k2 + 1):
        d = P[f"d{l}"]
        if P["mod_amp"] == 0.0:
            coeffs.append(d)
        else:
            coeffs.append(lambda t, d=d: d * f(t))
    V, grad_V = _harmonic(P["kappa"])
    return dict(
        n=1,
        kinetic=PolynomialRadial(tuple(coeffs), k1),
        A=_constant(np.eye(1)),
        dA=_zeros((1, 1)),
        dA_dt=_zeros((1,)),
        V=V,
        grad_V=grad_V,
        **_drag_and_noise("poly1d", P, 1),
    )


def _nuclear1d(P):
    V, grad_V = _harmonic(P["kappa"])
    return dict(
        n=1,
        kinetic=NuclearLog(P["c1"], P["c2"], P["m"], Scaling(P["scaling"])),
        A=_constant(np.eye(1)),
        dA=_zeros((1, 1)),
        dA_dt=_zeros((1,)),
        V=V,
        grad_V=grad_V,
        **_drag_and_noise("nuclear1d", P, 1),
    )


_BUILDERS = {
    "ou-linear": _ou_linear,
    "em1d": _em1d,
    "em2d": _em2d,
    "manifold1d": _manifold(1),
    "manifold2d": _manifold(2),
    "poly1d": _poly1d,
    "nuclear1d": _nuclear1d,
}


def make_builtin(name, params=None):
    """Construct builtin system ``name`` from scalar ``params``.

    Raises
    ------
    RegistryError
        Unknown name, unknown/missing parameter, or a value out of range.
    """
    P = resolve_params(name, params)
    fields = _BUILDERS[name](P)
    return SystemSpec(name=name, params=P, **fields)


def benchmark_system(kinetic=None):
    """1D test system with drag ``2 + sin q``, ``V = q^2/2``, ``kBT = 1``, ``m = 1``.

    ``kinetic`` swaps the kinetic profile while keeping ``A = 1``.
    """
    spec = make_builtin(
        "em1d", {"m": 1.0, "e": 1.0, "gamma": 2.0, "gamma_amp": 1.0, "kBT": 1.0, "kappa": 1.0}
    )
    if kinetic is not None:
        spec = spec.replace(kinetic=kinetic, name="benchmark")
    else:
        spec = spec.replace(name="benchmark")
    return spec
