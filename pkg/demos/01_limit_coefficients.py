"""Walk through the limiting coefficients of two builtin systems.

When the mass goes to zero the position obeys a first-order SDE whose drift
picks up an extra term S(q), built from the solution J of a Lyapunov
equation. This script prints those pieces for the 1-D benchmark (drag
2 + sin q, harmonic potential) and for a charged particle in a 2-D magnetic
field, then checks the J identity for thermal noise on a curved space.

Run:  python demos/01_limit_coefficients.py
"""
import numpy as np

from smallmass import benchmark_system, j_matrix, limiting_coeffs, make_builtin

np.set_printoptions(precision=4, suppress=True)

# Coefficients are batched: points go on the leading axis, coordinates last.
spec = benchmark_system()
q = np.linspace(-np.pi, np.pi, 5)[:, None]
lc = limiting_coeffs(spec, 0.0, q)
print("benchmark:", spec.params)
print(f"{'q':>8} {'drag':>8} {'S':>9} {'drift':>9}")
for qi, g, s, d in zip(q[:, 0], lc.gamma_tilde[:, 0, 0], lc.S[:, 0], lc.limiting_drift[:, 0]):
    print(f"{qi:8.3f} {g:8.4f} {s:9.4f} {d:9.4f}")
# Here S = -gamma'(q) / gamma(q)^2 * kBT: the particle drifts towards low drag.

# In 2-D the vector potential adds an antisymmetric part to the effective drag.
em = make_builtin("em2d", {"m": 1.0, "e": 1.0, "B": 1.5, "gamma": 1.0, "gamma_amp": 0.5, "kBT": 1.0})
q2 = np.array([[0.0, 0.0], [0.5, -0.3]])
lc2 = limiting_coeffs(em, 0.0, q2)
for i, qi in enumerate(q2):
    print(f"\nem2d at q = {qi}")
    print("  effective drag:\n", lc2.gamma_tilde[i])
    print("  J:\n", lc2.J[i])
    print("  noise-induced drift S:", lc2.S[i])

# With Sigma = 2 kBT gamma and a quadratic kinetic energy, J is kBT times
# the identity even though the drag is not symmetric.
print("max |J - kBT I|:", np.abs(lc2.J - np.eye(2)).max())

# On a curved configuration space with A = g(q)^{-1} this becomes J = kBT g(q).
man = make_builtin("manifold1d", {"m": 1.0, "gamma": 1.0, "kBT": 0.7, "g0": 2.0, "g_amp": 0.4})
qs = np.linspace(-2, 2, 5)[:, None]
ratio = j_matrix(man, 0.0, qs)[:, 0, 0] * man.A(0.0, qs)[:, 0, 0] / 0.7
print("manifold1d, J / (kBT g):", ratio)
