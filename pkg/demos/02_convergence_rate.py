"""Measure how fast the full system approaches its small-mass limit.

Both the full second-order SDE and the limiting first-order SDE are driven by
the same Brownian path. The script sweeps eps, estimates
sup_t E|q_eps(t) - q(t)|^2 and fits a power law. With the noise-induced drift
included the fitted exponent is close to one; leaving that drift out makes
the error stall at a constant.

The path count is kept small so the demo runs in about half a minute; the
acceptance tests repeat this with 10^4 paths.

Run:  python demos/02_convergence_rate.py
"""
from smallmass import benchmark_system, momentum_decay_sweep, strong_error_sweep

spec = benchmark_system()
eps_list = [2.0**-k for k in range(4, 8)]
n_paths = 1000

full = strong_error_sweep(spec, eps_list, p=2, T=1.0, n_paths=n_paths, master_seed=7)
bare = strong_error_sweep(
    spec, eps_list, p=2, T=1.0, n_paths=n_paths, master_seed=7, include_noise_drift=False
)

print(f"{'eps':>10} {'error':>12} {'error w/o S':>14}")
for e, a, b in zip(eps_list, full.errors, bare.errors):
    print(f"{e:10.5f} {a:12.3e} {b:14.3e}")
print(f"fitted exponent with S:    {full.slope:.3f} +/- {full.slope_stderr:.3f}")
print(f"fitted exponent without S: {bare.slope:.3f} +/- {bare.slope_stderr:.3f}")

# The fast variable u = p - psi(q) itself shrinks like sqrt(eps) in L^2.
mom = momentum_decay_sweep(spec, eps_list, p=2, T=1.0, n_paths=n_paths, master_seed=7)
print(f"sup_t E|u|^2 exponent:     {mom.slope:.3f}")
