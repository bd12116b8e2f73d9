"""Small-mass limits of noisy, dissipative Hamiltonian systems.

Simulate the full second-order system, build the first-order limiting SDE
(including the noise-induced drift from a Lyapunov equation) and measure how
fast the two converge as the mass parameter ``eps`` goes to zero.
"""
from .core import (
    Custom,
    KineticEnergyModel,
    NuclearLog,
    PolynomialRadial,
    Quadratic,
    Scaling,
    State,
    SystemSpec,
    eval_kinetic,
    grad_p_H,
    grad_q_H,
    hamiltonian,
    pointwise,
)
from .errors import (
    BlowUpError,
    ConfigError,
    EvaluationError,
    ExperimentInvalid,
    FluctuationDissipationError,
    LyapunovError,
    QuadratureError,
    RegistryError,
    SmallMassError,
)
from .experiments import (
    ConvergenceReport,
    EnergyReport,
    Mode,
    energy_boundedness,
    fit_rate,
    momentum_decay_sweep,
    strong_error_sweep,
)
from .homogenize import (
    DriftAssembly,
    FluctDissMode,
    fluctdiss_drift,
    j_matrix,
    limiting_coeffs,
    noise_drift,
    q_tensor,
    tilde_gamma,
)
from .linalg import LyapunovProblem, expm, lyap_quadrature, lyap_solve, spd_floor, stability_margin
from .noise import NoisePath, TimeGrid
from .registry import benchmark_system, builtin_names, make_builtin, manifest
from .sde import (
    Scheme,
    TrajectoryEnsemble,
    integrate_pair,
    run_ensemble,
    sample_ensemble,
    step_full,
    step_limit,
)
from .validate import AssumptionReport, Box, check_assumptions, confinement_check, lyapunov_diagnostic

__version__ = "0.1.0"
