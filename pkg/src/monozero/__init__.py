"""Stochastic dynamics and solvers for zeros of monotone Lipschitz operators.

The package simulates a corrected stochastic flow for the root-finding
problem M(x) = 0 with monotone Lipschitz M, runs the stochastic optimistic
and extragradient iterations under noisy operator evaluations, and checks
the resulting trajectories against closed-form ergodic error bounds.
"""

from monozero.operators import (
    OperatorSpec,
    ZeroCertificate,
    BilinearProblem,
    affine_operator,
    shifted_operator,
    rotation_operator,
    zero_operator,
    identity_operator,
    strong_rotation_operator,
    bilinear_problem,
    build_bilinear,
    resolvent,
    yosida,
    lipschitz_estimate,
)
from monozero.oracle import NoiseModel, SeedSpec, noisy_eval, variance_estimate
from monozero.sde import (
    ParamSchedule,
    DiffusionSpec,
    SdeTrajectory,
    simulate,
    anchor,
    continuous_bounds,
    initial_anchor_energy,
)
from monozero.solvers import (
    SolverConfig,
    IterateTrace,
    run_ogda,
    run_eg,
    run_forward,
    ogda_bound,
    eg_bound,
)
from monozero.metrics import (
    RunRecord,
    EnsembleSummary,
    aggregate,
    primal_dual_gap,
)

__version__ = "0.1.0"
