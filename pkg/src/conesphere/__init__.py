"""Numerics for hyperbolic 2-spheres with conical singularities.

The package computes the accessory parameters of the second-order Fuchsian
equation attached to a configuration of cone points on the Riemann sphere by
making its monodromy unitarizable, reconstructs the hyperbolic metric density
from the resulting frame, evaluates the regularized energy functional of the
metric, and builds the Hermitian metric on the moduli space of configurations
from the pairing of the associated rational basis against the metric density.
Finite-difference drivers cross-check the action gradient, the z-bar
derivatives of the accessory parameters, and the potential property of the
action against each other.
"""

__version__ = "0.1.0"

from .errors import (
    BranchError,
    BudgetError,
    ConesphereError,
    DomainError,
    ExtrapolationError,
    PathError,
    ReducibleError,
    SeriesError,
    SolverError,
    UnsupportedOrderError,
    ValidationError,
)
from .model import (
    AccessoryVector,
    Configuration,
    OrderData,
    StressTensor,
    complete_accessories,
    stress_tensor,
    t_phi_eval,
    validate_orders,
)
from .transport import (
    FrameTransport,
    FrobeniusSeed,
    Path,
    choose_base_point,
    frobenius_seed,
    frobenius_series,
    plan_path,
    propagator,
    transport,
)
from .monodromy import (
    HermitianForm,
    LoopWorkspace,
    MonodromyRep,
    SolveReport,
    default_clearance,
    elliptic_fixed_points,
    invariant_form,
    loop_monodromy,
    monodromy_rep,
    reality_residual,
    solve_accessory,
)
from .field import (
    FieldEvaluator,
    asymptotic_report,
    lemma3_check,
    liouville_defect,
    schwarzian_defect,
    total_area,
)
from .quadrature import PlanarDomain, QuadBudget, budget_preset
from .action import (
    ActionValue,
    action,
    action_epsilon,
    moduli_stencil,
    solve_and_action,
    verify_action_gradient,
)
from .kahler import (
    GramMatrix,
    MetricMatrix,
    dbar_solve,
    gram,
    kernel_R,
    q_basis_values,
    verify_cbar_metric,
    verify_kahler_potential,
)
