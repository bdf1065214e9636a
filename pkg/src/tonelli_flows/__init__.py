"""Right-invariant Tonelli Lagrangian dynamics on U(1), SO(3) and a truncated Diff(S^1)."""
from .groups import (DiffS1, EvolutionResult, GroupElement, GroupError, SO3, U1, make_group)
from .metric import InertiaOperator, ad, ad_star, ad_transpose, inertia_apply, inertia_solve, inner
from .lagrangian import (LagrangianSpec, LegendreError, NotTonelli, check_growth, check_tonelli,
                         energy, eval_L, fiber_derivative, hamiltonian, legendre_inverse,
                         verify_growth)
from .flow import (BlowUp, FlowDiagnostics, FlowState, em_epdiff_rhs, ep_rhs, integrate,
                   lorentz_force, magnetic_form, regularity_monitor)
from .variational import (ConnectOptions, DegenerateEndpoints, DiscretizedPath, MinimizerReport,
                          NotConverged, action, action_gradient, connect, el_residual)
from .mane import (ChainViolation, ManeEstimate, ManeOptions, e0, estimate_all, estimate_c,
                   verify_chain)

__all__ = [
    "DiffS1", "EvolutionResult", "GroupElement", "GroupError", "SO3", "U1", "make_group",
    "InertiaOperator", "ad", "ad_star", "ad_transpose", "inertia_apply", "inertia_solve", "inner",
    "LagrangianSpec", "LegendreError", "NotTonelli", "check_growth", "check_tonelli", "energy",
    "eval_L", "fiber_derivative", "hamiltonian", "legendre_inverse", "verify_growth",
    "BlowUp", "FlowDiagnostics", "FlowState", "em_epdiff_rhs", "ep_rhs", "integrate",
    "lorentz_force", "magnetic_form", "regularity_monitor",
    "ConnectOptions", "DegenerateEndpoints", "DiscretizedPath", "MinimizerReport", "NotConverged",
    "action", "action_gradient", "connect", "el_residual",
    "ChainViolation", "ManeEstimate", "ManeOptions", "e0", "estimate_all", "estimate_c",
    "verify_chain",
]
