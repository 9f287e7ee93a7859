"""Second-order optimality diagnostics for nonsmooth multiobjective problems.

Expressions in a small piecewise-smooth grammar, Clarke and second-order
upper directional derivatives, tangent-set membership, constraint
qualification checks and nonoptimality certificate search.
"""

from .certify import (
    Certificate,
    SearchBudget,
    first_order_filter,
    geoffrion_filter,
    second_order_filter,
    sfkkt_filter,
    verify_certificate,
)
from .cq import CQReport, check_inclusion_cq, check_mfscq, check_zscq, implication_audit
from .deriv import DerivEstimate, SamplingConfig, clarke_dd, second_order_udd
from .expr import ExprSyntaxError, evaluate, kinks, parse, to_str
from .geometry import FeasibilityOracle, Trilean, in_second_order_tangent_set, in_tangent_cone
from .problem import InfeasiblePoint, PointContext, Tolerances, VectorProblem
from .structure import (
    active_set,
    directional_index_sets,
    in_A,
    in_B,
    in_L0,
    in_L2Q,
    in_L2Q0,
    in_LQ,
    is_critical_direction,
    lex_leq,
    lex_lt,
    lex_pairs,
    sample_critical_cone,
)

__version__ = "0.1.0"
