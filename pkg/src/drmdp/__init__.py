"""Distributionally robust Markov decision processes with nested conic ambiguity sets."""
__version__ = "0.1.0"

from .ambiguity import (AmbiguityError, AmbiguitySet, ConfidenceSet, MomentConstraints, box_set, certify,
                        check_regularity, from_boxes, from_point, from_support, make_set, verify_nesting)
from .cones import (Cone, Free, NonNegative, PositiveSemidefinite, Product, RotatedSecondOrder, SecondOrder, Zero,
                    dual_cone)
from .conic import ConicProgramIR, SolveOutcome, SolveStatus, Tolerances, solve
from .dp import (DistributionallyRobustSolution, UncertainMdp, backward_induction, bellman_apply,
                 value_iteration)
from .io import ProblemError, dump_problem, load_problem
from .mdp import (ActionSpace, FixedParameters, Horizon, MdpError, MdpSkeleton, Policy, StateSpace, classical_dp,
                  evaluate_policy)
from .srobust import (SRobustError, SRobustInstance, SRobustSolution, best_response_gap, solve_example,
                      solve_srobust, worst_case_value)
