"""Ambiguity sets: standard form, verification and lifting constructors."""
from .sets import (AmbiguityError, AmbiguitySet, ConfidenceSet, MomentConstraints, box_set, from_boxes,
                   from_point, from_support, make_set)
from .verify import (Certificate, RegularityReport, VerificationReport, certify, check_regularity,
                     require_certified, verify_nesting)
from .lifting import (disjoint_intervals, huber, lift_huber, lift_mad, lift_mean, lift_mean_covariance,
                      nested_intervals)
