"""Error fields, exponential-moment constants and index-triple counting."""

from .enumeration import (EnumerationReport, IndexTriple, Oracle, enumerate_survivors,
                          oracle_field, oracle_vanishes, paper_bound, survives)
from .moments import (BoundConstants, MCEstimate, constants, exp_moment_mc,
                      exp_moment_quadrature, moment_term_mc, proposition_bound)
from .phi import PhiField, check_cancellations, sample_background

__all__ = [
    "BoundConstants", "EnumerationReport", "IndexTriple", "MCEstimate", "Oracle",
    "PhiField", "check_cancellations", "constants", "enumerate_survivors",
    "exp_moment_mc", "exp_moment_quadrature", "moment_term_mc", "oracle_field",
    "oracle_vanishes", "paper_bound", "proposition_bound", "sample_background", "survives",
]
