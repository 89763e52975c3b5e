"""Worst-case optimal joins with exact output-size bounds.

Modules: ``relation`` (sorted relations and access paths), ``query``
(queries and degree constraints), ``lp`` and ``bounds`` (exact LP bounds and
dual certificates), ``proof`` (proof sequences), ``executor`` (join
engines), ``workbench`` (generators and entropy oracles) and ``cli``.
"""

from .bounds import agm_bound, modular_bound, polymatroid_bound, shannon_flow_dual
from .executor import backtrack_join, bruteforce_join, panda_interpret, triangle_heavy_light
from .proof import derive, validate
from .query import ConstraintSet, DegreeConstraint, Query, parse_constraints, parse_query
from .relation import Counters, Relation

__all__ = [
    "ConstraintSet",
    "Counters",
    "DegreeConstraint",
    "Query",
    "Relation",
    "agm_bound",
    "backtrack_join",
    "bruteforce_join",
    "derive",
    "modular_bound",
    "panda_interpret",
    "parse_constraints",
    "parse_query",
    "polymatroid_bound",
    "shannon_flow_dual",
    "triangle_heavy_light",
    "validate",
]
