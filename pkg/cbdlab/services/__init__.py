"""Numerical services - grids, convex bodies, ellipsoids, weights and sparse forms

This module provides the computational layer behind the CLI: the dyadic
grid, convex bodies of vector functions, ellipsoid rounding, matrix weights,
sparse families, the domination pipeline, generalized commutators and the
property suites that tie them together.
"""

from cbdlab.services.bodies import ConvexBody, dot, estimate_dot
from cbdlab.services.commutators import (
    SymbolPair,
    a_st_constants,
    build_symbols,
    lp_commutator_report,
)
from cbdlab.services.domination import (
    KernelOperator,
    cbd_pipeline,
    domination_checks,
    ltilde_opnorm,
    make_operator,
    weighted_opnorm_bounds,
)
from cbdlab.services.grid import Cube, DyadicGrid, GridFunction
from cbdlab.services.john import Ellipsoid, mvee, round_transform
from cbdlab.services.sparse import (
    PairFormConfig,
    SparseFamily,
    equivalence_report,
    verify_sparse,
)
from cbdlab.services.suites import run_suites
from cbdlab.services.weights import MatrixWeight, make_weight

__all__ = [
    "ConvexBody",
    "Cube",
    "DyadicGrid",
    "Ellipsoid",
    "GridFunction",
    "KernelOperator",
    "MatrixWeight",
    "PairFormConfig",
    "SparseFamily",
    "SymbolPair",
    "a_st_constants",
    "build_symbols",
    "cbd_pipeline",
    "domination_checks",
    "dot",
    "equivalence_report",
    "estimate_dot",
    "lp_commutator_report",
    "ltilde_opnorm",
    "make_operator",
    "make_weight",
    "mvee",
    "round_transform",
    "run_suites",
    "verify_sparse",
    "weighted_opnorm_bounds",
]
