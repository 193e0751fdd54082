"""Unit-distance constructions for finite-dimensional normed spaces."""

__version__ = "0.1.0"

from .norms import (NormOracle, euclidean, lp_norm, parse_norm_spec, perturbed_lp_norm,
                    strict_convexity_probe)
from .construct import GapSpec, proposition_spec
from .construct2d import build_2d_generators, warmup_gapspec
from .gap import PointSet, count_directional, count_pairwise, materialize
from .composer import SizeTable, compose_pointset, decompose

__all__ = [
    "NormOracle", "euclidean", "lp_norm", "parse_norm_spec", "perturbed_lp_norm",
    "strict_convexity_probe", "GapSpec", "proposition_spec", "build_2d_generators",
    "warmup_gapspec", "PointSet", "count_directional", "count_pairwise", "materialize",
    "SizeTable", "compose_pointset", "decompose",
]
