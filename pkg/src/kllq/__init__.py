"""kllq: streaming epsilon-approximate quantile sketches.

A compactor-hierarchy sketch with four practical refinements (lazy
compaction, anti-correlated parities, error spreading, sweep
compaction), weighted-stream support, a packed single-array storage
backend, and an evaluation harness for error-versus-size experiments.
"""

from .sketch import (
    INV_SQRT2,
    RankEstimate,
    Sketch,
    VariantFlags,
    capacity_at,
    error_bound,
    failure_probability,
    merge,
    retained_levels,
)
from .weighted import Base2Sketch, WeightedSketch, base2_decompose

__version__ = "0.1.0"

__all__ = [
    "INV_SQRT2",
    "RankEstimate",
    "Sketch",
    "VariantFlags",
    "capacity_at",
    "error_bound",
    "failure_probability",
    "merge",
    "retained_levels",
    "Base2Sketch",
    "WeightedSketch",
    "base2_decompose",
    "__version__",
]
