"""Robust statistics on persistent homology of metric measure spaces.

Estimate the distribution of barcodes over fixed-size subsamples of a
finite metric measure space, compare such distributions, and run tests
and confidence intervals on them.
"""

__version__ = "0.1.0"

from .barcode import Barcode, bottleneck_distance, parse_reference
from .filtration import FilteredComplex, vietoris_rips, weak_witness
from .mm_space import FiniteMetricSpace, from_distance_matrix, from_points
from .persistence import compute_barcode
from .stats import BarcodeDistribution, RealDistribution, phi_estimate

__all__ = [
    "Barcode",
    "BarcodeDistribution",
    "FiniteMetricSpace",
    "FilteredComplex",
    "RealDistribution",
    "bottleneck_distance",
    "compute_barcode",
    "from_distance_matrix",
    "from_points",
    "parse_reference",
    "phi_estimate",
    "vietoris_rips",
    "weak_witness",
]
