"""Sampling and Poincare-constant estimation for log-concave B-symmetric measures."""

__version__ = "0.1.0"

from .batch import Provenance, SampleBatch  # noqa: E402
from .geometry import (ConvexBody, RevolutionBody, dilate, make_cone, make_cylinder,  # noqa: E402
                       make_generic, make_hypercube, make_lp_ball, make_product, make_revolution,
                       make_simplex)
from .profiles import (NormalizedPair, RadialProfile, custom, exponential, gaussian,  # noqa: E402
                       normalize, power_exponential, uniform_cutoff)
from .rng import RngStream  # noqa: E402

__all__ = [
    "ConvexBody", "NormalizedPair", "Provenance", "RadialProfile", "RevolutionBody", "RngStream",
    "SampleBatch", "custom", "dilate", "exponential", "gaussian", "make_cone", "make_cylinder",
    "make_generic", "make_hypercube", "make_lp_ball", "make_product", "make_revolution",
    "make_simplex", "normalize", "power_exponential", "uniform_cutoff",
]
