"""Moreau-envelope generalization bounds and the experiments around them."""
from . import bounds, envelope, fitters, harness, oracles, synthdata

__version__ = "0.1.0"

__all__ = ["envelope", "synthdata", "fitters", "bounds", "oracles", "harness", "__version__"]
