"""Interpolation-based reduced-order models for parametric elliptic PDEs.

The package couples a P1 finite element solver in space with surrogates in
the parameter domain (simplicial interpolation for a handful of parameters,
random-feature ELMs for many), and uses the resulting surrogate to recover
affine potentials from pixel-averaged internal data.
"""

from .errors import (
    ConfigurationError,
    FitFailure,
    InvalidArgument,
    NumericalFailure,
    OutOfDomain,
    UnsupportedDimension,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "FitFailure",
    "InvalidArgument",
    "NumericalFailure",
    "OutOfDomain",
    "UnsupportedDimension",
]
