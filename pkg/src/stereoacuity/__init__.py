"""Continuous stereoacuity measurement: adaptive display gamma calibration,
anaglyph random-dot stereograms, and a Bayesian expected-entropy-minimization
staircase, with an HTTP session service and simulation/analysis CLI."""

from .geometry import DEFAULT_PROFILE, DisplayProfile, arcsec_to_pixels, pixels_to_arcsec
from .psi import PsiConfig, ThresholdResult

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PROFILE",
    "DisplayProfile",
    "PsiConfig",
    "ThresholdResult",
    "arcsec_to_pixels",
    "pixels_to_arcsec",
    "__version__",
]
