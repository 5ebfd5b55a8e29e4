"""L2 small-ball probabilities for demeaned Green Gaussian processes."""

from .errors import SmallBallError
from .process_catalog import Family, ProcessSpec, demean_kernel, integrated_kernel, kernel
from .spectral_oracle import Spectrum, closed_form_spectrum, nystrom_spectrum, verify_theorem1
from .characteristic_spectra import CharFunction, distortion_constant, roots, spectrum_from_roots
from .smallball import QuadFormDist, asymptotic_prob, li_comparison, quadform_cdf, quadform_mc, report

__version__ = "0.1.0"

__all__ = [
    "CharFunction",
    "Family",
    "ProcessSpec",
    "QuadFormDist",
    "SmallBallError",
    "Spectrum",
    "asymptotic_prob",
    "closed_form_spectrum",
    "demean_kernel",
    "distortion_constant",
    "integrated_kernel",
    "kernel",
    "li_comparison",
    "nystrom_spectrum",
    "quadform_cdf",
    "quadform_mc",
    "report",
    "roots",
    "spectrum_from_roots",
    "verify_theorem1",
]
