"""Model-independent pre-processing of X-ray powder diffraction profiles."""

from .core import Pattern, Stage, StageRecord, load_pattern, save_pattern
from .deblur import (
    DeblurProblem,
    PeakRange,
    deblur_full_pattern,
    extract_peak_ranges,
    reconvolve_check,
    richardson_lucy,
)
from .estimators import (
    HLSVDRegressor,
    MorphologicalBackground,
    RichardsonLucyDeblurrer,
    StandardDeblurrer,
    WaveletDenoiser,
)
from .exceptions import (
    DomainError,
    GridError,
    NumericalError,
    ParseError,
    SizeError,
    StageError,
    XRPDError,
)
from .hlsvd import SinusoidComponent, SinusoidModel, hlsvd_fit, reconstruct
from .morphology import estimate_background
from .pipeline import PipelineConfig, emit_figure_tables, run_pipeline
from .synth import SynthSpec, synth_pattern
from .wavelet import daubechies_filter, denoise, dwt, idwt

__version__ = "0.1.0"

__all__ = [
    "Pattern", "Stage", "StageRecord", "load_pattern", "save_pattern",
    "DeblurProblem", "PeakRange", "deblur_full_pattern", "extract_peak_ranges",
    "reconvolve_check", "richardson_lucy",
    "HLSVDRegressor", "MorphologicalBackground", "RichardsonLucyDeblurrer",
    "StandardDeblurrer", "WaveletDenoiser",
    "DomainError", "GridError", "NumericalError", "ParseError", "SizeError",
    "StageError", "XRPDError",
    "SinusoidComponent", "SinusoidModel", "hlsvd_fit", "reconstruct",
    "estimate_background",
    "PipelineConfig", "emit_figure_tables", "run_pipeline",
    "SynthSpec", "synth_pattern",
    "daubechies_filter", "denoise", "dwt", "idwt",
]
