"""Compound-Gaussian texture models fitted by EM to segmented multichannel signals."""

__version__ = "0.1.0"

from .em import CgFit, PosteriorMoments, fit, grid_search_kn
from .evaluation import build_empdf, evaluate_fits, kld, r_squared
from .marginal import MarginalModel, log_likelihood, pdf_grid
from .signal import MultichannelRecord, SegmentedSignal, ingest_csv, segment
from .texture import Exponential, Gamma, InverseGamma, simulate_cg

__all__ = [
    "CgFit",
    "PosteriorMoments",
    "fit",
    "grid_search_kn",
    "build_empdf",
    "evaluate_fits",
    "kld",
    "r_squared",
    "MarginalModel",
    "log_likelihood",
    "pdf_grid",
    "MultichannelRecord",
    "SegmentedSignal",
    "ingest_csv",
    "segment",
    "Exponential",
    "Gamma",
    "InverseGamma",
    "simulate_cg",
]
