"""Gradient-flow refinement of 2D generative models with verification oracles."""

__version__ = "0.1.0"

from dgflow.divergences import JS, KL, LOGD, FDivergence, get_divergence  # noqa: F401
from dgflow.refine import (  # noqa: F401
    DdlsConfig,
    DotConfig,
    FlowConfig,
    ParticleBatch,
    RatioStack,
)
