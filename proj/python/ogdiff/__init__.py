"""Optimal Gaussian diffusion and clean-manifold guided sampling on synthetic
multi-agent trajectory scenes."""

from ._core import (  # noqa: F401
    Scene,
    cluster,
    controllable_metrics,
    guide,
    kl_gaussian,
    optimal_prior,
    prediction_metrics,
    sample,
    sliced_wasserstein,
    validate_prior,
    vp_alpha_bars,
    __version__,
)

__all__ = [
    "Scene",
    "cluster",
    "controllable_metrics",
    "guide",
    "kl_gaussian",
    "optimal_prior",
    "prediction_metrics",
    "sample",
    "sliced_wasserstein",
    "validate_prior",
    "vp_alpha_bars",
    "__version__",
]
