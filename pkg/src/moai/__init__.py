"""Multi-view pointmap warping, proximity-based mesh conditioning, and
attention toolkit with analytic oracles."""

from . import (  # noqa: F401
    attention,
    conditioning,
    geometry,
    metrics,
    scenes,
    surface,
    tensorio,
)

__version__ = "0.1.0"
