"""Analytic proximal operators used in place of learned proximal networks."""

import dataclasses
import math

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigurationError

KINDS = (
    "soft_threshold",
    "nonneg_soft_threshold",
    "box_project",
    "box_then_smooth",
    "identity",
    "l1_then_unit_columns",
)

L1_KINDS = ("soft_threshold", "nonneg_soft_threshold", "l1_then_unit_columns")


@dataclasses.dataclass(frozen=True)
class ProxSpec:
    """Selects one analytic proximal mapping and its parameters.

    ``box_then_smooth`` clamps to ``[lo, hi]`` and then applies a Gaussian
    blur of width ``smooth_sigma`` to every channel. The composite is not the
    proximal map of any single function; it is a heuristic background prior.
    """

    kind: str = "identity"
    threshold: float = 0.0
    smooth_sigma: float = 0.0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown prox kind {self.kind!r}; expected one of {KINDS}")
        for name in ("threshold", "smooth_sigma", "lo", "hi"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"prox {name} must be finite")
        if self.threshold < 0:
            raise ConfigurationError(f"prox threshold must be >= 0, got {self.threshold}")
        if self.smooth_sigma < 0:
            raise ConfigurationError(f"smooth_sigma must be >= 0, got {self.smooth_sigma}")
        if self.lo > self.hi:
            raise ConfigurationError(f"box bounds lo={self.lo} > hi={self.hi}")

    def with_threshold(self, threshold):
        return dataclasses.replace(self, threshold=float(threshold))


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def nonneg_soft_threshold(x, t):
    return np.maximum(x - t, 0.0)


def gaussian_taps(sigma):
    """1D Gaussian truncated at 3 sigma and normalized to sum 1."""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    return g / g.sum()


def gaussian_smooth(x, sigma):
    """Separable Gaussian blur over the two leading (spatial) axes.

    Borders are handled by symmetric reflection so constant images are fixed.
    """
    if sigma == 0:
        return np.array(x, dtype=np.float64)
    g = gaussian_taps(sigma)
    y = correlate1d(np.asarray(x, dtype=np.float64), g, axis=0, mode="reflect")
    return correlate1d(y, g, axis=1, mode="reflect")


def unit_columns(a):
    """Scale each column to unit l2 norm; all-zero columns become ``e_1``."""
    a = np.array(a, dtype=np.float64)
    norms = np.linalg.norm(a, axis=0)
    zero = norms == 0
    a[:, ~zero] /= norms[~zero]
    if np.any(zero):
        a[:, zero] = 0.0
        a[0, zero] = 1.0
    return a


def apply_prox(spec, x):
    """Apply the proximal mapping selected by ``spec`` to ``x``."""
    if not isinstance(spec, ProxSpec):
        raise ConfigurationError(f"expected ProxSpec, got {type(spec).__name__}")
    x = np.asarray(x, dtype=np.float64)
    kind = spec.kind
    if kind == "identity":
        return x.copy()
    if kind == "soft_threshold":
        return soft_threshold(x, spec.threshold)
    if kind == "nonneg_soft_threshold":
        return nonneg_soft_threshold(x, spec.threshold)
    if kind == "box_project":
        return np.clip(x, spec.lo, spec.hi)
    if kind == "box_then_smooth":
        return gaussian_smooth(np.clip(x, spec.lo, spec.hi), spec.smooth_sigma)
    # l1_then_unit_columns
    if x.ndim != 2:
        raise ConfigurationError("l1_then_unit_columns expects a matrix")
    return unit_columns(soft_threshold(x, spec.threshold))
