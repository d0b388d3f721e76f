"""Synthetic rainy images from the additive rain convolutional model."""

import dataclasses

import numpy as np

from .errors import ConfigurationError, DimensionError
from .model import synthesize_rain
from .tensor import as_tensor

MAX_DENSITY = 0.05


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    density: float
    kernels: np.ndarray
    amplitude_range: tuple = (0.2, 0.8)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.density <= MAX_DENSITY:
            raise ConfigurationError(f"density must be in (0, {MAX_DENSITY}], got {self.density}")
        lo, hi = self.amplitude_range
        if not 0 < lo <= hi:
            raise ConfigurationError(f"amplitude range must satisfy 0 < lo <= hi, got {self.amplitude_range}")
        kernels = as_tensor(self.kernels, 4, "kernels")
        if kernels.shape[2] != 3:
            raise DimensionError(f"kernels must have 3 channels, got {kernels.shape[2]}")
        object.__setattr__(self, "kernels", kernels)


@dataclasses.dataclass
class RainySample:
    observation: np.ndarray
    rain: np.ndarray
    maps: np.ndarray
    unclipped: np.ndarray
    clip_fraction: float


def sample_sparse_maps(H, W, N, spec):
    """``H x W x N`` maps with Bernoulli(density) support and uniform amplitudes.

    Very small densities may legitimately produce all-zero maps.
    """
    rng = np.random.default_rng(spec.seed)
    support = rng.random((H, W, N)) < spec.density
    amps = rng.uniform(spec.amplitude_range[0], spec.amplitude_range[1], size=(H, W, N))
    return np.where(support, amps, 0.0)


def render_rainy(B, spec):
    """Compose ``O = clip(B + K (x) M, 0, 1)`` with freshly sampled maps.

    ``unclipped`` marks the entries where no clipping happened, i.e. where
    ``O == B + R`` holds exactly.
    """
    B = as_tensor(B, 3, "background")
    if B.shape[2] != 3:
        raise DimensionError(f"background must be H x W x 3, got {B.shape}")
    H, W, _ = B.shape
    maps = sample_sparse_maps(H, W, spec.kernels.shape[3], spec)
    rain = synthesize_rain(spec.kernels, maps)
    raw = B + rain
    O = np.clip(raw, 0.0, 1.0)
    unclipped = O == raw
    return RainySample(O, rain, maps, unclipped, float(1.0 - unclipped.mean()))
