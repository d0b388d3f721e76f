"""Deterministic oriented rain-streak kernels and kernel dictionaries."""

import dataclasses
import math

import numpy as np

from .errors import ConfigurationError

# Plastic-number Kronecker increments: a low-discrepancy sequence in 2D.
_PLASTIC = 1.324717957244746
_KRONECKER = (1.0 / _PLASTIC, 1.0 / _PLASTIC ** 2)


@dataclasses.dataclass(frozen=True)
class StreakParams:
    """Oriented Gaussian ridge.

    ``angle`` is measured from the vertical (row) axis in radians, so
    ``angle=0`` is a vertical streak. ``length`` and ``width`` are the full
    extents (twice the standard deviations) along and across the streak.
    ``color`` holds per-channel weights and is ignored when ``gray`` is set.
    """

    angle: float = 0.0
    length: float = 7.0
    width: float = 1.0
    k: int = 9
    gray: bool = True
    color: tuple = (1.0, 1.0, 1.0)

    def validate(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1 or self.k % 2 == 0:
            raise ConfigurationError(f"kernel side must be a positive odd integer, got {self.k}")
        if not -math.pi / 2 < self.angle <= math.pi / 2:
            raise ConfigurationError(f"angle {self.angle} outside (-pi/2, pi/2]")
        for name in ("length", "width"):
            val = getattr(self, name)
            if not 0 < val <= self.k:
                raise ConfigurationError(f"{name} must be in (0, k={self.k}], got {val}")
        if not self.gray and (len(self.color) != 3 or not any(self.color)):
            raise ConfigurationError("color must be three weights, not all zero")
        return self


def make_streak_kernel(p):
    """``k x k x 3`` anisotropic Gaussian ridge with unit Frobenius norm."""
    p.validate()
    r = p.k // 2
    u, v = np.meshgrid(np.arange(-r, r + 1.0), np.arange(-r, r + 1.0), indexing="ij")
    c, s = math.cos(p.angle), math.sin(p.angle)
    # (u, v) rotated by -angle
    a = c * u + s * v
    b = -s * u + c * v
    ridge = np.exp(-(a ** 2 / (2 * (p.length / 2) ** 2) + b ** 2 / (2 * (p.width / 2) ** 2)))
    weights = np.ones(3) if p.gray else np.asarray(p.color, dtype=np.float64)
    kernel = ridge[:, :, None] * weights[None, None, :]
    return kernel / np.linalg.norm(kernel)


def _grid(d, seed):
    """``d x 3`` points in [0, 1): stratified in the first coordinate, Kronecker in the others."""
    phase = np.random.default_rng(seed).random(3) if d > 1 else np.full(3, 0.5)
    i = np.arange(d, dtype=np.float64)
    t0 = (i + phase[0]) / d if d > 1 else np.array([0.5])
    t1 = np.mod(0.5 + (phase[1] if d > 1 else 0.0) + i * _KRONECKER[0], 1.0)
    t2 = np.mod(0.5 + (phase[2] if d > 1 else 0.0) + i * _KRONECKER[1], 1.0)
    return np.stack([t0, t1, t2], axis=1)


def _check_range(name, rng):
    lo, hi = float(rng[0]), float(rng[1])
    if not lo <= hi:
        raise ConfigurationError(f"empty {name} range ({lo}, {hi})")
    return lo, hi


def dictionary_params(d, k, angle_range, length_range, width_range, seed=0):
    """Streak parameters for each atom of :func:`init_dictionary`."""
    if d < 1:
        raise ConfigurationError(f"dictionary size must be >= 1, got {d}")
    a_lo, a_hi = _check_range("angle", angle_range)
    l_lo, l_hi = _check_range("length", length_range)
    w_lo, w_hi = _check_range("width", width_range)
    params = []
    for t in _grid(d, seed):
        params.append(StreakParams(
            angle=a_lo + t[0] * (a_hi - a_lo),
            length=l_lo + t[1] * (l_hi - l_lo),
            width=w_lo + t[2] * (w_hi - w_lo),
            k=k,
        ))
    return params


def init_dictionary(d, k=9, angle_range=(-math.pi / 3, math.pi / 3),
                    length_range=(3.0, 9.0), width_range=(1.0, 2.0), seed=0):
    """``k x k x 3 x d`` dictionary of unit-norm streak atoms.

    Atom parameters lie on a low-discrepancy grid over the three ranges; the
    seed only shifts the grid phase, so equal seeds give identical output.
    With ``d == 1`` the single atom sits at the midpoints of all ranges.
    """
    atoms = [make_streak_kernel(p) for p in
             dictionary_params(d, k, angle_range, length_range, width_range, seed)]
    return np.stack(atoms, axis=3)


def max_pairwise_correlation(atoms):
    """Largest absolute normalized inner product between two distinct atoms."""
    d = atoms.shape[-1]
    if d < 2:
        return 0.0
    flat = atoms.reshape(-1, d)
    flat = flat / np.linalg.norm(flat, axis=0)
    gram = np.abs(flat.T @ flat)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


def tile_sheet(atoms, cols=None, gap=1, scale=4):
    """RGB image laying out each atom rescaled to [0, 1] on a grid.

    Each atom is min-max normalized on its own; constant atoms render black.
    Pixels are replicated ``scale`` times for visibility.
    """
    k, _, c, d = atoms.shape
    cols = cols or int(math.ceil(math.sqrt(d)))
    rows = int(math.ceil(d / cols))
    cell = k * scale
    sheet = np.ones((rows * cell + (rows + 1) * gap, cols * cell + (cols + 1) * gap, 3))
    for i in range(d):
        a = atoms[..., i]
        lo, hi = a.min(), a.max()
        a = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
        if c == 1:
            a = np.repeat(a, 3, axis=2)
        a = np.kron(a[:, :, :3], np.ones((scale, scale, 1)))
        r0 = gap + (i // cols) * (cell + gap)
        c0 = gap + (i % cols) * (cell + gap)
        sheet[r0:r0 + cell, c0:c0 + cell] = a
    return sheet
