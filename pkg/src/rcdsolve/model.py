"""Rain convolutional dictionary model: rain synthesis, dictionary products and objectives.

Shapes used throughout:

* image ``O``, ``B``, ``R``: ``H x W x 3``
* rain maps ``M``: ``H x W x N``
* kernel stack ``K``: ``k x k x 3 x N``
* kernel dictionary ``D``: ``k x k x 3 x d``
* coefficients ``alpha``: ``d x N`` with unit-norm columns
"""

import struct

import numpy as np

from .errors import ConfigurationError, ConstraintError, DimensionError, FormatError
from .tensor import as_tensor, conv2d_multi

UNIT_NORM_TOL = 1e-9

KERNEL_MAGIC = b"RCDK1"
MAPS_MAGIC = b"RCDM1"


def synthesize_rain(kernels, maps):
    """Rain layer ``R = K (x) M``; channel ``c`` is ``sum_n K[:, :, c, n] (x) M[:, :, n]``."""
    kernels = as_tensor(kernels, 4, "kernels")
    maps = as_tensor(maps, 3, "maps")
    if kernels.shape[3] != maps.shape[2]:
        raise DimensionError(
            f"{kernels.shape[3]} kernels but {maps.shape[2]} rain maps")
    return conv2d_multi(kernels, maps)


def dict_apply(dictionary, coeffs):
    """Kernel stack ``D alpha``: ``K_n = sum_i D[..., i] * alpha[i, n]``."""
    dictionary = as_tensor(dictionary, 4, "dictionary")
    coeffs = as_tensor(coeffs, 2, "coefficients")
    if dictionary.shape[3] != coeffs.shape[0]:
        raise DimensionError(
            f"dictionary has {dictionary.shape[3]} atoms, coefficients have {coeffs.shape[0]} rows")
    k, _, c, d = dictionary.shape
    return (dictionary.reshape(-1, d) @ coeffs).reshape(k, k, c, coeffs.shape[1])


def check_unit_columns(coeffs, tol=UNIT_NORM_TOL):
    norms = np.linalg.norm(coeffs, axis=0)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        raise ConstraintError(
            f"coefficient columns {np.flatnonzero(bad).tolist()} are not unit norm "
            f"(norms {norms[bad].tolist()})")


def _check_images(O, B):
    O = as_tensor(O, 3, "observation")
    B = as_tensor(B, 3, "background")
    if O.shape != B.shape:
        raise DimensionError(f"observation {O.shape} and background {B.shape} differ")
    return O, B


def _check_maps(O, M):
    M = as_tensor(M, 3, "maps")
    if M.shape[:2] != O.shape[:2]:
        raise DimensionError(f"maps {M.shape[:2]} and image {O.shape[:2]} differ spatially")
    return M


def background_penalty(B, reg_b=None):
    """Value of the background regularizer.

    Box projections (with or without smoothing) act as the indicator of
    ``[lo, hi]``, which is zero on feasible backgrounds; an infeasible
    background gives ``inf``. Other kinds carry no background penalty.
    """
    if reg_b is None or reg_b.kind not in ("box_project", "box_then_smooth"):
        return 0.0
    tol = 1e-12
    if B.min() < reg_b.lo - tol or B.max() > reg_b.hi + tol:
        return float("inf")
    return 0.0


def fidelity(O, B, rain):
    """Squared Frobenius residual ``||O - B - R||_F^2``."""
    r = O - B - rain
    return float(np.dot(r.ravel(), r.ravel()))


def objective_crcd(O, B, M, K, tau_m, reg_b=None):
    """``||O - B - K (x) M||_F^2 + tau_m ||M||_1 + p_B(B)``.

    ``tau_m`` is the weight on the l1 norm of the maps. The solver passes the
    weight its proximal steps actually minimize (threshold divided by step).
    """
    O, B = _check_images(O, B)
    M = _check_maps(O, M)
    if tau_m < 0:
        raise ConfigurationError(f"tau_m must be nonnegative, got {tau_m}")
    rain = synthesize_rain(K, M)
    if rain.shape != O.shape:
        raise DimensionError(f"rain layer {rain.shape} does not match image {O.shape}")
    return fidelity(O, B, rain) + tau_m * float(np.abs(M).sum()) + background_penalty(B, reg_b)


def objective_drcd(O, B, M, D, alpha, tau_m, tau_alpha, reg_b=None):
    """``||O - B - (D alpha) (x) M||_F^2 + tau_m ||M||_1 + tau_alpha ||alpha||_1 + p_B(B)``.

    Raises :class:`ConstraintError` unless every column of ``alpha`` has unit
    l2 norm to within 1e-9.
    """
    alpha = as_tensor(alpha, 2, "coefficients")
    if tau_alpha < 0:
        raise ConfigurationError(f"tau_alpha must be nonnegative, got {tau_alpha}")
    check_unit_columns(alpha)
    K = dict_apply(D, alpha)
    return objective_crcd(O, B, M, K, tau_m, reg_b) + tau_alpha * float(np.abs(alpha).sum())


def clip_kernel_norms(kernels, bound=1.0):
    """Scale down every kernel ``K[..., n]`` whose Frobenius norm exceeds ``bound``."""
    norms = np.sqrt((kernels ** 2).sum(axis=(0, 1, 2)))
    scale = np.where(norms > bound, bound / np.where(norms > 0, norms, 1.0), 1.0)
    return kernels * scale


# -- binary containers ------------------------------------------------------

def _write(path, magic, extents, values):
    header = magic + struct.pack("<3I", *extents)
    body = np.ascontiguousarray(values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body)


def _read(path, magic):
    with open(path, "rb") as fh:
        raw = fh.read()
    n = len(magic)
    if raw[:n] != magic:
        raise FormatError(f"{path}: bad magic {raw[:n]!r}, expected {magic!r}")
    if len(raw) < n + 12:
        raise FormatError(f"{path}: truncated header")
    extents = struct.unpack("<3I", raw[n:n + 12])
    data = np.frombuffer(raw[n + 12:], dtype="<f8")
    return extents, data


def save_kernels(path, kernels):
    """Write a ``k x k x channels x count`` stack in the RCDK1 container.

    Layout: ``b"RCDK1"``, little-endian u32 ``(k, channels, count)``, then
    float64 little-endian values in row-major order.
    """
    kernels = as_tensor(kernels, 4, "kernels")
    k, k2, c, n = kernels.shape
    if k != k2:
        raise DimensionError(f"kernels must be square, got {kernels.shape[:2]}")
    _write(path, KERNEL_MAGIC, (k, c, n), kernels)


def load_kernels(path):
    (k, c, n), data = _read(path, KERNEL_MAGIC)
    if data.size != k * k * c * n:
        raise FormatError(f"{path}: expected {k * k * c * n} values, found {data.size}")
    return as_tensor(data.reshape(k, k, c, n).astype(np.float64), 4, path)


def save_maps(path, maps):
    """Write ``H x W x N`` rain maps: ``b"RCDM1"``, u32 ``(H, W, N)``, float64 row-major."""
    maps = as_tensor(maps, 3, "maps")
    _write(path, MAPS_MAGIC, maps.shape, maps)


def load_maps(path):
    (h, w, n), data = _read(path, MAPS_MAGIC)
    if data.size != h * w * n:
        raise FormatError(f"{path}: expected {h * w * n} values, found {data.size}")
    return as_tensor(data.reshape(h, w, n).astype(np.float64), 3, path)
