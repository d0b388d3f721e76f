"""Dense tensor helpers and the exact convolution operators of the RCD model.

All tensors are plain ``numpy.ndarray`` objects in float64 with at most five
axes. Image-like tensors are laid out spatial-first (``H x W x channels``) and
kernel stacks as ``k x k x n_out x n_in``.

Conventions
-----------
* Convolution is cross-correlation (no kernel flip) with zero-padded "same"
  boundaries, so spatial extents are preserved::

      out[h, w, j] = sum_{n,u,v} K[u, v, j, n] * X[h + u - k//2, w + v - k//2, n]

  Samples outside the image are zero.
* :func:`conv2d_transpose` is the exact adjoint of :func:`conv2d_multi` under
  the Frobenius inner product.
* Unfolding and vectorization use row-major ("last mode fastest") ordering.
  ``mode_unfold(x, n)`` moves axis ``n`` (1-based) to the front and flattens
  the remaining axes in their original order, so its columns are indexed
  exactly like ``vec`` of the tensor with axis ``n`` removed.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, NumericError

MAX_ORDER = 5


def as_tensor(x, ndim=None, name="tensor"):
    """Return ``x`` as a finite float64 array, validating its order."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.ndim > MAX_ORDER:
        raise DimensionError(f"{name}: expected 1 to {MAX_ORDER} axes, got {arr.ndim}")
    if ndim is not None and arr.ndim != ndim:
        raise DimensionError(f"{name}: expected {ndim} axes, got shape {arr.shape}")
    if 0 in arr.shape:
        raise DimensionError(f"{name}: empty extent in shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: contains NaN or Inf")
    return arr


def _check_kernels(kernels):
    kernels = as_tensor(kernels, 4, "kernels")
    k = kernels.shape[0]
    if kernels.shape[1] != k:
        raise DimensionError(f"kernels must be square, got {kernels.shape[:2]}")
    if k % 2 == 0:
        raise ConfigurationError(f"kernel side must be odd, got {k}")
    return kernels


def _shift_slices(d, n):
    """Destination/source slices for ``dst[i] += src[i + d]`` with ``0 <= i + d < n``."""
    lo = max(0, -d)
    hi = max(lo, min(n, n - d))  # empty when the shift exceeds the extent
    return slice(lo, hi), slice(lo + d, hi + d)


def _conv_scatter(kernels, x):
    # Mix channels first (one GEMM per kernel row), then shift-accumulate.
    # Cheap when n_out is small.
    k, _, n_out, n_in = kernels.shape
    H, W, _ = x.shape
    r = k // 2
    x2 = x.reshape(H * W, n_in)
    out = np.zeros((H, W, n_out))
    for u in range(k):
        # (n_in, k * n_out) for this kernel row
        ku = kernels[u].transpose(2, 0, 1).reshape(n_in, k * n_out)
        p = (x2 @ ku).reshape(H, W, k, n_out)
        dst_h, src_h = _shift_slices(u - r, H)
        for v in range(k):
            dst_w, src_w = _shift_slices(v - r, W)
            out[dst_h, dst_w] += p[src_h, src_w, v]
    return out


def _conv_gather(kernels, x):
    # Extract k-wide row windows of the padded input and contract them.
    # Cheap when n_in is small.
    k, _, n_out, n_in = kernels.shape
    H, W, _ = x.shape
    r = k // 2
    xp = np.pad(x, ((r, r), (r, r), (0, 0)))
    out = np.zeros((H, W, n_out))
    for u in range(k):
        # windows[h, w, n, v] = xp[u + h, w + v, n]
        windows = sliding_window_view(xp[u:u + H], k, axis=1)
        out += np.tensordot(windows, kernels[u], axes=([3, 2], [0, 2]))
    return out


def conv2d_multi(kernels, x):
    """Multi-channel "same" convolution ``C (x) X``.

    Parameters
    ----------
    kernels : array, shape (k, k, n_out, n_in)
    x : array, shape (H, W, n_in)

    Returns
    -------
    array, shape (H, W, n_out)
    """
    kernels = _check_kernels(kernels)
    x = as_tensor(x, 3, "input")
    if x.shape[2] != kernels.shape[3]:
        raise DimensionError(
            f"input has {x.shape[2]} channels, kernels expect {kernels.shape[3]}")
    if kernels.shape[2] <= kernels.shape[3]:
        return _conv_scatter(kernels, x)
    return _conv_gather(kernels, x)


def flip_adjoint_kernels(kernels):
    """Kernels ``K'`` with ``conv2d_multi(K', .)`` equal to the adjoint of ``conv2d_multi(K, .)``."""
    return np.ascontiguousarray(kernels[::-1, ::-1].transpose(0, 1, 3, 2))


def conv2d_transpose(kernels, y):
    """Transposed convolution ``C (x)^T Y``, the adjoint of :func:`conv2d_multi`.

    Parameters
    ----------
    kernels : array, shape (k, k, n_out, n_in)
    y : array, shape (H, W, n_out)

    Returns
    -------
    array, shape (H, W, n_in)
    """
    kernels = _check_kernels(kernels)
    y = as_tensor(y, 3, "cotangent")
    if y.shape[2] != kernels.shape[2]:
        raise DimensionError(
            f"cotangent has {y.shape[2]} channels, kernels produce {kernels.shape[2]}")
    return conv2d_multi(flip_adjoint_kernels(kernels), y)


def depthwise_conv(kernels, maps):
    """Depthwise convolution of every 2D kernel slice with every map.

    ``out[:, :, j, c, n]`` is the "same" convolution of ``kernels[:, :, j, c]``
    with ``maps[:, :, n]``.

    Parameters
    ----------
    kernels : array, shape (k, k, n_out, n_in)
    maps : array, shape (H, W, N)

    Returns
    -------
    array, shape (H, W, n_out, n_in, N)
    """
    kernels = _check_kernels(kernels)
    maps = as_tensor(maps, 3, "maps")
    k, _, n_out, n_in = kernels.shape
    H, W, N = maps.shape
    r = k // 2
    out = np.zeros((H, W, n_out, n_in, N))
    for u in range(k):
        dst_h, src_h = _shift_slices(u - r, H)
        for v in range(k):
            dst_w, src_w = _shift_slices(v - r, W)
            out[dst_h, dst_w] += (kernels[u, v][None, None, :, :, None]
                                  * maps[src_h, src_w][:, :, None, None, :])
    return out


def _check_mode(x, mode):
    if not 1 <= mode <= x.ndim:
        raise DimensionError(f"mode {mode} out of range for order-{x.ndim} tensor")


def mode_unfold(x, mode):
    """Mode-``mode`` unfolding (1-based): an ``I_mode x prod(other extents)`` matrix.

    Column index runs over the remaining axes in their original order,
    last axis fastest.
    """
    x = as_tensor(x)
    _check_mode(x, mode)
    return np.moveaxis(x, mode - 1, 0).reshape(x.shape[mode - 1], -1)


def mode_fold(mat, mode, shape):
    """Inverse of :func:`mode_unfold` for a tensor of the given ``shape``."""
    shape = tuple(int(s) for s in shape)
    mat = np.asarray(mat, dtype=np.float64)
    if not 1 <= mode <= len(shape):
        raise DimensionError(f"mode {mode} out of range for order-{len(shape)} tensor")
    moved = (shape[mode - 1],) + shape[:mode - 1] + shape[mode:]
    if mat.size != int(np.prod(shape)) or mat.shape[0] != shape[mode - 1]:
        raise DimensionError(f"matrix of shape {mat.shape} cannot fold to {shape}")
    return np.moveaxis(mat.reshape(moved), 0, mode - 1)


def vec(x):
    """Row-major vectorization (last axis fastest)."""
    return as_tensor(x).reshape(-1)


def inner(a, b):
    """Frobenius inner product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def conv_operator_norm_sq(kernels, height, width, iters=50, seed=0):
    """Power-iteration estimate of ``||C||_op^2`` for ``conv2d_multi`` on ``height x width`` inputs.

    Useful for choosing a step size: the map gradient of the squared residual
    is Lipschitz with constant ``2 * ||C||_op^2``.
    """
    kernels = _check_kernels(kernels)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((height, width, kernels.shape[3]))
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iters):
        y = conv2d_transpose(kernels, conv2d_multi(kernels, x))
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        x = y / lam
    return lam


def conv_operator_norm_bound(kernels, height, width):
    """Upper bound on ``||C||_op`` for ``conv2d_multi`` on ``height x width`` inputs.

    Zero-padded "same" convolution is a restriction of a circular convolution
    on a ``(height + k - 1) x (width + k - 1)`` grid, whose norm is the largest
    singular value of the kernel transfer matrix over the DFT frequencies.
    The DFT is used only for this bound, never to apply the operator.
    """
    kernels = _check_kernels(kernels)
    k = kernels.shape[0]
    shape = (height + k - 1, width + k - 1)
    spec = np.fft.fft2(kernels, s=shape, axes=(0, 1))  # G1 x G2 x n_out x n_in
    gram = spec @ np.conj(np.swapaxes(spec, 2, 3)) if spec.shape[2] <= spec.shape[3] \
        else np.conj(np.swapaxes(spec, 2, 3)) @ spec
    return float(np.sqrt(np.linalg.eigvalsh(gram)[..., -1].max()))
