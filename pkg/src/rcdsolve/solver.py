"""Alternating proximal-gradient solver for the CRCD and DRCD rain models.

Scale convention
----------------
The data term is ``f = ||O - B - K (x) M||_F^2`` without a 1/2, and its map
gradient is taken exactly: ``grad_m = 2 K (x)^T (K (x) M + B - O)``. Step
sizes here are therefore half of the step sizes in a convention that drops
the factor 2. The background step keeps the convex-combination form
``(1 - eta2) B + eta2 (O - K (x) M)`` with ``0 < eta2 <= 1``.

Thresholds
----------
``tau_m``, ``tau_b`` and ``tau_alpha`` are the thresholds handed to the
proximal maps at the configured step sizes, i.e. products of a regularization
weight and a step. The objective reported in the trace uses the weights
``tau / eta`` that the iteration actually minimizes. When the descent
safeguard halves a step, the threshold is halved with it so the weights stay
fixed.

Step rule
---------
With ``step_rule="lipschitz"`` the map step is capped at ``1 / L`` where
``L = 2 ||K||_op^2`` is the Lipschitz constant of ``grad_m``, bounded by
:func:`~rcdsolve.tensor.conv_operator_norm_bound`. Below that cap every map
step is guaranteed not to increase the objective. ``"fixed"`` uses ``eta1``
as given.
"""

import csv
import dataclasses
import io
import math
import time

import numpy as np

from .errors import ConfigurationError, DimensionError, NumericError
from .model import (background_penalty, check_unit_columns, clip_kernel_norms,
                    dict_apply, fidelity)
from .prox import L1_KINDS, ProxSpec, apply_prox
from .tensor import (as_tensor, conv2d_multi, conv2d_transpose, conv_operator_norm_bound,
                     depthwise_conv, mode_unfold, vec)

VARIANTS = ("CRCD", "DRCD")
STEP_RULES = ("fixed", "lipschitz")
DESCENT_RTOL = 1e-10
TRACE_HEADER = ["stage", "objective", "fidelity", "l1_m", "eta1", "eta2", "eta3", "wall_ms"]


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Immutable solver settings.

    Defaults follow the CRCD network shape (17 stages); use
    :meth:`drcd_defaults` for the 11-stage dynamic variant.
    """

    variant: str = "CRCD"
    stages: int = 17
    eta1: float = 0.1
    eta2: float = 0.1
    eta3: float = 0.1
    tau_m: float = 0.01
    tau_b: float = 0.0
    tau_alpha: float = 0.0
    prox_m: ProxSpec = ProxSpec("nonneg_soft_threshold")
    prox_b: ProxSpec = ProxSpec("box_project")
    prox_alpha: ProxSpec = ProxSpec("l1_then_unit_columns")
    descent_check: bool = False
    kernel_update: bool = False
    kernel_update_eta: float = 0.0
    kernel_norm_bound: float = 1.0
    alpha_grad: str = "adjoint"
    step_rule: str = "fixed"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not isinstance(self.stages, (int, np.integer)) or self.stages < 1:
            raise ConfigurationError(f"stages must be a positive integer, got {self.stages}")
        if not self.eta1 > 0:
            raise ConfigurationError(f"eta1 must be > 0, got {self.eta1}")
        if not 0 < self.eta2 <= 1:
            raise ConfigurationError(f"eta2 must be in (0, 1], got {self.eta2}")
        if not self.eta3 >= 0:
            raise ConfigurationError(f"eta3 must be >= 0, got {self.eta3}")
        for name in ("tau_m", "tau_b", "tau_alpha", "kernel_update_eta"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {val}")
        if not self.kernel_norm_bound > 0:
            raise ConfigurationError("kernel_norm_bound must be > 0")
        for name in ("prox_m", "prox_b", "prox_alpha"):
            if not isinstance(getattr(self, name), ProxSpec):
                raise ConfigurationError(f"{name} must be a ProxSpec")
        if self.prox_alpha.kind != "l1_then_unit_columns":
            raise ConfigurationError("prox_alpha must be l1_then_unit_columns to keep unit-norm columns")
        if self.step_rule not in STEP_RULES:
            raise ConfigurationError(f"step_rule must be one of {STEP_RULES}, got {self.step_rule!r}")
        if self.alpha_grad not in ("adjoint", "unfold"):
            raise ConfigurationError(f"alpha_grad must be 'adjoint' or 'unfold', got {self.alpha_grad!r}")

    @classmethod
    def drcd_defaults(cls, **overrides):
        return cls(**{"variant": "DRCD", "stages": 11, **overrides})

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class StageRecord:
    stage: int
    objective: float
    fidelity: float
    l1_m: float
    eta1: float
    eta2: float
    eta3: float
    wall_ms: float


@dataclasses.dataclass
class SolveTrace:
    records: list = dataclasses.field(default_factory=list)
    initial_objective: float = float("nan")
    events: list = dataclasses.field(default_factory=list)
    residual_norm: float = float("nan")

    @property
    def stages(self):
        return len(self.records)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    def to_csv(self, fh=None, timing=True):
        """Write the per-stage table; returns the text when ``fh`` is None.

        With ``timing=False`` the wall-clock column is written as 0 so the
        file is reproducible byte for byte.
        """
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.records:
            writer.writerow([r.stage, repr(r.objective), repr(r.fidelity), repr(r.l1_m),
                             repr(r.eta1), repr(r.eta2), repr(r.eta3),
                             f"{r.wall_ms:.3f}" if timing else "0"])
        if fh is None:
            return buf.getvalue()

    @classmethod
    def from_csv(cls, fh):
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        records = []
        for row in reader:
            if not row:
                continue
            records.append(StageRecord(int(row[0]), *(float(x) for x in row[1:])))
        return cls(records=records)


@dataclasses.dataclass
class SolveResult:
    background: np.ndarray
    rain_layer: np.ndarray
    maps: np.ndarray
    kernels_used: np.ndarray
    trace: SolveTrace
    coeffs: np.ndarray = None
    history: list = None


# -- single updates ---------------------------------------------------------

def _check_problem(O, B, M, K):
    O = as_tensor(O, 3, "observation")
    B = as_tensor(B, 3, "background")
    M = as_tensor(M, 3, "maps")
    K = as_tensor(K, 4, "kernels")
    if B.shape != O.shape:
        raise DimensionError(f"background {B.shape} differs from observation {O.shape}")
    if M.shape[:2] != O.shape[:2]:
        raise DimensionError(f"maps {M.shape} do not match image {O.shape}")
    if K.shape[2] != O.shape[2] or K.shape[3] != M.shape[2]:
        raise DimensionError(f"kernels {K.shape} incompatible with image {O.shape} and maps {M.shape}")
    return O, B, M, K


def _grad_m_from_rain(O, B, rain, K):
    return 2.0 * conv2d_transpose(K, rain + B - O)


def grad_m(O, B, M, K):
    """Gradient of ``||O - B - K (x) M||_F^2`` with respect to the maps."""
    O, B, M, K = _check_problem(O, B, M, K)
    return _grad_m_from_rain(O, B, conv2d_multi(K, M), K)


def update_m(O, B_prev, M_prev, K, eta1, prox_m):
    """One proximal-gradient step on the maps; ``prox_m.threshold`` is the shrinkage used."""
    if not eta1 > 0:
        raise ConfigurationError(f"eta1 must be > 0, got {eta1}")
    G = grad_m(O, B_prev, M_prev, K)
    return apply_prox(prox_m, M_prev - eta1 * G)


def _blend_b(O, B_prev, rain, eta2, prox_b):
    # B + eta2 (T - B) equals (1 - eta2) B + eta2 T and is exact when B == T
    target = O - rain
    blend = target if eta2 == 1 else B_prev + eta2 * (target - B_prev)
    return apply_prox(prox_b, blend)


def update_b(O, B_prev, M_new, K, eta2, prox_b):
    """Background step ``prox((1 - eta2) B + eta2 (O - K (x) M))``."""
    if not 0 <= eta2 <= 1:
        raise ConfigurationError(f"eta2 must be in [0, 1], got {eta2}")
    O, B_prev, M_new, K = _check_problem(O, B_prev, M_new, K)
    return _blend_b(O, B_prev, conv2d_multi(K, M_new), eta2, prox_b)


def _check_dictionary(D, alpha, M):
    D = as_tensor(D, 4, "dictionary")
    alpha = as_tensor(alpha, 2, "coefficients")
    if alpha.shape != (D.shape[3], M.shape[2]):
        raise DimensionError(
            f"coefficients {alpha.shape} do not match dictionary size {D.shape[3]} and {M.shape[2]} maps")
    return D, alpha


def grad_alpha(O, B, M, D, alpha, method="unfold"):
    """Gradient of ``||O - B - (D alpha) (x) M||_F^2`` with respect to ``alpha`` (``d x N``).

    ``method="unfold"`` forms, for every map ``n``, the depthwise convolution
    of the dictionary with ``M[:, :, n]`` (``H x W x 3 x d``), unfolds it along
    its fourth mode into a ``d x 3HW`` matrix and multiplies by the vectorized
    residual. ``method="adjoint"`` uses the identity
    ``<D_i (x) M_n, r> = <M_n, D_i (x)^T r>`` and needs a single transposed
    convolution; both give the same gradient.
    """
    D, alpha = _check_dictionary(D, alpha, as_tensor(M, 3, "maps"))
    O, B, M, K = _check_problem(O, B, M, dict_apply(D, alpha))
    residual = conv2d_multi(K, M) + B - O
    return _grad_alpha_from_residual(D, M, residual, method)


def _grad_alpha_from_residual(D, M, residual, method):
    d, N = D.shape[3], M.shape[2]
    if method == "adjoint":
        corr = conv2d_transpose(D, residual)  # H x W x d
        return 2.0 * corr.reshape(-1, d).T @ M.reshape(-1, N)
    if method != "unfold":
        raise ConfigurationError(f"unknown alpha gradient method {method!r}")
    r = vec(residual)
    grad = np.empty((d, N))
    for n in range(N):
        Z = depthwise_conv(D, M[:, :, n:n + 1])[..., 0]  # H x W x 3 x d
        grad[:, n] = 2.0 * (mode_unfold(Z, 4) @ r)
    return grad


def update_alpha(O, B_new, M_new, D, alpha_prev, eta3, prox_alpha, method="unfold"):
    """Gradient step on ``alpha`` followed by shrinkage and column normalization."""
    if not eta3 >= 0:
        raise ConfigurationError(f"eta3 must be >= 0, got {eta3}")
    G = grad_alpha(O, B_new, M_new, D, alpha_prev, method)
    return apply_prox(prox_alpha, alpha_prev - eta3 * G)


def grad_kernels(O, B, M, K):
    """Gradient of ``||O - B - K (x) M||_F^2`` with respect to the kernel stack."""
    O, B, M, K = _check_problem(O, B, M, K)
    residual = conv2d_multi(K, M) + B - O
    return _grad_kernels_from_residual(M, K, residual)


def _grad_kernels_from_residual(M, K, residual):
    k = K.shape[0]
    r = k // 2
    H, W, N = M.shape
    C = residual.shape[2]
    Mp = np.pad(M, ((r, r), (r, r), (0, 0)))
    res2 = residual.reshape(-1, C).T
    grad = np.empty_like(K)
    for u in range(k):
        for v in range(k):
            grad[u, v] = 2.0 * res2 @ Mp[u:u + H, v:v + W].reshape(-1, N)
    return grad


def update_kernels(O, B, M, K_prev, eta_k, bound=1.0):
    """Gradient step on the kernels followed by per-kernel norm clipping to ``bound``."""
    if not eta_k >= 0:
        raise ConfigurationError(f"kernel step must be >= 0, got {eta_k}")
    G = grad_kernels(O, B, M, K_prev)
    return clip_kernel_norms(K_prev - eta_k * G, bound)


# -- full solves ------------------------------------------------------------

def _check_finite(stage, **arrays):
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in {name} at stage {stage}", stage=stage)


def _initial_state(O, n_maps, init_background, init_maps):
    if init_background is None:
        B = np.clip(O, 0.0, 1.0)
    else:
        B = as_tensor(init_background, 3, "init_background").copy()
        if B.shape != O.shape:
            raise DimensionError(f"init_background {B.shape} differs from observation {O.shape}")
    if init_maps is None:
        M = np.zeros(O.shape[:2] + (n_maps,))
    else:
        M = as_tensor(init_maps, 3, "init_maps").copy()
        if M.shape != O.shape[:2] + (n_maps,):
            raise DimensionError(f"init_maps {M.shape} should be {O.shape[:2] + (n_maps,)}")
    return B, M


def _weight(threshold, eta, prox):
    if prox.kind not in L1_KINDS or eta == 0:
        return 0.0
    return threshold / eta


def _solve(O, config, K=None, D=None, alpha=None, init_background=None,
           init_maps=None, keep_history=False):
    O = as_tensor(O, 3, "observation")
    if O.shape[2] != 3:
        raise DimensionError(f"observation must be H x W x 3, got {O.shape}")
    dynamic = D is not None
    if dynamic:
        K = dict_apply(D, alpha)
    if K.shape[2] != 3:
        raise DimensionError(f"kernels must have 3 channels, got {K.shape}")
    B, M = _initial_state(O, K.shape[3], init_background, init_maps)

    eta1, eta2, eta3 = config.eta1, config.eta2, config.eta3
    lam_m = _weight(config.tau_m, eta1, config.prox_m)
    lam_alpha = _weight(config.tau_alpha, eta3, config.prox_alpha) if dynamic else 0.0
    # thresholds scale with the step so the minimized weights stay fixed
    tb_per_eta = config.tau_b / config.eta2

    def objective(rain):
        fid = fidelity(O, B, rain)
        l1 = float(np.abs(M).sum())
        obj = fid + lam_m * l1 + background_penalty(B, config.prox_b)
        if dynamic:
            obj += lam_alpha * float(np.abs(alpha).sum())
        return obj, fid, l1

    def map_step(K):
        if config.step_rule == "fixed":
            return eta1
        cap = 1.0 / (2.0 * conv_operator_norm_bound(K, O.shape[0], O.shape[1]) ** 2)
        return min(eta1, cap)

    trace = SolveTrace()
    history = [] if keep_history else None
    rain = conv2d_multi(K, M)
    prev_obj = objective(rain)[0]
    trace.initial_objective = prev_obj

    step_m = map_step(K)
    for s in range(1, config.stages + 1):
        t0 = time.perf_counter()
        if dynamic and s > 1:
            step_m = map_step(K)
        prox_m = config.prox_m.with_threshold(config.tau_m * step_m / config.eta1)
        prox_b = config.prox_b.with_threshold(tb_per_eta * eta2)

        M = apply_prox(prox_m, M - step_m * _grad_m_from_rain(O, B, rain, K))
        _check_finite(s, maps=M)
        rain = conv2d_multi(K, M)
        B = _blend_b(O, B, rain, eta2, prox_b)

        if dynamic:
            G = _grad_alpha_from_residual(D, M, rain + B - O, config.alpha_grad)
            alpha = apply_prox(config.prox_alpha.with_threshold(config.tau_alpha), alpha - eta3 * G)
            _check_finite(s, coefficients=alpha)
            K = dict_apply(D, alpha)
            rain = conv2d_multi(K, M)
        elif config.kernel_update:
            Gk = _grad_kernels_from_residual(M, K, rain + B - O)
            K = clip_kernel_norms(K - config.kernel_update_eta * Gk, config.kernel_norm_bound)
            _check_finite(s, kernels=K)
            rain = conv2d_multi(K, M)
            step_m = map_step(K)

        _check_finite(s, maps=M, background=B, rain=rain)
        obj, fid, l1 = objective(rain)
        if math.isnan(obj):
            raise NumericError(f"objective is NaN at stage {s}", stage=s)
        wall = (time.perf_counter() - t0) * 1e3
        trace.records.append(StageRecord(s, obj, fid, l1, step_m, eta2, eta3 if dynamic else 0.0, wall))
        if keep_history:
            history.append((B.copy(), M.copy(), None if alpha is None else alpha.copy()))

        if config.descent_check and obj > prev_obj + DESCENT_RTOL * abs(prev_obj):
            eta1, eta2 = eta1 / 2, eta2 / 2
            step_m = map_step(K) if config.step_rule == "lipschitz" else eta1
            trace.events.append(
                f"stage {s}: objective rose {prev_obj!r} -> {obj!r}; eta1, eta2 halved to {eta1!r}, {eta2!r}")
        prev_obj = obj

    trace.residual_norm = float(np.linalg.norm(O - B - rain))
    return SolveResult(background=B, rain_layer=rain, maps=M, kernels_used=K,
                       trace=trace, coeffs=alpha, history=history)


def solve_crcd(O, K, config=None, *, init_background=None, init_maps=None, keep_history=False):
    """Derain ``O`` with a fixed kernel stack ``K`` (``k x k x 3 x N``).

    Starts from ``M = 0`` and ``B = clip(O, 0, 1)`` unless initial values are
    given. Each stage updates the maps, then the background, then (optionally)
    the kernels.
    """
    config = config or SolverConfig()
    if config.variant != "CRCD":
        raise ConfigurationError(f"solve_crcd needs variant CRCD, got {config.variant}")
    K = as_tensor(K, 4, "kernels")
    # overflow is detected explicitly and reported with its stage
    with np.errstate(over="ignore", invalid="ignore"):
        return _solve(O, config, K=K, init_background=init_background,
                      init_maps=init_maps, keep_history=keep_history)


def initial_coeffs(d, N):
    """Uniform unit-norm columns ``1/sqrt(d)``."""
    return np.full((d, N), 1.0 / math.sqrt(d))


def solve_drcd(O, D, config=None, *, n_maps=6, init_coeffs=None, init_background=None,
               init_maps=None, keep_history=False):
    """Derain ``O`` with kernels ``D alpha`` inferred per image.

    ``n_maps`` is the number of rain maps ``N`` (ignored when ``init_coeffs``
    fixes it). Coefficients start at :func:`initial_coeffs`. Each stage updates the maps and the background with the previous
    coefficients, then updates ``alpha`` from the new maps and background.
    """
    config = config or SolverConfig.drcd_defaults()
    if config.variant != "DRCD":
        raise ConfigurationError(f"solve_drcd needs variant DRCD, got {config.variant}")
    D = as_tensor(D, 4, "dictionary")
    if init_coeffs is None:
        alpha = initial_coeffs(D.shape[3], n_maps)
    else:
        alpha = as_tensor(init_coeffs, 2, "init_coeffs").copy()
        if alpha.shape[0] != D.shape[3]:
            raise DimensionError(f"init_coeffs has {alpha.shape[0]} rows, dictionary has {D.shape[3]} atoms")
        check_unit_columns(alpha)
    with np.errstate(over="ignore", invalid="ignore"):
        return _solve(O, config, D=D, alpha=alpha, init_background=init_background,
                      init_maps=init_maps, keep_history=keep_history)
