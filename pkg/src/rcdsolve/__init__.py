"""Rain convolutional dictionary (RCD) deraining with analytic proximal operators.

The rainy image is modeled as ``O = B + sum_n K_n (x) M_n``: a background plus
rain kernels convolved with sparse rain maps. :func:`solve_crcd` derains with a
fixed kernel stack; :func:`solve_drcd` builds the kernels per image from a
streak dictionary, ``K = D alpha``.
"""

from .errors import (ConfigurationError, ConstraintError, DimensionError, FormatError,
                     NumericError, RCDError)
from .kernels import StreakParams, init_dictionary, make_streak_kernel, max_pairwise_correlation
from .metrics import MetricReport, evaluate, psnr_y, rgb_to_y, ssim_y
from .model import (dict_apply, load_kernels, load_maps, objective_crcd, objective_drcd,
                    save_kernels, save_maps, synthesize_rain)
from .prox import ProxSpec, apply_prox
from .solver import (SolverConfig, SolveResult, SolveTrace, StageRecord, grad_alpha, grad_m,
                     solve_crcd, solve_drcd, update_alpha, update_b, update_kernels, update_m)
from .synth import RainySample, SynthSpec, render_rainy, sample_sparse_maps
from .tensor import conv2d_multi, conv2d_transpose, depthwise_conv, mode_fold, mode_unfold, vec

__version__ = "0.1.0"
