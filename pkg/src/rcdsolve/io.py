"""PNG codecs, key=value configuration files and atomic multi-file output."""

import contextlib
import dataclasses
import math
import os
import tempfile
import warnings

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, FormatError
from .prox import ProxSpec
from .solver import SolverConfig
from .tensor import as_tensor


def load_png(path):
    """Read an 8-bit RGB(A) PNG as an ``H x W x 3`` float image in [0, 1]."""
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: not a PNG file (found {im.format})")
            if im.mode not in ("RGB", "RGBA"):
                raise FormatError(f"{path}: expected 8-bit RGB or RGBA, found mode {im.mode}")
            if im.mode == "RGBA":
                warnings.warn(f"{path}: alpha channel dropped", stacklevel=2)
                im = im.convert("RGB")
            raw = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: unreadable image ({exc})") from exc
    return raw.astype(np.float64) / 255.0


def to_bytes(img):
    """Quantize a [0, 1] image to uint8 with ``round(255 * clamp(x))``."""
    img = as_tensor(img, 3, "image")
    return np.rint(255.0 * np.clip(img, 0.0, 1.0)).astype(np.uint8)


def save_png(path, img):
    if img.shape[2] != 3:
        raise ConfigurationError(f"expected an H x W x 3 image, got {img.shape}")
    Image.fromarray(to_bytes(img), mode="RGB").save(path, format="PNG")


@contextlib.contextmanager
def atomic_outputs():
    """Stage output files and publish them together.

    Yields a function ``stage(final_path)`` returning a temporary path in the
    same directory. On normal exit every staged file is renamed onto its
    final path; on error every temporary file is removed and no final path is
    touched.
    """
    staged = []

    def stage(final_path):
        final_path = os.fspath(final_path)
        folder = os.path.dirname(os.path.abspath(final_path))
        fd, tmp = tempfile.mkstemp(prefix=".rcd-", suffix=os.path.splitext(final_path)[1], dir=folder)
        os.close(fd)
        staged.append((tmp, final_path))
        return tmp

    try:
        yield stage
    except BaseException:
        for tmp, _ in staged:
            with contextlib.suppress(OSError):
                os.remove(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


# -- configuration ------------------------------------------------------------

def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text):
    val = float(text)
    if not math.isfinite(val):
        raise ValueError(f"not a finite number: {text!r}")
    return val


def _str(text):
    return text.strip()


# key -> parser; solver keys map one to one onto SolverConfig fields
SOLVER_KEYS = {
    "variant": lambda t: t.strip().upper(),
    "stages": int,
    "eta1": _float,
    "eta2": _float,
    "eta3": _float,
    "tau_m": _float,
    "tau_b": _float,
    "tau_alpha": _float,
    "descent_check": _bool,
    "kernel_update": _bool,
    "kernel_update_eta": _float,
    "kernel_norm_bound": _float,
    "alpha_grad": _str,
    "step_rule": _str,
}

PROX_KEYS = {
    "prox_m": _str,
    "prox_b": _str,
    "b_smooth_sigma": _float,
    "b_lo": _float,
    "b_hi": _float,
}

RUN_KEYS = {
    "kernel_file": _str,
    "dictionary_file": _str,
    "n_maps": int,
    "input": _str,
    "output": _str,
    "reference": _str,
    "seed": int,
    "threads": int,
    "timing": _bool,
    "figures": _bool,
    # synthesis and dictionary generation
    "density": _float,
    "amplitude_lo": _float,
    "amplitude_hi": _float,
    "n_kernels": int,
    "kernel_size": int,
    "angle_lo": _float,
    "angle_hi": _float,
    "length_lo": _float,
    "length_hi": _float,
    "width_lo": _float,
    "width_hi": _float,
}

ALL_KEYS = {**SOLVER_KEYS, **PROX_KEYS, **RUN_KEYS}

PATH_KEYS = ("kernel_file", "dictionary_file", "input", "reference")

# CLI defaults: the map step is capped by the Lipschitz bound and the descent
# safeguard is on. The smoothing background prior is not a proximal map of the
# traced objective, so configurations using it should turn the safeguard off.
CLI_DEFAULTS = {
    "step_rule": "lipschitz",
    "descent_check": True,
    "seed": 0,
    "threads": 1,
    "timing": True,
    "figures": False,
}


def parse_assignment(line, source="<override>"):
    if "=" not in line:
        raise ConfigurationError(f"{source}: expected key=value, got {line!r}")
    key, value = (part.strip() for part in line.split("=", 1))
    if key not in ALL_KEYS:
        raise ConfigurationError(f"{source}: unknown key {key!r}")
    try:
        return key, ALL_KEYS[key](value)
    except ValueError as exc:
        raise ConfigurationError(f"{source}: bad value for {key}: {exc}") from None


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line, f"{source}:{lineno}")
        values[key] = value
    return values


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def merge_config(file_values=None, overrides=()):
    """Defaults, then file values, then ``key=value`` overrides."""
    values = dict(CLI_DEFAULTS)
    values.update(file_values or {})
    for item in overrides:
        key, value = parse_assignment(item)
        values[key] = value
    return values


def check_paths(values, keys=PATH_KEYS):
    """Fail before any computation if a referenced input file is missing."""
    for key in keys:
        path = values.get(key)
        if path is not None and not os.path.isfile(path):
            raise FileNotFoundError(2, f"{key} does not exist", path)
    out = values.get("output")
    if out is not None:
        folder = os.path.dirname(os.path.abspath(out))
        if not os.path.isdir(folder):
            raise FileNotFoundError(2, "output directory does not exist", folder)


def solver_config(values):
    """Build a :class:`SolverConfig` from merged configuration values."""
    variant = values.get("variant", "CRCD")
    base = SolverConfig() if variant == "CRCD" else SolverConfig.drcd_defaults()
    fields = {k: values[k] for k in SOLVER_KEYS if k in values}
    fields["variant"] = variant
    prox_b = base.prox_b
    if any(k in values for k in ("prox_b", "b_smooth_sigma", "b_lo", "b_hi")):
        prox_b = ProxSpec(values.get("prox_b", prox_b.kind),
                          smooth_sigma=values.get("b_smooth_sigma", 0.0),
                          lo=values.get("b_lo", 0.0), hi=values.get("b_hi", 1.0))
    fields["prox_b"] = prox_b
    if "prox_m" in values:
        fields["prox_m"] = ProxSpec(values["prox_m"])
    try:
        return dataclasses.replace(base, **fields)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
