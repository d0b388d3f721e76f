"""``rcd-solve`` command line tool.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 numeric error. Every command validates its inputs before computing and
publishes its output files all at once, so a failed run leaves no partial
outputs behind.
"""

import argparse
import csv
import math
import os
import sys

from threadpoolctl import threadpool_limits

from . import io as rio
from .errors import FormatError, NumericError, RCDError
from .kernels import init_dictionary, max_pairwise_correlation, tile_sheet
from .metrics import evaluate
from .model import load_kernels, save_kernels, save_maps
from .plotting import plot_atoms, plot_panel, plot_trace
from .solver import SolveTrace, solve_crcd, solve_drcd
from .synth import SynthSpec, render_rainy

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = ("derain", "synth", "eval", "kernels", "trace")

# generated dictionaries when no kernel or dictionary file is configured
DEFAULT_COUNTS = {"CRCD": 32, "DRCD": 32}
DEFAULT_N_MAPS = 6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="rcd-solve", description="Rain convolutional dictionary deraining.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--input", help="input file (image, kernels or trace)")
    p.add_argument("--output", help="output path or prefix")
    p.add_argument("--reference", help="reference image for eval")
    p.add_argument("--plot", help="figure path for eval and trace")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def _values(args):
    file_values = rio.read_config(args.config) if args.config else {}
    values = rio.merge_config(file_values, args.overrides)
    for key in ("input", "output", "reference", "seed", "threads"):
        val = getattr(args, key)
        if val is not None:
            values[key] = val
    if values["threads"] < 1:
        raise UsageError("--threads must be at least 1")
    return values


def _require(values, *keys):
    missing = [k for k in keys if values.get(k) is None]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


def _range(values, name, default):
    return (values.get(f"{name}_lo", default[0]), values.get(f"{name}_hi", default[1]))


def _generated_dictionary(values, count):
    return init_dictionary(values.get("n_kernels", count), values.get("kernel_size", 9),
                           angle_range=_range(values, "angle", (-math.pi / 3, math.pi / 3)),
                           length_range=_range(values, "length", (3.0, 9.0)),
                           width_range=_range(values, "width", (1.0, 2.0)),
                           seed=values["seed"])


# -- commands -------------------------------------------------------------------

def cmd_derain(values, plot_path):
    _require(values, "input", "output")
    rio.check_paths(values)
    config = rio.solver_config(values)
    O = rio.load_png(values["input"])
    if config.variant == "CRCD":
        K = (load_kernels(values["kernel_file"]) if "kernel_file" in values
             else _generated_dictionary(values, DEFAULT_COUNTS["CRCD"]))
        result = solve_crcd(O, K, config)
    else:
        D = (load_kernels(values["dictionary_file"]) if "dictionary_file" in values
             else _generated_dictionary(values, DEFAULT_COUNTS["DRCD"]))
        result = solve_drcd(O, D, config, n_maps=values.get("n_maps", DEFAULT_N_MAPS))

    out = values["output"]
    with rio.atomic_outputs() as stage:
        rio.save_png(stage(f"{out}_bg.png"), result.background)
        rio.save_png(stage(f"{out}_rain.png"), result.rain_layer)
        save_maps(stage(f"{out}_maps.rcdm"), result.maps)
        if result.coeffs is not None:
            save_kernels(stage(f"{out}_kernels.rcdk"), result.kernels_used)
        with open(stage(f"{out}_trace.csv"), "w", newline="") as fh:
            result.trace.to_csv(fh, timing=values["timing"])
        if values["figures"]:
            plot_trace(result.trace, stage(f"{out}_trace.png"), title=f"{config.variant} trace")
            plot_panel([O, result.background, result.rain_layer / max(result.rain_layer.max(), 1e-12)],
                       ["input", "background", "rain layer (rescaled)"], stage(f"{out}_panel.png"))
    for event in result.trace.events:
        print(event, file=sys.stderr)
    last = result.trace.records[-1]
    print(f"stages={last.stage} objective={last.objective!r} residual={result.trace.residual_norm!r}")


def cmd_synth(values, plot_path):
    _require(values, "input", "output", "density")
    rio.check_paths(values)
    B = rio.load_png(values["input"])
    K = (load_kernels(values["kernel_file"]) if "kernel_file" in values
         else _generated_dictionary(values, 4))
    spec = SynthSpec(values["density"], K,
                     (values.get("amplitude_lo", 0.2), values.get("amplitude_hi", 0.8)),
                     values["seed"])
    sample = render_rainy(B, spec)
    out = values["output"]
    with rio.atomic_outputs() as stage:
        rio.save_png(stage(f"{out}_rainy.png"), sample.observation)
        rio.save_png(stage(f"{out}_bg.png"), B)
        rio.save_png(stage(f"{out}_rain.png"), sample.rain)
        save_maps(stage(f"{out}_maps.rcdm"), sample.maps)
        save_kernels(stage(f"{out}_kernels.rcdk"), K)
    print(f"clip_fraction={sample.clip_fraction!r}")


def cmd_eval(values, plot_path):
    _require(values, "input", "reference")
    rio.check_paths(values)
    a = rio.load_png(values["input"])
    b = rio.load_png(values["reference"])
    report = evaluate(a, b)
    print(report.line())
    out = values.get("output")
    if out is not None or plot_path:
        with rio.atomic_outputs() as stage:
            if out is not None:
                tmp = stage(out)
                exists = os.path.isfile(out)
                with open(tmp, "w", newline="") as fh:
                    if exists:
                        with open(out, newline="") as old:
                            fh.write(old.read())
                    writer = csv.writer(fh, lineterminator="\n")
                    if not exists:
                        writer.writerow(["input", "reference", "psnr_y", "ssim_y", "mse_y"])
                    writer.writerow([values["input"], values["reference"], repr(report.psnr_y),
                                     repr(report.ssim_y), repr(report.mse_y)])
            if plot_path:
                plot_panel([a, b], ["input", "reference"], stage(plot_path))


def cmd_kernels(values, plot_path):
    _require(values, "output")
    rio.check_paths(values)
    if "kernel_file" in values:
        atoms = load_kernels(values["kernel_file"])
    else:
        atoms = _generated_dictionary(values, 8)
    sheet = tile_sheet(atoms)
    out = values["output"]
    with rio.atomic_outputs() as stage:
        save_kernels(stage(f"{out}.rcdk"), atoms)
        rio.save_png(stage(f"{out}_sheet.png"), sheet)
        if plot_path:
            plot_atoms(sheet, stage(plot_path), title=f"{atoms.shape[3]} atoms, k={atoms.shape[0]}")
    print(f"atoms={atoms.shape[3]} k={atoms.shape[0]} "
          f"max_correlation={max_pairwise_correlation(atoms):.6f}")


def cmd_trace(values, plot_path):
    _require(values, "input")
    rio.check_paths(values)
    try:
        with open(values["input"], newline="") as fh:
            trace = SolveTrace.from_csv(fh)
    except ValueError as exc:
        raise FormatError(f"{values['input']}: {exc}") from None
    print(f"{'stage':>5}  {'objective':>16}  {'fidelity':>16}  {'l1_m':>12}  "
          f"{'eta1':>10}  {'eta2':>8}  {'eta3':>8}  {'ms':>9}")
    for r in trace.records:
        print(f"{r.stage:>5}  {r.objective:>16.9e}  {r.fidelity:>16.9e}  {r.l1_m:>12.5e}  "
              f"{r.eta1:>10.3e}  {r.eta2:>8.4f}  {r.eta3:>8.4f}  {r.wall_ms:>9.2f}")
    if plot_path:
        with rio.atomic_outputs() as stage:
            plot_trace(trace, stage(plot_path), title=os.path.basename(values["input"]))


HANDLERS = {
    "derain": cmd_derain,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "kernels": cmd_kernels,
    "trace": cmd_trace,
}


def run_cli(argv=None):
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_intermixed_args(argv)
        values = _values(args)
        with threadpool_limits(limits=values["threads"]):
            HANDLERS[args.command](values, args.plot)
    except UsageError as exc:
        print(f"rcd-solve: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"rcd-solve: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"rcd-solve: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RCDError, ValueError) as exc:
        print(f"rcd-solve: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
