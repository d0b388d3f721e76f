import hashlib
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from oracles import png_bytes
from rcdsolve.cli import run_cli
from rcdsolve.io import load_png, save_png
from rcdsolve.metrics import PSNR_CAP, psnr_y
from rcdsolve.model import load_kernels, load_maps, save_kernels

DATA = os.path.join(os.path.dirname(__file__), "data")
GOLDEN_BG = os.path.join(DATA, "crop_astronaut.png")
GOLDEN_CFG = os.path.join(DATA, "golden.cfg")
# Y-PSNR of the seed-7 regression run, recorded from the first verified run
GOLDEN_PSNR = 30.316199904964716


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def golden_run(folder):
    """synth -> derain -> eval on seed 7; returns the derained Y-PSNR."""
    prefix = os.path.join(folder, "g")
    assert run_cli(["synth", "--input", GOLDEN_BG, "--output", prefix, "--seed", "7",
                    "--threads", "1", "density=0.005", "n_kernels=4"]) == 0
    assert run_cli(["derain", "--config", GOLDEN_CFG, "--input", prefix + "_rainy.png",
                    "--output", prefix, "--threads", "1", f"kernel_file={prefix}_kernels.rcdk"]) == 0
    return psnr_y(load_png(prefix + "_bg.png"), load_png(GOLDEN_BG)), prefix


@pytest.fixture
def image(tmp_path, rng):
    path = tmp_path / "in.png"
    save_png(path, rng.random((24, 24, 3)))
    return str(path)


def test_derain_rain_free_passes_through(tmp_path, image):
    out = str(tmp_path / "r")
    assert run_cli(["derain", "--input", image, "--output", out, "n_kernels=4", "stages=3"]) == 0
    assert psnr_y(load_png(out + "_bg.png"), load_png(image)) == PSNR_CAP
    assert not load_maps(out + "_maps.rcdm").any()
    lines = open(out + "_trace.csv").read().splitlines()
    assert lines[0] == "stage,objective,fidelity,l1_m,eta1,eta2,eta3,wall_ms" and len(lines) == 4


def test_derain_drcd_writes_kernels_and_figures(tmp_path, image):
    out = str(tmp_path / "d")
    code = run_cli(["derain", "--input", image, "--output", out, "variant=DRCD", "stages=2",
                    "n_kernels=5", "n_maps=2", "figures=true"])
    assert code == 0
    assert load_kernels(out + "_kernels.rcdk").shape == (9, 9, 3, 2)
    for suffix in ("_trace.png", "_panel.png"):
        assert open(out + suffix, "rb").read(8) == b"\x89PNG\r\n\x1a\n"


def test_missing_config_is_io_error_without_outputs(tmp_path, image):
    out = str(tmp_path / "x")
    assert run_cli(["derain", "--config", str(tmp_path / "none.cfg"), "--input", image,
                    "--output", out]) == 2
    assert sorted(os.listdir(tmp_path)) == ["in.png"]


def test_missing_kernel_file_is_io_error(tmp_path, image):
    assert run_cli(["derain", "--input", image, "--output", str(tmp_path / "x"),
                    f"kernel_file={tmp_path / 'k.rcdk'}"]) == 2
    assert sorted(os.listdir(tmp_path)) == ["in.png"]


@pytest.mark.parametrize("argv", [["explode"], ["derain", "colour=red"], ["derain", "stages=zero"],
                                  ["derain", "--threads", "0", "--input", "x", "--output", "y"],
                                  ["eval", "--input", "a.png"], ["derain", "--bogus"]])
def test_usage_errors(argv):
    assert run_cli(argv) == 1


def test_invalid_solver_setting_is_usage_error(tmp_path, image):
    assert run_cli(["derain", "--input", image, "--output", str(tmp_path / "x"),
                    "n_kernels=2", "eta2=3"]) == 1
    assert sorted(os.listdir(tmp_path)) == ["in.png"]


def test_numeric_blowup_exit_code(tmp_path, image):
    code = run_cli(["derain", "--input", image, "--output", str(tmp_path / "x"), "n_kernels=2",
                    "step_rule=fixed", "descent_check=false", "eta1=1e6", "prox_m=identity",
                    "prox_b=box_then_smooth", "b_smooth_sigma=1",
                    "stages=400"])
    assert code == 3
    assert sorted(os.listdir(tmp_path)) == ["in.png"]


def test_foreign_input_is_io_error(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"GIF89a....")
    assert run_cli(["eval", "--input", str(bad), "--reference", str(bad)]) == 2


def test_eval_prints_and_appends(tmp_path, image, capsys):
    csv_path = str(tmp_path / "m.csv")
    for _ in range(2):
        assert run_cli(["eval", "--input", image, "--reference", image, "--output", csv_path]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == f"psnr_y={PSNR_CAP:.6f} ssim_y=1.000000"
    rows = open(csv_path).read().splitlines()
    assert rows[0] == "input,reference,psnr_y,ssim_y,mse_y" and len(rows) == 3


def test_kernels_command(tmp_path, capsys):
    out = str(tmp_path / "dict")
    assert run_cli(["kernels", "--output", out, "--plot", str(tmp_path / "atoms.png"),
                    "n_kernels=6", "kernel_size=7", "length_hi=7"]) == 0
    assert load_kernels(out + ".rcdk").shape == (7, 7, 3, 6)
    assert load_png(out + "_sheet.png").shape[2] == 3
    assert "max_correlation=" in capsys.readouterr().out


def test_kernels_from_file(tmp_path, rng):
    src = tmp_path / "k.rcdk"
    K = rng.random((5, 5, 3, 3))
    save_kernels(src, K)
    assert run_cli(["kernels", "--output", str(tmp_path / "copy"), f"kernel_file={src}"]) == 0
    assert np.array_equal(load_kernels(tmp_path / "copy.rcdk"), K)


def test_trace_command(tmp_path, image, capsys):
    out = str(tmp_path / "r")
    assert run_cli(["derain", "--input", image, "--output", out, "n_kernels=2", "stages=4"]) == 0
    capsys.readouterr()
    fig = str(tmp_path / "trace.png")
    assert run_cli(["trace", "--input", out + "_trace.csv", "--plot", fig]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:2] == ["stage", "objective"] and len(lines) == 5
    assert os.path.getsize(fig) > 0
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run_cli(["trace", "--input", str(bad)]) == 2


def test_rgba_input_accepted(tmp_path):
    path = tmp_path / "rgba.png"
    row = [(i * 10, 255 - i * 10, 128, 200) for i in range(12)]
    path.write_bytes(png_bytes([row] * 12, color_type=6))
    with pytest.warns(UserWarning):
        assert run_cli(["eval", "--input", str(path), "--reference", str(path)]) == 0


def test_golden_pipeline(tmp_path):
    got, _ = golden_run(str(tmp_path))
    assert abs(got - GOLDEN_PSNR) <= 1e-6


def test_console_script_entry_point(tmp_path, image):
    exe = shutil.which("rcd-solve")
    argv = [exe] if exe else [sys.executable, "-m", "rcdsolve.cli"]
    proc = subprocess.run(argv + ["eval", "--input", image, "--reference", image],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("psnr_y=")
    proc = subprocess.run(argv + ["nope"], capture_output=True, text=True)
    assert proc.returncode == 1 and "usage error" in proc.stderr
