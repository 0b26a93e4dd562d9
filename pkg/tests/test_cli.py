import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pnpsolve.cli import COMMANDS, build_parser, main, read_config
from pnpsolve.cnn import random_model, save_model
from pnpsolve.imageio import read_image, write_image
from pnpsolve.synthetic import cartoon, color_cartoon

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def gray(tmp_path):
    path = tmp_path / "x.pgm"
    write_image(path, cartoon(32, seed=2))
    return path


@pytest.fixture
def color(tmp_path):
    path = tmp_path / "x.ppm"
    write_image(path, color_cartoon(32, seed=2))
    return path


@pytest.mark.parametrize("name", [None, *COMMANDS])
def test_help_matches_golden(name, capsys):
    argv = ([name] if name else []) + ["--help"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert out == (GOLDEN / f"{name or 'pnp-solve'}.txt").read_text()


@pytest.mark.parametrize("name", list(COMMANDS))
def test_help_lists_every_flag_with_default(name, capsys):
    main([name, "--help"])
    out = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[name]
    for action in sub._actions:
        flag = max(action.option_strings, key=len)
        if flag == "--help":
            continue
        assert flag in out
    body = re.sub(r"\s+", " ", out.split("options:", 1)[1])
    assert body.count("(default:") == len(sub._actions) - 1


def test_deconvolve_smoke(color, tmp_path, capsys):
    out = tmp_path / "y.ppm"
    argv = ["deconvolve", "--in", str(color), "--kernel", "gaussian:1.6", "--sigma", "0.04"]
    argv += ["--denoiser", "nlm", "--alpha", "64", "--out", str(out)]
    assert main(argv) == 0
    assert read_image(out).shape == (3, 32, 32)
    assert "restored: PSNR" in capsys.readouterr().out


def test_outputs_are_byte_identical_across_runs(gray, tmp_path):
    outs = []
    for i in range(2):
        out, hist = tmp_path / f"y{i}.pfm", tmp_path / f"h{i}.csv"
        argv = ["deconvolve", "--in", str(gray), "--iters", "5", "--out", str(out), "--history", str(hist), "--crop", "4"]
        assert main(argv) == 0
        outs.append((out.read_bytes(), hist.read_bytes()))
    assert outs[0] == outs[1]


def test_observed_mode_with_reference(gray, tmp_path, capsys):
    degraded = tmp_path / "f.pfm"
    assert main(["deconvolve", "--in", str(gray), "--iters", "1", "--save-degraded", str(degraded), "--crop", "4"]) == 0
    capsys.readouterr()
    argv = ["deconvolve", "--observed", "--in", str(degraded), "--ref", str(gray), "--iters", "3", "--crop", "4"]
    assert main(argv) == 0
    assert "degraded: PSNR" in capsys.readouterr().out


def test_denoise_and_demosaick(gray, color, tmp_path, capsys):
    assert main(["denoise", "--in", str(gray), "--denoiser", "tv", "--out", str(tmp_path / "d.pgm")]) == 0
    assert main(["demosaick", "--in", str(color), "--iters", "3", "--out", str(tmp_path / "m.ppm")]) == 0
    out = capsys.readouterr().out
    assert "bilinear: PSNR" in out and "output: PSNR" in out
    mosaic = tmp_path / "mosaic.pgm"
    assert main(["demosaick", "--in", str(color), "--iters", "1", "--save-degraded", str(mosaic)]) == 0
    assert main(["demosaick", "--observed", "--in", str(mosaic), "--iters", "2"]) == 0
    assert main(["demosaick", "--observed", "--in", str(color)]) == 1


def test_missing_input_is_io_error(tmp_path, capsys):
    missing = tmp_path / "absent.ppm"
    assert main(["deconvolve", "--in", str(missing)]) == 2
    assert str(missing) in capsys.readouterr().err


def test_bad_format_is_io_error(tmp_path, capsys):
    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"not an image")
    assert main(["denoise", "--in", str(bad)]) == 2
    assert main(["weights-info", "--weights", str(bad)]) == 2


def test_nonfinite_input_is_numerical_failure(tmp_path):
    path = tmp_path / "nan.npy"
    img = np.zeros((1, 8, 8))
    img[0, 1, 1] = np.nan
    np.save(path, img)
    assert main(["denoise", "--in", str(path)]) == 3


def test_divergence_exits_3(gray, tmp_path, capsys):
    # a residual net whose correction grows without bound drives the scheme to overflow
    from pnpsolve.cnn import CnnModel, ConvLayer

    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = -1e30
    weights = tmp_path / "boom.pnpw"
    save_model(CnnModel([ConvLayer(w, np.zeros(1), relu=False)], residual=True, input_channels=1), weights)
    argv = ["deconvolve", "--in", str(gray), "--denoiser", "cnn", "--weights", str(weights), "--crop", "4"]
    assert main(argv) == 3
    assert "non-finite" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv,flags",
    [
        (["-v", "-q"], ("--verbose", "--quiet")),
        (["--observed", "--sigma", "0.1"], ("--sigma", "--observed")),
        (["--weights", "w.pnpw"], ("--weights", "--denoiser")),
    ],
)
def test_conflicting_flags_name_both(gray, capsys, argv, flags):
    assert main(["deconvolve", "--in", str(gray), *argv]) == 1
    err = capsys.readouterr().err
    assert all(f in err for f in flags)


def test_usage_errors(capsys):
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert main(["deconvolve", "--alpha", "abc", "--synthetic", "cartoon"]) == 1
    assert main(["deconvolve"]) == 1
    assert main(["deconvolve", "--synthetic", "cartoon", "--kernel", "gauss:2"]) == 1
    assert main(["denoise", "--synthetic", "cartoon", "--denoiser", "cnn"]) == 1


def test_config_precedence(gray, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# experiment\nscheme = pdhg2\niters = 4\nbeta_tv = 0.5\n")
    assert read_config(cfg) == {"scheme": "pdhg2", "iters": "4", "beta-tv": "0.5"}
    hist = tmp_path / "h.csv"
    argv = ["deconvolve", "--in", str(gray), "--config", str(cfg), "--iters", "2", "--tol", "0", "--history", str(hist), "--crop", "4"]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "scheme pdhg2" in out  # from the file
    assert "2 iterations" in out  # flag beats file


def test_config_errors(gray, tmp_path, capsys):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("nope = 1\n")
    assert main(["deconvolve", "--in", str(gray), "--config", str(bad_key)]) == 1
    bad_val = tmp_path / "b.cfg"
    bad_val.write_text("scheme = fista\n")
    assert main(["deconvolve", "--in", str(gray), "--config", str(bad_val)]) == 1
    no_eq = tmp_path / "c.cfg"
    no_eq.write_text("scheme pdhg2\n")
    assert main(["deconvolve", "--in", str(gray), "--config", str(no_eq)]) == 1
    assert main(["deconvolve", "--in", str(gray), "--config", str(tmp_path / "none.cfg")]) == 2
    conflict = tmp_path / "d.cfg"
    conflict.write_text("observed = true\nsigma = 0.2\n")
    assert main(["deconvolve", "--in", str(gray), "--config", str(conflict)]) == 1


def test_fixed_point_check_on_converged_pg_output(tmp_path, capsys):
    u = tmp_path / "u.npy"
    common = ["--synthetic", "cartoon", "--size", "16", "--kernel", "gaussian:0.8", "--sigma", "0.02", "--seed", "1"]
    argv = ["deconvolve", *common, "--scheme", "pg", "--denoiser", "tv", "--tv-lambda", "0.05", "--tv-tol", "0"]
    argv += ["--alpha", "4", "--iters", "5000", "--tol", "1e-14", "--crop", "2", "--out", str(u)]
    assert main(argv) == 0
    capsys.readouterr()
    assert main(["fixed-point-check", *common, "--tv-lambda", "0.05", "--alpha", "4", "--u", str(u)]) == 0
    out = capsys.readouterr().out
    residuals = dict(line.split() for line in out.splitlines()[1:])
    assert set(residuals) == {"pg", "admm", "pdhg1", "pdhg2"}
    assert all(float(v) <= 1e-8 for v in residuals.values())


def test_grid_search_threads_identical(tmp_path):
    csvs = []
    for n in (1, 3):
        path = tmp_path / f"g{n}.csv"
        argv = ["grid-search", "--synthetic", "cartoon,ramp_edges", "--size", "24", "--crop", "4", "--alphas", "8,32"]
        argv += ["--betas-tv", "0,0.02", "--iters", "3", "--nlm-search", "2", "--threads", str(n), "--csv", str(path), "-q"]
        assert main(argv) == 0
        csvs.append(path.read_bytes())
    assert csvs[0] == csvs[1]
    assert csvs[0].decode().splitlines()[0].startswith("alpha,beta_tv,beta_cross,mean_psnr")


def test_alpha_sigma_sweep_cli(tmp_path, capsys):
    path = tmp_path / "s.csv"
    argv = ["alpha-sigma-sweep", "--synthetic", "cartoon", "--size", "24", "--crop", "4", "--sigmas", "0.05,0.1"]
    argv += ["--alphas", "1,4", "--iters", "3", "--tv-iters", "5", "--csv", str(path)]
    assert main(argv) == 0
    assert "quadratic fit" in capsys.readouterr().out
    assert path.read_text().startswith("sigma,best_alpha,best_psnr\n")


def test_weights_info(tmp_path, capsys):
    path = tmp_path / "m.pnpw"
    save_model(random_model(1, (4,), seed=0), path)
    assert main(["weights-info", "--weights", str(path)]) == 0
    assert "layers 2" in capsys.readouterr().out


def test_cnn_denoiser_from_cli(gray, tmp_path):
    path = tmp_path / "m.pnpw"
    save_model(random_model(1, (4,), scale=0.01, seed=0), path)
    assert main(["denoise", "--in", str(gray), "--denoiser", "cnn", "--weights", str(path), "--sigma", "0.02"]) == 0


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pnpsolve", "deconvolve", "--in", str(tmp_path / "none.pgm")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "none.pgm" in proc.stderr and proc.stdout == ""
