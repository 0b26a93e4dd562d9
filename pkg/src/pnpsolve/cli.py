"""``pnp-solve`` command-line front end.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 numerical failure (non-finite iterate or input).

Every flag can also be given in a ``--config`` file of ``key = value``
lines, keys spelled like the long flag without the leading dashes.
Precedence is flag, then file, then built-in default.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from functools import partial

import numpy as np

from . import __version__
from .cnn import CnnDenoiser, WeightsFormatError, layer_table, load_model
from .denoisers import GaussianSmooth, IdentityDenoiser, NlmParams, NonLocalMeans, TvProx
from .harness import (
    DeconvExperiment,
    DemosaickExperiment,
    GridSearchSpec,
    Problem,
    alpha_sigma_sweep,
    bilinear_demosaick,
    build_deconv,
    build_demosaick,
    deconv_problem,
    demosaick_problem,
    grid_search,
    image_scores,
    psnr_table,
)
from .image import add_gaussian_noise
from .imageio import ImageFormatError, read_image, write_image
from .linops import BayerMask, BayerPattern, CircularConvolution, parse_kernel_spec
from .prox import DataTerm
from .schemes import SCHEMES, SchemeConfig, fixed_point_residual, history_csv, run
from .synthetic import GENERATORS, generate

log = logging.getLogger("pnpsolve")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
HELP_WIDTH = 88
DEFAULT_SIGMAS = (0.02, 0.04, 0.06, 0.08, 0.1)
DEFAULT_SWEEP_ALPHAS = tuple(2.0 ** (k / 2) for k in range(-2, 13))


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _names(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="key = value file supplying defaults for any flag")
    p.add_argument("--seed", type=int, default=0, help="noise seed for simulated observations")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent runs")
    g = p.add_mutually_exclusive_group()
    g.add_argument("-v", "--verbose", action="store_true", help="log one line per iteration to stderr")
    g.add_argument("-q", "--quiet", action="store_true", help="suppress the summary on stdout")


def _add_source(p, many=False):
    g = p.add_mutually_exclusive_group()
    if many:
        g.add_argument("--in", dest="inputs", type=_names, metavar="PATHS", help="comma-separated input images")
        g.add_argument(
            "--synthetic", type=_names, metavar="NAMES", help=f"synthetic scenes ({', '.join(GENERATORS)})"
        )
    else:
        g.add_argument("--in", dest="input", metavar="PATH", help="input image (PGM, PPM, PFM or NPY)")
        g.add_argument("--synthetic", choices=sorted(GENERATORS), help="use a synthetic scene instead of --in")
    p.add_argument("--size", type=int, default=64, help="side length of synthetic scenes")


def _add_denoiser(p, default="nlm", tv_tol=1e-8):
    g = p.add_argument_group("denoiser")
    g.add_argument("--denoiser", choices=["nlm", "tv", "gaussian", "identity", "cnn"], default=default, help="plugged-in denoiser")
    g.add_argument("--nlm-h", type=float, default=0.1, help="NLM filtering strength")
    g.add_argument("--nlm-sigma", type=float, default=0.0, help="NLM noise offset on patch distances")
    g.add_argument("--nlm-patch", type=int, default=1, help="NLM patch radius")
    g.add_argument("--nlm-search", type=int, default=5, help="NLM search radius")
    g.add_argument("--tv-lambda", type=float, default=0.01, help="TV prox weight")
    g.add_argument("--tv-iters", type=int, default=100, help="TV prox inner iterations")
    g.add_argument("--tv-tol", type=float, default=tv_tol, help="TV prox inner tolerance (0 = fixed count)")
    g.add_argument("--smooth-std", type=float, default=1.0, help="Gaussian smoothing std")
    g.add_argument("--weights", metavar="PATH", help="PNPW weights file for --denoiser cnn")


def _add_scheme(p, scheme="stacked", alpha=16.0, beta_tv=0.0, beta_cross=0.0, iters=30, tol=1e-6, fixed_scheme=False):
    g = p.add_argument_group("scheme")
    if not fixed_scheme:
        g.add_argument("--scheme", choices=SCHEMES, default=scheme, help="splitting scheme")
    if alpha is not None:
        g.add_argument("--alpha", type=float, default=alpha, help="data fidelity weight")
    if beta_tv is not None:
        g.add_argument("--beta-tv", type=float, default=beta_tv, help="stacked TV weight")
        g.add_argument("--beta-cross", type=float, default=beta_cross, help="stacked cross-channel weight")
    g.add_argument("--tau", type=float, default=None, help="primal step; unset picks the scheme stability bound")
    g.add_argument("--gamma", type=float, default=1.0, help="dual step")
    g.add_argument("--theta", type=float, default=1.0, help="extrapolation factor")
    g.add_argument("--iters", type=int, default=iters, help="maximum iterations")
    g.add_argument("--tol", type=float, default=tol, help="relative-change stopping tolerance")


def _add_restore_io(p, crop):
    p.add_argument("--out", metavar="PATH", help="write the restored image (.pgm/.ppm, .pfm or .npy)")
    p.add_argument("--save-degraded", metavar="PATH", help="write the simulated observation")
    p.add_argument("--observed", action="store_true", help="treat the input as the observation, not as ground truth")
    p.add_argument("--ref", metavar="PATH", help="ground truth for PSNR when --observed is set")
    p.add_argument("--crop", type=int, default=crop, help="border excluded from PSNR")
    p.add_argument("--history", metavar="PATH", help="write the per-iteration CSV history")


def build_parser() -> _Parser:
    parser = _Parser(prog="pnp-solve", description="Plug-and-play image restoration.", formatter_class=_formatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    mk = partial(sub.add_parser, formatter_class=_formatter)

    p = mk("denoise", help="apply a denoiser once", description="Apply a denoiser to an image.")
    _add_source(p)
    p.add_argument("--sigma", type=float, default=0.05, help="noise std added to the clean input")
    _add_restore_io(p, crop=0)
    _add_denoiser(p)
    _add_common(p)

    p = mk("deconvolve", help="non-blind deconvolution", description="Deconvolve with a known blur kernel.")
    _add_source(p)
    p.add_argument("--kernel", default="gaussian:1.6", help="gaussian:STD[:SIZE], box:N, motion:L[:ANGLE], delta or file:PATH")
    p.add_argument("--sigma", type=float, default=0.01, help="noise std added to the blurred input")
    _add_restore_io(p, crop=12)
    _add_scheme(p, alpha=16.0)
    _add_denoiser(p)
    _add_common(p)

    p = mk("demosaick", help="Bayer demosaicking", description="Reconstruct RGB from a Bayer mosaic, starting from bilinear interpolation.")
    _add_source(p)
    p.add_argument("--pattern", default="RGGB", help="2x2 CFA layout, e.g. RGGB, GRBG")
    p.add_argument("--sigma", type=float, default=0.0, help="noise std added to the simulated mosaic")
    _add_restore_io(p, crop=5)
    _add_scheme(p, alpha=512.0, beta_tv=0.1, beta_cross=0.1)
    _add_denoiser(p)
    _add_common(p)

    p = mk("grid-search", help="search alpha and beta weights", description="Exhaustive (alpha, beta_tv, beta_cross) search with the stacked scheme.")
    p.add_argument("--task", choices=["deconvolve", "demosaick"], default="deconvolve", help="problem type")
    _add_source(p, many=True)
    p.add_argument("--kernel", default="gaussian:1.6", help="blur kernel spec (deconvolve)")
    p.add_argument("--sigma", type=float, default=0.01, help="noise std (deconvolve)")
    p.add_argument("--pattern", default="RGGB", help="CFA layout (demosaick)")
    p.add_argument("--crop", type=int, default=None, help="border excluded from PSNR; unset means 12 for deconvolve, 5 for demosaick")
    p.add_argument("--alphas", type=_floats, default=[8.0, 16.0, 32.0, 64.0, 128.0], help="alpha grid")
    p.add_argument("--betas-tv", type=_floats, default=[0.0], help="TV weight grid")
    p.add_argument("--betas-cross", type=_floats, default=[0.0], help="cross-channel weight grid")
    p.add_argument("--csv", metavar="PATH", help="write the full grid as CSV ('-' for stdout)")
    _add_scheme(p, alpha=None, beta_tv=None, fixed_scheme=True)
    _add_denoiser(p)
    _add_common(p)

    p = mk(
        "fixed-point-check",
        help="fixed-point residual under each scheme",
        description="Evaluate the fixed-point residual of a candidate image for pg, admm, pdhg1 and pdhg2 "
        "with a common gradient step t. Without --u the candidate is computed by proximal gradient.",
    )
    _add_source(p)
    p.add_argument("--kernel", default="gaussian:1.6", help="blur kernel spec")
    p.add_argument("--sigma", type=float, default=0.01, help="noise std added to the blurred input")
    p.add_argument("--observed", action="store_true", help="treat the input as the observation")
    p.add_argument("--u", metavar="PATH", help="candidate fixed point (use .npy for full precision)")
    p.add_argument("--alpha", type=float, default=4.0, help="data fidelity weight")
    p.add_argument("--t", type=float, default=None, help="gradient step; unset means 1/(alpha ||A||^2)")
    p.add_argument("--pg-iters", type=int, default=5000, help="iteration cap when computing the candidate")
    p.add_argument("--pg-tol", type=float, default=1e-14, help="stopping tolerance when computing the candidate")
    p.add_argument("--out", metavar="PATH", help="write the candidate image")
    _add_denoiser(p, default="tv", tv_tol=0.0)
    _add_common(p)

    p = mk("alpha-sigma-sweep", help="best alpha per TV strength", description="For each sigma use the TV prox with lambda = sigma^2 and grid-search alpha.")
    _add_source(p)
    p.add_argument("--kernel", default="gaussian:1.6", help="blur kernel spec")
    p.add_argument("--sigma", type=float, default=0.01, help="noise std of the deconvolution problem")
    p.add_argument("--crop", type=int, default=12, help="border excluded from PSNR")
    p.add_argument("--sigmas", type=_floats, default=list(DEFAULT_SIGMAS), help="denoiser strengths")
    p.add_argument("--alphas", type=_floats, default=[float(a) for a in DEFAULT_SWEEP_ALPHAS], help="alpha grid")
    p.add_argument("--tv-iters", type=int, default=100, help="TV prox inner iterations")
    p.add_argument("--csv", metavar="PATH", help="write the table as CSV ('-' for stdout)")
    _add_scheme(p, scheme="pdhg2", alpha=None, beta_tv=None)
    _add_common(p)

    p = mk("weights-info", help="describe a PNPW weights file", description="Print the layer table of a PNPW weights file.")
    p.add_argument("--weights", required=True, metavar="PATH", help="PNPW weights file")
    _add_common(p)
    return parser


def _subparser(parser: _Parser, name: str) -> _Parser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


# ---------------------------------------------------------------------------
# Config files and explicit flags
# ---------------------------------------------------------------------------


def read_config(path) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            out[key.strip().replace("_", "-")] = value.strip()
    return out


def _long_flags(sub: _Parser) -> dict[str, argparse.Action]:
    flags = {}
    for a in sub._actions:
        for s in a.option_strings:
            if s.startswith("--"):
                flags[s[2:]] = a
    return flags


def _explicit_dests(sub: _Parser, argv: list[str]) -> set[str]:
    """Destinations set on the command line, found by reparsing with suppressed defaults."""
    saved = [(a, a.default) for a in sub._actions]
    try:
        for a, _ in saved:
            a.default = argparse.SUPPRESS
        ns = sub.parse_args(argv)
    finally:
        for a, d in saved:
            a.default = d
    return set(vars(ns))


def _apply_config(sub: _Parser, ns: argparse.Namespace, explicit: set[str], values: dict[str, str]) -> set[str]:
    flags = _long_flags(sub)
    from_file = set()
    for key, text in values.items():
        action = flags.get(key)
        if action is None or key in ("config", "help", "version"):
            raise UsageError(f"config key {key!r} is not an option of {sub.prog}")
        if action.dest in explicit:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects true or false, got {text!r}")
            value = low in ("true", "1", "yes")
        else:
            try:
                value = action.type(text) if action.type else text
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config key {key!r}: {value!r} is not one of {', '.join(map(str, action.choices))}")
        setattr(ns, action.dest, value)
        from_file.add(action.dest)
    return from_file


def _check_conflicts(ns, given: set[str]) -> None:
    def conflict(a, b, why=""):
        raise UsageError(f"{a} conflicts with {b}{why}")

    if ns.verbose and ns.quiet:
        conflict("--verbose", "--quiet")
    if getattr(ns, "observed", False) and "sigma" in given:
        conflict("--sigma", "--observed", " (noise is only added to simulated observations)")
    if getattr(ns, "ref", None) and not getattr(ns, "observed", False):
        raise UsageError("--ref requires --observed (in simulation mode the input is the reference)")
    den = getattr(ns, "denoiser", None)
    if den is not None:
        if ns.weights and den != "cnn":
            conflict("--weights", f"--denoiser {den}")
        if den == "cnn" and not ns.weights:
            raise UsageError("--denoiser cnn requires --weights")
    if getattr(ns, "observed", False) and getattr(ns, "synthetic", None):
        conflict("--observed", "--synthetic")
    if getattr(ns, "u", None) and getattr(ns, "out", None) and ns.command == "fixed-point-check":
        conflict("--u", "--out", " (the candidate is only written when it is computed)")
    if ns.threads < 1:
        raise UsageError("--threads must be at least 1")


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    ns = parser.parse_args(argv)
    sub = _subparser(parser, ns.command)
    tail = argv[argv.index(ns.command) + 1 :]
    given = _explicit_dests(sub, tail)
    if ns.config:
        try:
            values = read_config(ns.config)
        except OSError as exc:
            raise _IOFailure(f"cannot read config {ns.config}: {exc.strerror or exc}") from None
        given |= _apply_config(sub, ns, given, values)
    _check_conflicts(ns, given)
    return ns


class _IOFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _load(path) -> np.ndarray:
    try:
        img = read_image(path)
    except FileNotFoundError:
        raise _IOFailure(f"no such file: {path}") from None
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except ImageFormatError as exc:
        raise _IOFailure(str(exc)) from None
    if not np.all(np.isfinite(img)):
        raise NumericalError(f"{path}: image contains non-finite values")
    return img


def _save(path, img) -> None:
    try:
        write_image(path, img)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror or exc}") from None
    except ImageFormatError as exc:
        raise _IOFailure(f"{path}: {exc}") from None


def _write_text(path, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _source(ns, color=False) -> np.ndarray:
    if ns.synthetic:
        name = ns.synthetic
        if color and name == "cartoon":
            name = "color_cartoon"
        return generate(name, ns.size, ns.seed)
    if not ns.input:
        raise UsageError("one of --in or --synthetic is required")
    return _load(ns.input)


def make_denoiser(ns):
    if ns.denoiser == "nlm":
        return NonLocalMeans(NlmParams(ns.nlm_patch, ns.nlm_search, ns.nlm_h, ns.nlm_sigma))
    if ns.denoiser == "tv":
        return TvProx(ns.tv_lambda, inner_iters=ns.tv_iters, inner_tol=ns.tv_tol)
    if ns.denoiser == "gaussian":
        return GaussianSmooth(ns.smooth_std)
    if ns.denoiser == "identity":
        return IdentityDenoiser()
    try:
        return CnnDenoiser(load_model(ns.weights))
    except FileNotFoundError:
        raise _IOFailure(f"no such file: {ns.weights}") from None
    except OSError as exc:
        raise _IOFailure(f"cannot read {ns.weights}: {exc.strerror or exc}") from None
    except WeightsFormatError as exc:
        raise _IOFailure(f"{ns.weights}: {exc}") from None


def _template(ns, scheme=None) -> dict:
    t = dict(scheme=scheme or ns.scheme, tau=ns.tau, gamma=ns.gamma, theta=ns.theta, max_iters=ns.iters, tol=ns.tol)
    if hasattr(ns, "denoiser"):
        t["denoiser"] = make_denoiser(ns)
    return t


def _kernel(spec):
    try:
        return parse_kernel_spec(spec)
    except FileNotFoundError:
        raise _IOFailure(f"no such file: {spec.partition(':')[2]}") from None
    except OSError as exc:
        raise _IOFailure(f"cannot read kernel: {exc}") from None


def _summary(ns, lines):
    if not ns.quiet:
        print("\n".join(lines))


def _scores_line(label, scores) -> str:
    parts = [f"{label}: PSNR {scores['all']:.2f} dB"]
    extra = [f"{k} {v:.2f}" for k, v in scores.items() if k != "all"]
    if extra:
        parts.append("(" + ", ".join(extra) + ")")
    return " ".join(parts)


def _run_scheme(ns, cfg, u0):
    def cb(state):
        log.info("iter %3d  rel_change %.3e  data_energy %.6e", state.k, hist_rel(state), cfg.data.energy(state.u))

    prev = {"u": np.array(u0, dtype=np.float64)}

    def hist_rel(state):
        d = float(np.linalg.norm(state.u - prev["u"]) / max(np.linalg.norm(prev["u"]), 1e-12))
        prev["u"] = state.u
        return d

    rep = run(cfg, u0, callback=cb if ns.verbose else None)
    if getattr(ns, "history", None):
        _write_text(ns.history, history_csv(rep.history))
    if rep.stop_reason == "nonfinite":
        raise NumericalError(f"iterate became non-finite after {rep.iterations} iterations")
    return rep


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_denoise(ns) -> int:
    img = _source(ns)
    g = make_denoiser(ns)
    if ns.observed:
        noisy, ref = img, (_load(ns.ref) if ns.ref else None)
    else:
        noisy, ref = add_gaussian_noise(img, ns.sigma, ns.seed), img
        if ns.save_degraded:
            _save(ns.save_degraded, noisy)
    out = g(noisy)
    if not np.all(np.isfinite(out)):
        raise NumericalError("denoiser produced non-finite values")
    if ns.out:
        _save(ns.out, out)
    lines = [f"denoise: {g!r}"]
    if ref is not None:
        lines.append(_scores_line("input", image_scores(ref, noisy, ns.crop)))
        lines.append(_scores_line("output", image_scores(ref, out, ns.crop)))
    _summary(ns, lines)
    return EXIT_OK


def cmd_deconvolve(ns) -> int:
    img = _source(ns)
    kernel = _kernel(ns.kernel)
    if ns.observed:
        data = DataTerm(CircularConvolution(kernel, img.shape), img, ns.alpha)
        degraded, ref = img, (_load(ns.ref) if ns.ref else None)
    else:
        data, degraded = build_deconv(DeconvExperiment(kernel, ns.sigma, 0), img, ns.seed, ns.alpha)
        ref = img
        if ns.save_degraded:
            _save(ns.save_degraded, data.f)
    cfg = SchemeConfig(data=data, beta_tv=ns.beta_tv, beta_cross=ns.beta_cross, **_template(ns))
    rep = _run_scheme(ns, cfg, data.f)
    if ns.out:
        _save(ns.out, rep.u)
    lines = [f"deconvolve: scheme {cfg.scheme}, {rep.iterations} iterations, stop {rep.stop_reason}"]
    if ref is not None:
        lines.append(_scores_line("degraded", image_scores(ref, degraded, ns.crop)))
        lines.append(_scores_line("restored", image_scores(ref, rep.u, ns.crop)))
    _summary(ns, lines)
    return EXIT_OK


def cmd_demosaick(ns) -> int:
    img = _source(ns, color=True)
    try:
        pattern = BayerPattern.from_name(ns.pattern)
    except ValueError as exc:
        raise UsageError(f"--pattern: {exc}") from None
    if ns.observed:
        if img.shape[0] != 1:
            raise UsageError(f"--observed expects a 1-channel mosaic, got {img.shape[0]} channels")
        mosaic, ref = img, (_load(ns.ref) if ns.ref else None)
        data = DataTerm(BayerMask(pattern, (3, *img.shape[1:])), mosaic, ns.alpha)
    else:
        if img.shape[0] != 3:
            raise UsageError(f"demosaick expects a 3-channel ground truth, got {img.shape[0]} channels")
        data, mosaic = build_demosaick(DemosaickExperiment(pattern, 0), img, ns.alpha)
        if ns.sigma > 0:
            mosaic = add_gaussian_noise(mosaic, ns.sigma, ns.seed)
            data = DataTerm(data.operator, mosaic, ns.alpha)
        ref = img
        if ns.save_degraded:
            _save(ns.save_degraded, mosaic)
    start = bilinear_demosaick(mosaic, pattern)
    cfg = SchemeConfig(data=data, beta_tv=ns.beta_tv, beta_cross=ns.beta_cross, **_template(ns))
    rep = _run_scheme(ns, cfg, start)
    if ns.out:
        _save(ns.out, rep.u)
    lines = [f"demosaick: scheme {cfg.scheme}, {rep.iterations} iterations, stop {rep.stop_reason}"]
    if ref is not None:
        lines.append(_scores_line("bilinear", image_scores(ref, start, ns.crop)))
        lines.append(_scores_line("restored", image_scores(ref, rep.u, ns.crop)))
    _summary(ns, lines)
    return EXIT_OK


def _problems(ns) -> list[Problem]:
    color = ns.task == "demosaick"
    if ns.synthetic:
        names = ns.synthetic
        unknown = [n for n in names if n not in GENERATORS]
        if unknown:
            raise UsageError(f"unknown synthetic scene {unknown[0]!r}; choose from {', '.join(GENERATORS)}")
        imgs = [
            (n, generate("color_cartoon" if color and n == "cartoon" else n, ns.size, ns.seed + i))
            for i, n in enumerate(names)
        ]
    elif ns.inputs:
        imgs = [(p, _load(p)) for p in ns.inputs]
    else:
        raise UsageError("one of --in or --synthetic is required")
    probs = []
    for i, (name, img) in enumerate(imgs):
        if color:
            if img.shape[0] != 3:
                raise UsageError(f"{name}: demosaick needs a 3-channel image")
            crop = 5 if ns.crop is None else ns.crop
            probs.append(demosaick_problem(DemosaickExperiment(BayerPattern.from_name(ns.pattern), crop), img, name))
        else:
            crop = 12 if ns.crop is None else ns.crop
            probs.append(deconv_problem(DeconvExperiment(_kernel(ns.kernel), ns.sigma, crop), img, ns.seed + i, name))
    return probs


def cmd_grid_search(ns) -> int:
    probs = _problems(ns)
    spec = GridSearchSpec(ns.alphas, ns.betas_tv, ns.betas_cross)
    res = grid_search(spec, probs, _template(ns, "stacked"), workers=ns.threads)
    if ns.csv:
        _write_text(ns.csv, res.to_csv())
    b = res.best
    diverged = sum(c.diverged for c in res.cells)
    lines = [
        f"grid-search: {len(res.cells)} cells x {len(probs)} problems, {diverged} diverged",
        f"best: alpha {b.alpha:g}, beta_tv {b.beta_tv:g}, beta_cross {b.beta_cross:g}, mean PSNR {b.mean_psnr:.2f} dB",
    ]
    if ns.csv != "-":
        text, _ = psnr_table({n: v for n, v in zip(res.problem_names, b.psnrs)})
        lines.append(text)
        _summary(ns, lines)
    return EXIT_OK


def _fp_problem(ns):
    img = _source(ns)
    kernel = _kernel(ns.kernel)
    if ns.observed:
        return DataTerm(CircularConvolution(kernel, img.shape), img, ns.alpha)
    return build_deconv(DeconvExperiment(kernel, ns.sigma, 0), img, ns.seed, ns.alpha)[0]


def cmd_fixed_point_check(ns) -> int:
    data = _fp_problem(ns)
    g = make_denoiser(ns)
    t = ns.t if ns.t is not None else 1.0 / (data.alpha * data.operator_norm_sq())
    if ns.u:
        u = _load(ns.u)
        if u.shape != tuple(data.shape):
            raise UsageError(f"--u has shape {u.shape}, expected {tuple(data.shape)}")
        source = ns.u
    else:
        cfg = SchemeConfig("pg", data, g, tau=t, max_iters=ns.pg_iters, tol=ns.pg_tol)
        rep = _run_scheme(ns, cfg, data.f)
        u = rep.u
        source = f"proximal gradient, {rep.iterations} iterations, stop {rep.stop_reason}"
        if ns.out:
            _save(ns.out, u)
    configs = {
        "pg": SchemeConfig("pg", data, g, tau=t),
        "admm": SchemeConfig("admm", data, g, gamma=1.0 / t),
        "pdhg1": SchemeConfig("pdhg1", data, g, gamma=1.0 / t),
        "pdhg2": SchemeConfig("pdhg2", data, g, gamma=1.0 / t, tau=t),
    }
    lines = [f"fixed-point-check: candidate from {source}; t = {t!r}"]
    for name, cfg in configs.items():
        r = fixed_point_residual(cfg, u)
        if not math.isfinite(r):
            raise NumericalError(f"{name}: non-finite residual")
        lines.append(f"{name:<6} {r:.3e}")
    _summary(ns, lines)
    return EXIT_OK


def cmd_alpha_sigma_sweep(ns) -> int:
    img = _source(ns)
    prob = deconv_problem(DeconvExperiment(_kernel(ns.kernel), ns.sigma, ns.crop), img, ns.seed)
    tmpl = _template(ns)
    res = alpha_sigma_sweep(ns.sigmas, prob, ns.alphas, tmpl, inner_iters=ns.tv_iters, workers=ns.threads)
    if ns.csv:
        _write_text(ns.csv, res.to_csv())
    if ns.csv != "-":
        _summary(ns, [res.report()])
    return EXIT_OK


def cmd_weights_info(ns) -> int:
    try:
        m = load_model(ns.weights)
    except FileNotFoundError:
        raise _IOFailure(f"no such file: {ns.weights}") from None
    except OSError as exc:
        raise _IOFailure(f"cannot read {ns.weights}: {exc.strerror or exc}") from None
    except WeightsFormatError as exc:
        raise _IOFailure(f"{ns.weights}: {exc}") from None
    print(layer_table(m))
    return EXIT_OK


COMMANDS = {
    "denoise": cmd_denoise,
    "deconvolve": cmd_deconvolve,
    "demosaick": cmd_demosaick,
    "grid-search": cmd_grid_search,
    "fixed-point-check": cmd_fixed_point_check,
    "alpha-sigma-sweep": cmd_alpha_sigma_sweep,
    "weights-info": cmd_weights_info,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        ns = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[ns.command](ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _IOFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
