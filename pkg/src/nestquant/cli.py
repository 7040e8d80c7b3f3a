"""``nestquant`` command line: quantize/dequantize/matmul on files, beta search,
LDLQ runs, benchmarks, and bound tables. Every command writes CSV with a
header row to stdout or ``--out`` and is deterministic given ``--seed``.

Exit codes: 0 ok, 2 I/O or malformed input, 3 shape/config mismatch,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import beta_opt, bench, bounds, codec, formats, ldlq
from .codec import QuantizerConfig
from .lattice import DIM

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, msg: str, code: int):
        super().__init__(msg)
        self.code = code


def _range(spec: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma list."""
    if ":" in spec:
        start, step, stop = (float(v) for v in spec.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9))
        return [start + i * step for i in range(count + 1)]
    return [float(v) for v in spec.split(",") if v]


def _ints(spec: str) -> list[int]:
    return [int(v) for v in spec.split(",") if v]


def _count(spec: str) -> int:
    value = float(spec)
    if value != int(value) or value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive count, got {spec}")
    return int(value)


def _emit(rows: list[list], header: list[str], out: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _read_dmat(path: str) -> np.ndarray:
    try:
        return formats.read_dmat(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    except formats.FormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None


def _read_nlq(path: str) -> codec.QuantizedMatrix:
    try:
        return formats.read_nlq(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    except formats.FormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None


def _write(fn, path, obj) -> None:
    try:
        fn(path, obj)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def _choose_config(args, sample_rows: np.ndarray) -> QuantizerConfig:
    """Explicit betas, or a DP search over blocks sampled from ``sample_rows``."""
    if args.betas:
        betas = sorted(float(b) for b in args.betas.split(","))
        if args.beta_units == "grid":
            betas = [b / args.q for b in betas]
    else:
        if sample_rows.shape[1] % DIM:
            raise CliError("row length must be a multiple of 8", EXIT_CONFIG)
        rng = np.random.default_rng(args.seed)
        blocks = bench.sample_blocks(sample_rows, args.dp_samples, rng)
        prof = beta_opt.profile_errors(blocks, beta_opt.universe(args.universe, args.q), args.q)
        try:
            idx, _ = beta_opt.dp_optimal_betas(prof, args.k)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_NUMERIC) from None
        betas = list(prof.betas[idx])
    if args.margin != "none":
        betas[-1] = beta_opt.apply_margin(betas[-1], args.margin, args.q)
    return QuantizerConfig(args.q, tuple(betas), args.strategy)


def cmd_gen(args) -> None:
    mat = np.random.default_rng(args.seed).standard_normal((args.rows, args.cols))
    _write(formats.write_dmat, args.output, mat)


def cmd_quantize(args) -> None:
    a = _read_dmat(args.input)
    if a.shape[1] % DIM:
        raise CliError(f"column count {a.shape[1]} is not a multiple of 8", EXIT_CONFIG)
    cfg = _choose_config(args, a)
    qm = codec.quantize_matrix(a, cfg, _threads(args))
    _write(formats.write_nlq, args.output, qm)
    fixed, entropy = codec.effective_rate(cfg, codec.beta_usage(qm))
    rmse = float(np.sqrt(np.mean((a - codec.dequantize_matrix(qm)) ** 2)))
    print(f"bits (no entropy coding) = {fixed:.2f}; with entropy coding = {entropy:.2f}", file=sys.stderr)
    _emit(
        [[a.shape[0], a.shape[1], cfg.q, cfg.k, cfg.strategy, ";".join(repr(b) for b in cfg.betas),
          fixed, entropy, rmse]],
        ["rows", "cols", "q", "k", "strategy", "betas", "bits_fixed", "bits_entropy", "rmse"],
        args.out,
    )


def cmd_dequantize(args) -> None:
    qm = _read_nlq(args.input)
    _write(formats.write_dmat, args.output, codec.dequantize_matrix(qm))


def cmd_matmul(args) -> None:
    qa, qb = _read_nlq(args.a), _read_nlq(args.b)
    if qa.config != qb.config:
        raise CliError("quantizer configs of the two operands differ", EXIT_CONFIG)
    if qa.shape[1] != qb.shape[1]:
        raise CliError(f"inner dimensions differ: {qa.shape} vs {qb.shape}", EXIT_CONFIG)
    _write(formats.write_dmat, args.output, codec.quantized_matmul(qa, qb))


def cmd_bench(args) -> None:
    points = bench.synthetic_matmul_benchmark(
        n=args.n, qs=args.qs, ks=args.ks, uniform_bits=args.uniform_bits, universe=args.universe,
        seed=args.seed, dp_samples=args.dp_samples, threads=_threads(args),
    )
    text = bench.to_csv(points)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_bounds(args) -> None:
    rows = [[r, bounds.gamma_lower_bound(r), bounds.rate_distortion_gaussian(r)] for r in args.rates]
    _emit(rows, ["rate", "gamma", "rate_distortion"], args.out)


def _grid_rows(q: int, ks: list[int], eval_blocks: np.ndarray, train_blocks: np.ndarray, universe: np.ndarray):
    prof = beta_opt.profile_errors(train_blocks, universe, q) if train_blocks is not None else None
    rows = []
    for k in ks:
        subsets = [("uniform-grid", np.arange(1, k + 1) * (universe[-1] * q) / k / q)]
        if prof is not None:
            idx, _ = beta_opt.dp_optimal_betas(prof, k)
            subsets.append(("dp", prof.betas[idx]))
        for method, betas in subsets:
            ev = beta_opt.profile_errors(eval_blocks, betas, q)
            full = list(range(len(betas)))
            opt = math.sqrt(beta_opt.opt_beta_cost(ev, full) / ev.n_samples)
            first = math.sqrt(beta_opt.first_beta_cost(ev, full) / ev.n_samples)
            rows.append([method, q, k, ";".join(repr(float(b * q)) for b in betas), opt, first])
    return rows


def cmd_optimize_betas(args) -> None:
    rng = np.random.default_rng(args.seed)
    if args.preset == "appendixF":
        q = 16
        universe = beta_opt.universe("appendixF", q)
        train = rng.standard_normal((args.samples, DIM))
        evals = rng.standard_normal((args.eval_samples, DIM))
        rows = _grid_rows(q, args.ks, evals, train, universe)
        _emit(rows, ["method", "q", "k", "betas_times_q", "opt_rmse", "first_rmse"], args.out)
        return
    if args.q is None:
        raise CliError("--q is required without --preset", EXIT_CONFIG)
    universe = beta_opt.universe(args.universe, args.q)
    if args.input:
        data = _read_dmat(args.input)
        if data.shape[1] % DIM:
            raise CliError("row length must be a multiple of 8", EXIT_CONFIG)
        blocks = bench.sample_blocks(data, args.samples, rng)
    else:
        blocks = rng.standard_normal((args.samples, DIM))
    prof = beta_opt.profile_errors(blocks, universe, args.q)
    if args.profile_out:
        Path(args.profile_out).write_text(prof.to_csv())
    rows = []
    for k in args.ks:
        try:
            idx, total = beta_opt.dp_optimal_betas(prof, k)
        except ValueError as exc:
            raise CliError(str(exc), EXIT_NUMERIC) from None
        rows.append([
            "dp", args.q, k, ";".join(repr(float(b)) for b in prof.betas[idx]),
            math.sqrt(beta_opt.opt_beta_cost(prof, idx) / prof.n_samples),
            math.sqrt(total / prof.n_samples),
        ])
    _emit(rows, ["method", "q", "k", "betas", "opt_rmse", "first_rmse"], args.out)


def cmd_nsm(args) -> None:
    nsm, err = bounds.nsm_estimate(args.lattice, args.samples, args.seed, threads=_threads(args))
    _emit([[args.lattice, args.samples, nsm, err]], ["lattice", "samples", "nsm", "stderr"], args.out)


def cmd_measure_shaping(args) -> None:
    rows = []
    for i, scale in enumerate(args.scales):
        outside = bounds.complement_measures(scale, args.samples, args.seed + i, _threads(args))
        row = [scale, 1.0 - bounds.gaussian_measure_ball(scale * bounds.UNIT_BALL_RADIUS)]
        for r in bounds.REGIONS:
            v = outside[r]
            row += [float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))]
        rows.append(row)
    header = ["scale", "ball_exact"]
    for r in bounds.REGIONS:
        header += [f"{r}_complement", f"{r}_stderr"]
    _emit(rows, header, args.out)


def cmd_ldlq(args) -> None:
    w = _read_dmat(args.weights)
    n = w.shape[1]
    if args.hessian:
        H = _read_dmat(args.hessian)
    elif args.activations:
        acts = _read_dmat(args.activations)
        if acts.shape[1] != n:
            raise CliError("activation width does not match weight columns", EXIT_CONFIG)
        H = ldlq.accumulate_hessian([acts]).H
    else:
        raise CliError("one of --hessian or --activations is required", EXIT_CONFIG)
    if H.shape != (n, n):
        raise CliError(f"Hessian is {H.shape}, weights have {n} columns", EXIT_CONFIG)
    H = 0.5 * (H + H.T)
    if args.save_hessian:
        _write(formats.write_dmat, args.save_hessian, H)
    cfg = _choose_config(args, w)
    if args.eps2 == "auto":
        if not args.activations:
            raise CliError("--eps2 auto needs --activations", EXIT_CONFIG)
        eps2 = ldlq.estimate_noise(_read_dmat(args.activations), cfg).eps2
    else:
        eps2 = float(args.eps2)
    try:
        plain = ldlq.ldlq_quantize(w, H, cfg, args.ridge)
        qa = ldlq.qa_ldlq_quantize(w, H, ldlq.NoiseModel(eps2), cfg, args.ridge)
    except ldlq.LdlError as exc:
        raise CliError(f"{exc}; retry with --ridge {exc.suggested_ridge:g}", EXIT_NUMERIC) from None
    chosen = qa if eps2 > 0 else plain
    if args.output:
        _write(formats.write_nlq, args.output, chosen.quantized)
    direct = codec.dequantize_matrix(codec.quantize_matrix(w, cfg))
    rows = []
    for name, u in (("direct", direct), ("ldlq", plain.U), ("qa-ldlq", qa.U)):
        rows.append([name, eps2, ldlq.proxy_loss(w, u, H), ldlq.noisy_loss(w, u, H, eps2)])
    _emit(rows, ["method", "eps2", "proxy_loss", "noisy_loss"], args.out)


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=int, default=14, help="nesting ratio")
    p.add_argument("--k", type=int, default=4, help="number of betas when searching")
    p.add_argument("--betas", help="comma-separated betas (skips the search)")
    p.add_argument("--beta-units", choices=("absolute", "grid"), default="absolute",
                   help="'grid' means the given betas are multiples of 1/q")
    p.add_argument("--universe", choices=sorted(beta_opt.UNIVERSES), default="appendixG")
    p.add_argument("--dp-samples", type=_count, default=1 << 15)
    p.add_argument("--strategy", choices=codec.STRATEGIES, default=codec.OPT_BETA)
    p.add_argument("--margin", choices=("none", "weights", "activations"), default="none")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestquant", description=__doc__.split("\n\n")[0])
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, stochastic=True):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        if stochastic:
            p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
        p.add_argument("--out", help="CSV output path (default stdout)")
        return p

    p = add("gen", cmd_gen, "write an iid Gaussian DMAT matrix")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("output", metavar="OUT")

    p = add("quantize", cmd_quantize, "DMAT -> NLQ1")
    p.add_argument("input", metavar="IN")
    p.add_argument("output", metavar="OUT")
    _add_codec_flags(p)

    p = add("dequantize", cmd_dequantize, "NLQ1 -> DMAT", stochastic=False)
    p.add_argument("input", metavar="IN")
    p.add_argument("output", metavar="OUT")

    p = add("matmul", cmd_matmul, "approximate A @ B.T from two NLQ1 files", stochastic=False)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("output", metavar="OUT")

    p = add("bench", cmd_bench, "synthetic Gaussian matmul rate/RMSE sweep")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--full", action="store_true", help="use n=4096")
    p.add_argument("--qs", type=_ints, default=list(bench.DEFAULT_QS))
    p.add_argument("--ks", type=_ints, default=list(bench.DEFAULT_KS))
    p.add_argument("--uniform-bits", type=_ints, default=list(bench.DEFAULT_UNIFORM_BITS))
    p.add_argument("--universe", choices=sorted(beta_opt.UNIVERSES), default="synthetic")
    p.add_argument("--dp-samples", type=_count, default=1 << 15)

    p = add("bounds", cmd_bounds, "tabulate the inner-product and rate-distortion bounds", stochastic=False)
    p.add_argument("--rates", type=_range, default=_range("0:0.25:5"))

    p = add("optimize-betas", cmd_optimize_betas, "choose betas with the dynamic program")
    p.add_argument("--preset", choices=("appendixF",))
    p.add_argument("--q", type=int)
    p.add_argument("--k", dest="ks", type=_ints, default=[4])
    p.add_argument("--universe", choices=sorted(beta_opt.UNIVERSES), default="appendixG")
    p.add_argument("--in", dest="input", help="DMAT whose normalized rows supply the blocks")
    p.add_argument("--samples", type=_count, default=1 << 15)
    p.add_argument("--eval-samples", type=_count, default=10**6)
    p.add_argument("--profile-out", help="write the per-sample error profile CSV here")

    p = add("nsm", cmd_nsm, "Monte Carlo normalized second moment")
    p.add_argument("--lattice", choices=bounds.LATTICES, default="e8")
    p.add_argument("--samples", type=_count, default=10**7)

    p = add("measure-shaping", cmd_measure_shaping, "Gaussian mass outside cube / E8 cell / ball")
    p.add_argument("--scales", type=_range, default=_range("1:0.25:5"))
    p.add_argument("--samples", type=_count, default=10**6)

    p = add("ldlq", cmd_ldlq, "LDLQ and QA-LDLQ weight quantization")
    p.add_argument("--weights", required=True)
    p.add_argument("--hessian")
    p.add_argument("--activations")
    p.add_argument("--save-hessian")
    p.add_argument("--eps2", default="0", help="noise variance, or 'auto' to estimate")
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--output", help="NLQ1 path for the quantized weights")
    _add_codec_flags(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench" and args.full:
        args.n = 4096
    try:
        args.func(args)
    except CliError as exc:
        print(f"nestquant: error: {exc}", file=sys.stderr)
        return exc.code
    except np.linalg.LinAlgError as exc:
        print(f"nestquant: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"nestquant: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
