"""Command-line interface: ``tsanomaly <method> --input data.csv --out res.json``.

Exit codes: 0 success, 2 argument error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import replace
from importlib import metadata
from typing import Optional, Sequence

import numpy as np

from .bard import BardPriors, bard
from .capa_mv import capa_mv, scapa_mv
from .capa_uv import capa_uv, scapa_uv
from .core import (
    DataError,
    DegenerateScaleError,
    DetectorConfig,
    InvalidArgumentError,
    PenaltySchedule,
    TRANSFORMS,
    default_penalties_mv,
    default_penalties_uv,
    inflated_penalties_mv,
    inflated_penalties_uv,
)
from .datagen import simulate
from .folding import period_average
from .io import (
    anomalyset_to_dict,
    atomic_write,
    bard_to_dict,
    dumps,
    ingest_csv,
    load_json,
    pass_to_dict,
    write_csv_matrix,
    write_json,
)
from .passdetect import pass_detect
from .plotdata import emit_plot_data
from .transforms import robust_ar1

log = logging.getLogger("tsanomaly")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _io_args(sp, needs_input=True):
    if needs_input:
        sp.add_argument("--input", required=True, help="CSV file, one column per variate")
        hdr = sp.add_mutually_exclusive_group()
        hdr.add_argument("--header", dest="has_header", action="store_const", const=True,
                         help="first row holds variate names (default: auto-detect)")
        hdr.add_argument("--no-header", dest="has_header", action="store_const", const=False)
        sp.add_argument("--time-column", action="store_true",
                        help="first column is a time index (e.g. t or Day)")
        sp.add_argument("--plot-prefix", help="also write <prefix>.csv and <prefix>.svg")
    sp.add_argument("--out", help="output path (default: stdout)")
    sp.add_argument("--verbose", "-v", action="store_true")


def _capa_args(sp, multivariate, sequential):
    sp.add_argument("--type", dest="cost_type", choices=("mean", "meanvar"),
                    default="mean" if multivariate else "meanvar")
    sp.add_argument("--min-seg-len", type=int, default=10)
    sp.add_argument("--max-seg-len", type=int)
    sp.add_argument("--transform", choices=TRANSFORMS,
                    default="sequential" if sequential else "robustscale")
    sp.add_argument("--rho", type=_floats, help="AR(1) estimate(s); one value or one per variate")
    sp.add_argument("--inflate-penalties", action="store_true",
                    help="scale penalties for AR(1) dependence (uses --rho or a robust estimate)")
    sp.add_argument("--beta", type=_floats,
                    help="collective penalty (one value or one per length); marginal penalties for -mv")
    sp.add_argument("--beta-tilde", type=float, help="point anomaly penalty")
    sp.add_argument("--no-prune", action="store_true", help="disable candidate pruning")
    if multivariate:
        sp.add_argument("--max-lag", type=int, default=0)
        sp.add_argument("--allow-meanvar-lag", action="store_true")
    if sequential:
        sp.add_argument("--epoch", type=int, help="report the output as of this time (1-based)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsanomaly", description="Collective and point anomaly detection")
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, mv, seq, help_ in (
        ("capa", False, False, "univariate CAPA"),
        ("scapa", False, True, "sequential univariate CAPA"),
        ("capa-mv", True, False, "multivariate CAPA"),
        ("scapa-mv", True, True, "sequential multivariate CAPA"),
    ):
        sp = sub.add_parser(name, help=help_)
        _io_args(sp)
        _capa_args(sp, mv, seq)

    sp = sub.add_parser("pass", help="proportion adaptive segment selection")
    _io_args(sp)
    sp.add_argument("--alpha0", type=int, default=1)
    sp.add_argument("--lambda", dest="lam", type=float, help="threshold (default from n, p, max-seg-len)")
    sp.add_argument("--min-seg-len", type=int, default=1)
    sp.add_argument("--max-seg-len", type=int, default=10)
    sp.add_argument("--transform", choices=TRANSFORMS, default="robustscale")
    sp.add_argument("--hc-mode", choices=("max", "min"), default="max")

    sp = sub.add_parser("bard", help="Bayesian abnormal region detector")
    _io_args(sp)
    sp.add_argument("--p-n", type=float)
    sp.add_argument("--k-n", type=float)
    sp.add_argument("--p-a", type=float)
    sp.add_argument("--k-a", type=float)
    sp.add_argument("--pi-n", type=float, default=0.9)
    sp.add_argument("--paffected", type=float, default=0.05)
    sp.add_argument("--lower", type=float, default=0.5)
    sp.add_argument("--upper", type=float, default=1.5)
    sp.add_argument("--h", type=float, default=0.25)
    sp.add_argument("--alpha", type=float, default=1e-4)
    sp.add_argument("--gamma", type=float, default=1.0 / 3.0)
    sp.add_argument("--num-draws", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--transform", choices=TRANSFORMS, default="robustscale")

    sp = sub.add_parser("simulate", help="write a synthetic series with planted anomalies")
    _io_args(sp, needs_input=False)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--mu", type=float, required=True)
    sp.add_argument("--starts", type=_ints, default=[])
    sp.add_argument("--duration", type=int, default=1)
    sp.add_argument("--proportions", type=_floats, default=[])
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("fold", help="period-fold a lightcurve and bin-average it")
    _io_args(sp)
    sp.add_argument("--period", type=float, required=True)
    sp.add_argument("--bins", type=int, help="number of bins (default: sqrt of sample size)")

    sp = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", help="write results here instead of the recorded path")
    return parser


# -- handlers ------------------------------------------------------------------


def _load(args):
    data = ingest_csv(args.input, has_header=args.has_header, time_column=args.time_column)
    log.info("read %d rows x %d columns from %s", data.n, data.p, args.input)
    return data


def _rhos(args, values: np.ndarray) -> np.ndarray:
    p = values.shape[1]
    if args.rho is not None:
        if len(args.rho) not in (1, p):
            raise InvalidArgumentError(f"--rho needs 1 or {p} values, got {len(args.rho)}")
        return np.broadcast_to(np.array(args.rho, dtype=float), (p,)).copy()
    return np.array([robust_ar1(values[:, j]) for j in range(p)])


def _penalties(args, values: np.ndarray, multivariate: bool) -> Optional[PenaltySchedule]:
    n, p = values.shape
    w = getattr(args, "max_lag", 0)
    if args.inflate_penalties:
        rhos = _rhos(args, values)
        if multivariate:
            base = inflated_penalties_mv(n, p, w, rhos)
        else:
            base = inflated_penalties_uv(n, float(rhos[0]))
    elif args.beta is None and args.beta_tilde is None:
        return None
    elif multivariate:
        base = default_penalties_mv(n, p, w, args.cost_type)
    else:
        base = default_penalties_uv(n, args.cost_type)
    beta, marginal = base.beta, base.marginal_beta
    if args.beta is not None:
        if multivariate:
            marginal = np.array(args.beta)
            beta = marginal[:1]
        else:
            beta = np.array(args.beta)
    tilde = base.beta_tilde if args.beta_tilde is None else args.beta_tilde
    return PenaltySchedule(beta, tilde, marginal)


def _run_capa(args) -> dict:
    multivariate = args.command in ("capa-mv", "scapa-mv")
    sequential = args.command in ("scapa", "scapa-mv")
    data = _load(args)
    values = np.asarray(data.values)
    if not multivariate and data.p != 1:
        raise InvalidArgumentError(f"{args.command} expects one column, got {data.p}; use {args.command}-mv")
    rho = None
    if args.rho is not None and args.transform == "ac_corrected":
        rho = _rhos(args, values)
    config = DetectorConfig(
        cost_type=args.cost_type,
        min_seg_len=args.min_seg_len,
        max_seg_len=args.max_seg_len,
        max_lag=getattr(args, "max_lag", 0),
        transform=args.transform,
        penalties=_penalties(args, values, multivariate),
        prune=not args.no_prune,
        allow_meanvar_lag=getattr(args, "allow_meanvar_lag", False),
    )
    detector = {
        "capa": capa_uv, "scapa": scapa_uv, "capa-mv": capa_mv, "scapa-mv": scapa_mv,
    }[args.command]
    out = detector(values, config, rho=rho)
    if sequential:
        out = out.at_epoch(args.epoch if args.epoch is not None else data.n)
    if args.plot_prefix:
        emit_plot_data(args.plot_prefix, values, result=out, names=data.variate_names)
    if args.verbose:
        for c in out.collective:
            log.info("collective %d-%d variates %s", c.start + 1, c.end + 1,
                     ",".join(str(v + 1) for v in c.variates))
        log.info("%d point anomalies", len(out.points))
    return anomalyset_to_dict(out, args.command, data.variate_names)


def _run_pass(args) -> dict:
    data = _load(args)
    res = pass_detect(
        np.asarray(data.values), alpha0=args.alpha0, lam=args.lam, min_seg_len=args.min_seg_len,
        max_seg_len=args.max_seg_len, transform=args.transform, hc_mode=args.hc_mode,
    )
    log.info("lambda = %.6g", res.lambda_used)
    if args.verbose:
        for s in res.segments:
            log.info("segment %d-%d xstar %.6g exp(xstar) %.6g", s.start + 1, s.end + 1,
                     s.xstar, np.exp(min(s.xstar, 700.0)))
    if args.plot_prefix:
        emit_plot_data(args.plot_prefix, np.asarray(data.values), names=data.variate_names,
                       segments=[(s.start, s.end) for s in res.segments])
    return pass_to_dict(res, data.variate_names, args.transform, args.hc_mode)


def _bard_priors(args) -> BardPriors:
    extra = dict(pi_N=args.pi_n, paffected=args.paffected, lower=args.lower, upper=args.upper,
                 h=args.h, alpha=args.alpha)
    base = BardPriors.default(**extra)
    given = {k: v for k, v in (("p_N", args.p_n), ("k_N", args.k_n), ("p_A", args.p_a), ("k_A", args.k_a))
             if v is not None}
    return replace(base, **given)


def _run_bard(args) -> dict:
    data = _load(args)
    priors = _bard_priors(args)
    if args.num_draws < 1:
        raise InvalidArgumentError("--num-draws must be at least 1")
    summary = bard(np.asarray(data.values), priors, args.num_draws, args.gamma,
                   args.transform, args.seed)
    if args.plot_prefix:
        emit_plot_data(args.plot_prefix, np.asarray(data.values), names=data.variate_names,
                       segments=[(s.start, s.end) for s in summary.point_estimate],
                       marginals=(summary.marginal_prob, summary.threshold))
    return bard_to_dict(summary, priors, data.n, data.p, args.num_draws, args.seed,
                        args.transform, data.variate_names)


def _require_out(args):
    if not args.out:
        raise InvalidArgumentError(f"{args.command} needs --out")


def _run_simulate(args) -> None:
    _require_out(args)
    x = simulate(args.n, args.p, args.mu, args.starts, args.duration, args.proportions, args.seed)
    write_csv_matrix(args.out, np.asarray(x.values))


def _run_fold(args) -> None:
    _require_out(args)
    data = ingest_csv(args.input, has_header=args.has_header, time_column=True)
    centres, means = period_average(data.timestamps, np.asarray(data.values)[:, 0], args.period, args.bins)
    write_csv_matrix(args.out, np.column_stack([centres, means]), ["phase", "mean"])


def _emit(args, result: dict) -> None:
    text = dumps(result)
    if args.out:
        atomic_write(args.out, lambda fh: fh.write(text))
    else:
        sys.stdout.write(text)


def _manifest(args, argv, started: float) -> None:
    if not getattr(args, "out", None):
        return
    outputs = [args.out]
    if getattr(args, "plot_prefix", None):
        outputs += [args.plot_prefix + ".csv", args.plot_prefix + ".svg"]
        if args.command == "bard":
            outputs.append(args.plot_prefix + "_marginal.csv")
    config = {k: v for k, v in vars(args).items() if k not in ("input", "out", "plot_prefix", "verbose")}
    write_json(args.out + ".manifest.json", {
        "argv": list(argv),
        "method": args.command,
        "input": getattr(args, "input", None),
        "config": config,
        "seed": getattr(args, "seed", None),
        "outputs": outputs,
        "duration_seconds": round(time.perf_counter() - started, 6),
        "version": _version(),
        "threads": os.environ.get("ANOMALY_THREADS"),
    })


def _rerun(args) -> int:
    manifest = load_json(args.manifest)
    argv = list(manifest["argv"])
    if args.out:
        if "--out" in argv:
            argv[argv.index("--out") + 1] = args.out
        else:
            argv += ["--out", args.out]
    return run(argv)


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "rerun":
        try:
            return _rerun(args)
        except (OSError, KeyError, ValueError) as exc:
            print(f"error: cannot rerun {args.manifest}: {exc}", file=sys.stderr)
            return EXIT_DATA
    started = time.perf_counter()
    handlers = {"pass": _run_pass, "bard": _run_bard, "simulate": _run_simulate, "fold": _run_fold}
    try:
        result = handlers.get(args.command, _run_capa)(args)
        if result is not None:
            _emit(args, result)
        _manifest(args, argv, started)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DegenerateScaleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
