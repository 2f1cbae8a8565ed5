"""
Command-line entry point.

Commands: ``simulate``, ``fit``, ``evaluate``, ``gridsearch`` and ``report``.
Exit status is 0 on success, 2 when a fit stopped at the iteration cap, and
1 on any error. Options can also come from a flat ``key = value`` file given
with ``--config``; command-line flags win.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .em import fit, grid_search_kn
from .evaluation import evaluate_fits, lambda_and_pt_summary, write_grid_csv, write_summary_csv
from .io import dump_json, load_fit, save_fit, texture_to_dict
from .signal import MultichannelRecord, ingest_csv, segment
from .texture import Exponential, Gamma, InverseGamma, simulate_cg

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER = 0, 1, 2
ALL_FAMILIES = ("cge", "cgg", "cgig")

log = logging.getLogger("cgtex")


class UsageError(ValueError):
    pass


def _pair(text: str):
    try:
        K, N = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K,N, got {text!r}") from None
    if K < 1 or N < 1:
        raise argparse.ArgumentTypeError("K and N must be positive")
    return K, N


def _int_list(text: str) -> List[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("candidates must be positive integers")
    return out


def _float_vec(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _matrix(text: str) -> np.ndarray:
    """Rows separated by ';', entries by ','."""
    try:
        rows = [[float(v) for v in r.split(",")] for r in text.split(";")]
        return np.array(rows, dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a matrix like '2,0.3;0.3,1', got {text!r}") from None


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text!r}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _channels(text: str) -> List[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


def _add_data_args(p, need_segments=True):
    p.add_argument("--input", required=True, help="CSV file, header row of channel names")
    p.add_argument("--channels", type=_channels, default=None, help="comma-separated column names")
    p.add_argument("--sample-rate", type=_positive_float, default=2000.0)
    if need_segments:
        p.add_argument("--segments", type=_pair, default=None, metavar="K,N",
                       help="segment count and length (default: fill the record with N=40)")


def _add_fit_args(p):
    p.add_argument("--family", choices=ALL_FAMILIES + ("all",), default="all")
    p.add_argument("--phi-o", type=_nonneg_float, default=1e-5, help="convergence threshold")
    p.add_argument("--max-iter", type=_positive_int, default=1000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgtex", description="Compound-Gaussian texture model fitting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--config", default=None, help="flat key = value file of option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic compound-Gaussian CSV")
    p.add_argument("--family", choices=ALL_FAMILIES, default="cge")
    p.add_argument("--lam", type=_positive_float, default=None, help="CG-E texture mean")
    p.add_argument("--alpha", type=_positive_float, default=None)
    p.add_argument("--beta", type=_positive_float, default=None)
    p.add_argument("--mu", type=_float_vec, default=None, help="e.g. 0,0 (default: zeros)")
    p.add_argument("--sigma", type=_matrix, default=None, help="e.g. '2,0.3;0.3,1' (default: identity)")
    p.add_argument("--dim", type=_positive_int, default=2, help="used when mu and sigma are omitted")
    p.add_argument("--segments", type=_pair, required=True, metavar="K,N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default="simulated", help="output file stem")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit one or all families by EM")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--condition", default="", help="label carried into the fit file")
    p.add_argument("--label", default="", help="label carried into the fit file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score fit files against the data")
    _add_data_args(p)
    p.add_argument("--fits", nargs="+", required=True, help="fit JSON files")
    p.add_argument("--bins", type=_positive_int, default=100)
    p.add_argument("--mc-samples", type=_positive_int, default=10**6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gridsearch", help="choose (K, N) by lowest KLD")
    _add_data_args(p, need_segments=False)
    _add_fit_args(p)
    p.add_argument("--k-candidates", type=_int_list, required=True)
    p.add_argument("--n-candidates", type=_int_list, required=True)
    p.add_argument("--bins", type=_positive_int, default=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="texture-mean and P_T summary per condition and label")
    p.add_argument("--fits", nargs="+", required=True)
    p.add_argument("--out", required=True)
    return parser


def read_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, dashes in keys become underscores."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _with_config(parser, argv: List[str]) -> List[str]:
    # Splice config values in right after the command name so argparse
    # does the type conversion and flags typed later still win.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    config = read_config(known.config)
    i = next((j for j, a in enumerate(argv) if a in COMMANDS), None)
    if i is None:
        return argv
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[argv[i]]
    options = {a.dest: a for a in sub._actions if a.option_strings and a.dest != "help"}
    unknown = sorted(set(config) - set(options))
    if unknown:
        raise UsageError(f"unknown config key(s) for {argv[i]}: {', '.join(unknown)}")
    extra = []
    for key, value in config.items():
        action = options[key]
        extra.append(action.option_strings[-1])
        extra.extend(value.split() if action.nargs == "+" else [value])
    return argv[:i + 1] + extra + argv[i + 1:]


def _families(name: str):
    return ALL_FAMILIES if name == "all" else (name,)


def _load_record(args) -> MultichannelRecord:
    return ingest_csv(args.input, args.channels, sample_rate=args.sample_rate)


def _segments(record, pair):
    K, N = pair if pair is not None else (record.T // 40, 40)
    return segment(record, K, N)


def cmd_simulate(args) -> int:
    d = args.dim
    mu = args.mu if args.mu is not None else np.zeros(args.sigma.shape[0] if args.sigma is not None else d)
    sigma = args.sigma if args.sigma is not None else np.eye(mu.size)
    if args.family == "cge":
        if args.lam is None:
            raise UsageError("cge needs --lam")
        params = Exponential(args.lam)
    else:
        if args.alpha is None or args.beta is None:
            raise UsageError(f"{args.family} needs --alpha and --beta")
        params = (Gamma if args.family == "cgg" else InverseGamma)(args.alpha, args.beta)
    K, N = args.segments
    sig = simulate_cg(params, mu, sigma, K, N, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"ch{i + 1}" for i in range(sig.d)]
    with open(out / f"{args.name}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in sig.flat():
            w.writerow([repr(float(v)) for v in row])
    dump_json({
        "texture": texture_to_dict(params),
        "mu": np.asarray(mu, float).tolist(),
        "sigma": np.asarray(sigma, float).tolist(),
        "K": K,
        "N": N,
        "seed": args.seed,
        "channels": names,
    }, out / f"{args.name}.json")
    return EXIT_OK


def cmd_fit(args) -> int:
    sig = _segments(_load_record(args), args.segments)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"condition": args.condition, "label": args.label, "source": str(args.input)}
    status = EXIT_OK
    for family in _families(args.family):
        f = fit(sig, family, phi_o=args.phi_o, max_iter=args.max_iter, meta=meta)
        save_fit(f, out / f"fit_{family}.json")
        log.info("%s: %d iterations, converged=%s, LLV=%.6g", family, f.iterations, f.converged, f.llv)
        if not f.converged:
            status = EXIT_MAX_ITER
    return status


def cmd_evaluate(args) -> int:
    fits = {}
    for path in args.fits:
        f = load_fit(path)
        if f.family in fits:
            raise UsageError(f"{path}: a {f.family} fit was already given")
        fits[f.family] = f
    record = _load_record(args)
    first = next(iter(fits.values()))
    for path, f in zip(args.fits, fits.values()):
        if f.d != record.d:
            raise UsageError(f"{path}: fit has dimension {f.d}, data has {record.d}")
    sig = _segments(record, args.segments or (first.K, first.N))
    grids = {}
    report = evaluate_fits(fits, sig, bins=args.bins, mc_samples=args.mc_samples, seed=args.seed, grids=grids)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_dict(), out / "eval_report.json")
    for family, (emp, mass) in grids.items():
        write_grid_csv(emp, mass, out / f"grid_{family}.csv")
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    record = _load_record(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for family in _families(args.family):
        K, N, table = grid_search_kn(record, family, args.k_candidates, args.n_candidates,
                                     bins=args.bins, phi_o=args.phi_o, max_iter=args.max_iter)
        with open(out / f"gridsearch_{family}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["K", "N", "kld"])
            for (k, n), v in table.items():
                w.writerow([k, n, repr(v)])
        dump_json({"family": family, "K": K, "N": N, "kld": table[(K, N)]},
                  out / f"gridsearch_{family}.json")
        log.info("%s: best (K, N) = (%d, %d)", family, K, N)
    return EXIT_OK


def cmd_report(args) -> int:
    entries = []
    for path in args.fits:
        f = load_fit(path)
        entries.append((f.meta.get("condition", ""), f.meta.get("label", ""), f))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(lambda_and_pt_summary(entries), out / "lambda_summary.csv")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_with_config(parser, argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
