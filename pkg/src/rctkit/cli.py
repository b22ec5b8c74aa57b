"""Command-line interface: ``rctkit {assign,analyze,test,simulate}``.

Exit codes: 0 success, 2 usage error, 3 incompatible estimator/variance/
design combination, 4 data or estimation error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import COMPATIBLE, ESTIMATOR_NAMES, analyze
from .design import (assign_clusters, assign_complete, assign_matched_pairs, assign_stratified_block,
                     match_pairs)
from .errors import IncompatibleError, RctError
from .io import covariate_columns, read_sample, read_table, write_table
from .model import ClusterSample, DesignSpec
from .oracle.montecarlo import run_config
from .permute import permutation_test

EXIT_USAGE = 2
EXIT_INCOMPATIBLE = 3
EXIT_DATA = 4

STAT_NAMES = {"dim": "dim", "dim-studentized": "studentized"}


def parse_pi_by_stratum(text: str | None) -> dict[str, float] | None:
    """``"a=0.5,b=0.25"`` to ``{"a": 0.5, "b": 0.25}``."""
    if text is None:
        return None
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise argparse.ArgumentTypeError(f"expected stratum=probability, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a probability: {value!r}") from None
    return out


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def cmd_assign(args) -> int:
    header, rows = read_table(args.input)
    if not rows:
        raise RctError("no data rows")
    n = len(rows)
    extra = {}
    if args.design == "complete":
        d = assign_complete(n, args.pi, args.seed).d
    elif args.design == "sbr":
        if "stratum" not in header:
            raise IncompatibleError("stratified assignment needs a stratum column")
        d = assign_stratified_block([r["stratum"] for r in rows], args.pi_by_stratum or args.pi, args.seed).d
    elif args.design == "pairs":
        xcols = covariate_columns(header)
        if not xcols:
            raise IncompatibleError("matched pairs need covariate columns x1..xk to match on")
        x = np.array([[float(r[c]) for c in xcols] for r in rows])
        pairing = match_pairs(x)
        a = assign_matched_pairs(pairing, args.seed)
        d = a.d
        extra["pair"] = a.pair_ids()
    else:
        if "cluster" not in header:
            raise IncompatibleError("cluster assignment needs a cluster column")
        ids = [int(float(r["cluster"])) for r in rows]
        levels = sorted(set(ids))
        pos = {g: j for j, g in enumerate(levels)}
        strata = None
        if args.design == "cluster-sbr":
            if "stratum" not in header:
                raise IncompatibleError("stratified cluster assignment needs a stratum column")
            by_cluster = {}
            for g, r in zip(ids, rows):
                if by_cluster.setdefault(g, r["stratum"]) != r["stratum"]:
                    raise RctError(f"cluster {g}: inconsistent stratum across rows")
            strata = [by_cluster[g] for g in levels]
        spec = DesignSpec(args.design, pi=args.pi, pi_by_stratum=args.pi_by_stratum)
        dg = assign_clusters(len(levels), spec, args.seed, strata=strata).d
        d = dg[[pos[g] for g in ids]]
    extra = {"d": d, **extra}
    out_header = [h for h in header if h not in extra] + list(extra)
    out_rows = [{**r, **{k: int(v[i]) for k, v in extra.items()}} for i, r in enumerate(rows)]
    if args.output in (None, "-"):
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(out_header)
        for r in out_rows:
            w.writerow([r.get(h, "") for h in out_header])
    else:
        write_table(args.output, out_header, out_rows)
    return 0


def cmd_analyze(args) -> int:
    data = read_sample(args.input)
    report = analyze(data, args.estimator, args.variance, args.level, pi=args.pi,
                     pi_by_stratum=args.pi_by_stratum, model=args.model)
    _emit(_json(report.to_dict()), args.output)
    return 0


def cmd_test(args) -> int:
    data = read_sample(args.input)
    if isinstance(data, ClusterSample):
        raise IncompatibleError("the randomization test runs on unit-level designs only")
    exhaustive = "auto" if args.exhaustive else False
    if not args.exhaustive and args.seed is None:
        raise RctError("--seed is required unless --exhaustive is given")
    res = permutation_test(data, args.design, STAT_NAMES[args.stat], args.B, args.seed, exhaustive=exhaustive)
    out = {"design": args.design, "statistic": args.stat, "observed": res.observed, "p_value": res.p_value,
           "draws": res.draws, "exhaustive": res.exhaustive, "seed": args.seed}
    _emit(_json(out), args.output)
    if args.reference_out:
        write_table(args.reference_out, ["statistic"], [{"statistic": float(v)} for v in res.reference])
    return 0


SIM_COLUMNS = ("scenario", "design", "n", "estimator", "variance", "truth", "R", "mean", "bias", "bias_mcse",
               "emp_var", "emp_var_mcse", "mean_var_est", "mean_var_est_mcse", "coverage", "coverage_mcse",
               "scaled_var", "theory_var")


def cmd_simulate(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RctError(f"{args.config}: invalid JSON: {exc}") from None
    result = run_config(config, workers=args.workers)
    fmt = args.format or ("csv" if str(args.output).endswith(".csv") else "json")
    if fmt == "json":
        _emit(_json(result), args.output)
        return 0
    target = sys.stdout if args.output in (None, "-") else open(args.output, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(target, lineterminator="\n")
        w.writerow(SIM_COLUMNS)
        for row in result["rows"]:
            w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v)
                        for v in (row[c] for c in SIM_COLUMNS)])
        if result["ratios"]:
            w.writerow([])
            w.writerow(["ratio", "estimator", "empirical", "empirical_mcse", "theoretical", "relative_error"])
            for r in result["ratios"]:
                w.writerow([r["name"], r["estimator"], repr(r["empirical"]), repr(r["empirical_mcse"]),
                            "" if r["theoretical"] is None else repr(r["theoretical"]),
                            "" if r["relative_error"] is None else repr(r["relative_error"])])
    finally:
        if target is not sys.stdout:
            target.close()
    return 0


def _probability(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1: {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rctkit", description="Design and analysis of randomized experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("assign", help="randomize treatment and append a d column")
    a.add_argument("--design", required=True, choices=["complete", "sbr", "pairs", "cluster", "cluster-sbr"])
    a.add_argument("--pi", type=_probability, default=0.5)
    a.add_argument("--pi-by-stratum", type=parse_pi_by_stratum, default=None, metavar="K=V,...")
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--in", dest="input", required=True)
    a.add_argument("--out", dest="output", default=None)
    a.set_defaults(func=cmd_assign)

    variances = sorted({m for ms in COMPATIBLE.values() for m in ms} | {"auto"})
    z = sub.add_parser("analyze", help="estimate the effect with a design-matched standard error",
                       epilog="variance methods: " + ", ".join(variances) + "; finite-pop takes [:N][,improved]")
    z.add_argument("--estimator", default="dim", choices=ESTIMATOR_NAMES)
    z.add_argument("--variance", default="auto")
    z.add_argument("--level", type=_probability, default=0.95)
    z.add_argument("--pi", type=_probability, default=None, help="design assignment probability")
    z.add_argument("--pi-by-stratum", type=parse_pi_by_stratum, default=None, metavar="K=V,...")
    z.add_argument("--model", default="linear", choices=["zero", "mean", "linear", "linear-slopes"],
                   help="working model for aipw")
    z.add_argument("--in", dest="input", required=True)
    z.add_argument("--out", dest="output", default=None)
    z.set_defaults(func=cmd_analyze)

    t = sub.add_parser("test", help="randomization test of the sharp null of no effect")
    t.add_argument("--design", required=True, choices=["complete", "sbr", "pairs"])
    t.add_argument("--stat", default="dim", choices=sorted(STAT_NAMES))
    t.add_argument("--B", type=int, default=999)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--exhaustive", action="store_true", help="enumerate all assignments when at most 10^6")
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--out", dest="output", default=None)
    t.add_argument("--reference-out", default=None, help="CSV file for the sorted reference distribution")
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="run Monte Carlo scenarios from a JSON configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--out", dest="output", default=None)
    s.add_argument("--format", choices=["json", "csv"], default=None)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except IncompatibleError as exc:
        print(f"rctkit: incompatible: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (RctError, ValueError, OSError, KeyError) as exc:
        print(f"rctkit: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
