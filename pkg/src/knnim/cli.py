"""Command-line front end: ``knnim analyze | simulate | probabilities | oracle``.

Exit codes: 0 success, 2 input error, 3 positivity / design error, 4 oracle failure,
5 K too large for the number of units.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io, oracle
from .design import Design, JointTables, joint_probability
from .estimators import PositivityError, Weights, estimate_all, low_count_exposures, ExperimentData
from .model import all_exposures, build_k_neighborhoods, exposure_counts, neighbor_patterns
from .sim import run_simulation

log = logging.getLogger("knnim")

EXIT_OK, EXIT_INPUT, EXIT_DESIGN, EXIT_ORACLE, EXIT_K = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _default_workers() -> int:
    try:
        return max(1, int(os.environ.get("KNNIM_THREADS", "1")))
    except ValueError:
        return 1


def _load_config(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill unset flags from ``--config`` (JSON object keyed by flag name), then defaults."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = io.read_json(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_INPUT) from None
        if not isinstance(cfg, dict):
            raise CliError(f"config {args.config} must hold a JSON object", EXIT_INPUT)
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, cfg.get(key.replace("_", "-"), default)))
    return args


def _design(args: argparse.Namespace, n: int, n_treated: int | None = None) -> Design:
    try:
        if args.design == "crd":
            n_t = args.n_treated if args.n_treated is not None else n_treated
            if n_t is None:
                raise CliError("--n-treated is required for a CRD without a units file", EXIT_INPUT)
            return Design.crd(n, int(n_t))
        if args.design == "bernoulli":
            if args.p is None:
                raise CliError("--p is required for a Bernoulli design", EXIT_INPUT)
            return Design.bernoulli(n, float(args.p))
    except ValueError as exc:
        raise CliError(f"invalid design: {exc}", EXIT_DESIGN) from None
    raise CliError(f"unknown design {args.design!r}", EXIT_INPUT)


def _neighborhoods(dist, k: int):
    n = dist.n
    if not 1 <= k <= n - 2:
        raise CliError(f"K={k} too large for N={n} (need N >= K+2)", EXIT_K)
    try:
        return build_k_neighborhoods(dist, k)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None


ANALYZE_DEFAULTS = dict(
    units=None, distances=None, k=None, design="crd", n_treated=None, p=None,
    assumptions="both", c1=0.5, c2=0.5, z=1.96, format="csv", out=None, counts_out=None,
)


def cmd_analyze(args: argparse.Namespace) -> int:
    args = _load_config(args, ANALYZE_DEFAULTS)
    if not args.units or not args.distances or args.k is None:
        raise CliError("analyze needs --units, --distances and --k", EXIT_INPUT)
    units = io.read_units(args.units)
    dist = io.read_distances(args.distances, units.ids)
    nbr = _neighborhoods(dist, int(args.k))
    design = _design(args, units.n, int(units.w.sum()))
    try:
        weights = Weights(float(args.c1), float(args.c2))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    try:
        data = ExperimentData(nbr, design, units.w, units.y)
        estimates = estimate_all(data, weights)
    except PositivityError as exc:
        raise CliError(f"positivity failure: {exc}", EXIT_DESIGN) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DESIGN) from None
    if args.assumptions != "both":
        keep = {"a1": "A1", "a2": "A2"}[args.assumptions]
        estimates = [e for e in estimates if e.assumption == keep or e.kind == "total"]
    low = low_count_exposures(data, weights)
    counts = exposure_counts(nbr, units.w)
    rows = io.estimate_rows(estimates, float(args.z))

    if args.format == "json":
        payload = {
            "design": design.describe(),
            "k": nbr.k,
            "n": units.n,
            "weights": [weights.c1, weights.c2],
            "z": float(args.z),
            "estimates": rows,
            "exposure_counts": {
                "columns": neighbor_patterns(nbr.k),
                "rows": io.count_rows(counts, nbr.k),
            },
            "warnings": [f"exposure {e} observed {c} times (< 30)" for e, c in low.items()],
        }
        if args.out:
            io.write_json(args.out, payload)
        else:
            print(json.dumps(payload, indent=2))
    elif args.out:
        io.write_estimates_csv(args.out, rows)
    else:
        _print_report(rows, counts, nbr.k, design)
    if args.counts_out:
        io.write_counts_csv(args.counts_out, counts, nbr.k)
    return EXIT_OK


def _print_report(rows, counts, k, design) -> None:
    print(f"{design.describe()}, K={k}")
    print(f"{'estimator':<10}{'estimate':>10}{'se':>10}{'ci_lower':>10}{'ci_upper':>10}")
    for r in rows:
        print(
            f"{r['estimator']:<10}{r['estimate']:>10.4f}{r['se']:>10.4f}"
            f"{r['ci_lower']:>10.4f}{r['ci_upper']:>10.4f}"
        )
    print()
    print("units per exposure")
    print(f"{'direct':<10}" + "".join(f"{p:>10}" for p in neighbor_patterns(k)))
    for row in io.count_rows(counts, k):
        print(f"{row[0]:<10}" + "".join(f"{v:>10}" for v in row[1:]))


SIMULATE_DEFAULTS = dict(
    model=None, design="crd", n=256, reps=1000, seed=0, out=None, format="csv",
    redraw_population=False, workers=None,
)


def cmd_simulate(args: argparse.Namespace) -> int:
    args = _load_config(args, SIMULATE_DEFAULTS)
    if args.model is None:
        raise CliError("simulate needs --model (1..9)", EXIT_INPUT)
    workers = args.workers if args.workers is not None else _default_workers()
    try:
        summary = run_simulation(
            int(args.model), args.design, int(args.n), int(args.reps), int(args.seed),
            redraw_population=bool(args.redraw_population), workers=int(workers),
        )
    except ValueError as exc:
        raise CliError(str(exc), EXIT_DESIGN) from None
    if args.format == "json":
        text = json.dumps(summary.to_dict(), indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
    elif args.out:
        io.write_sim_csv(args.out, summary)
    else:
        print(f"model {summary.model_id}, {summary.design}, N={summary.n}, reps={summary.reps}")
        print(f"{'estimator':<10}{'truth':>8}{'emp_ev':>10}{'emp_var':>10}{'var_est':>10}")
        for r in summary.rows:
            print(f"{r.label:<10}{r.truth:>8.2f}{r.emp_ev:>10.4f}{r.emp_var:>10.4f}{r.mean_var_est:>10.4f}")
    return EXIT_OK


PROBABILITIES_DEFAULTS = dict(
    distances=None, units=None, k=None, design="crd", n_treated=None, p=None,
    unit=None, pair=None, format="csv", out=None,
)


def cmd_probabilities(args: argparse.Namespace) -> int:
    args = _load_config(args, PROBABILITIES_DEFAULTS)
    if not args.distances or args.k is None:
        raise CliError("probabilities needs --distances and --k", EXIT_INPUT)
    if args.units:
        units = io.read_units(args.units)
        ids, n_treated = units.ids, int(units.w.sum())
    else:
        ids, n_treated = io.read_distance_ids(args.distances), None
    dist = io.read_distances(args.distances, ids)
    k = int(args.k)
    if not 1 <= k <= dist.n - 1:
        raise CliError(f"K={k} too large for N={dist.n}", EXIT_K)
    nbr = build_k_neighborhoods(dist, k)
    design = _design(args, dist.n, n_treated)
    tables = JointTables(design, nbr)
    index = {u: i for i, u in enumerate(ids)}

    def lookup(uid: str) -> int:
        if uid not in index:
            raise CliError(f"unknown unit id {uid!r}", EXIT_INPUT)
        return index[uid]

    exposures = all_exposures(k)
    records: list[dict] = []
    targets = [lookup(args.unit)] if args.unit else range(dist.n)
    for i in targets:
        for e in exposures:
            records.append({"unit": ids[i], "exposure": e.label(), "probability": tables.marginal(e)})
    joints: list[dict] = []
    if args.pair:
        i, j = (lookup(u) for u in args.pair)
        if i == j:
            raise CliError("--pair needs two distinct units", EXIT_INPUT)
        for e1 in exposures:
            for e2 in exposures:
                joints.append({
                    "unit_i": ids[i], "exposure_i": e1.label(),
                    "unit_j": ids[j], "exposure_j": e2.label(),
                    "probability": joint_probability(design, nbr, i, e1, j, e2),
                })
    if args.format == "json":
        text = json.dumps({"design": design.describe(), "k": k, "marginals": records, "joints": joints}, indent=2)
        if args.out:
            Path(args.out).write_text(text + "\n")
        else:
            print(text)
        return EXIT_OK
    lines = ["unit,exposure,probability"]
    lines += [f"{r['unit']},{r['exposure']},{r['probability']!r}" for r in records]
    if joints:
        lines += ["", "unit_i,exposure_i,unit_j,exposure_j,probability"]
        lines += [
            f"{r['unit_i']},{r['exposure_i']},{r['unit_j']},{r['exposure_j']},{r['probability']!r}"
            for r in joints
        ]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    sizes = tuple(args.sizes)
    try:
        for n in sizes + (args.table_n,):
            for d in (Design.crd(n, n // 2), Design.bernoulli(n, 0.5)):
                oracle._guard(d)
        battery = oracle.run_battery(
            args.seed,
            n_prob_instances=args.instances,
            prob_sizes=sizes,
            n_tables=args.tables,
            table_n=args.table_n,
        )
    except oracle.EnumerationTooLarge as exc:
        raise CliError(f"instance too large for enumeration: {exc}", EXIT_INPUT) from None
    lines = [f"oracle battery, seed {battery.seed}"]
    for c in battery.checks:
        rel = ">=" if "conservativeness" in c.name else "<="
        bound = -c.tolerance if rel == ">=" else c.tolerance
        lines.append(
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.worst:.3e} {rel} {bound:.0e}"
        )
    lines.append("all checks passed" if battery.passed else "ORACLE FAILURE")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if battery.passed else EXIT_ORACLE


def _add_design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", choices=["crd", "bernoulli"], default=None)
    p.add_argument("--n-treated", type=int, default=None,
                   help="CRD treated count (default: treated units in the units file)")
    p.add_argument("--p", type=float, default=None, help="Bernoulli treatment probability")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knnim",
        description="Design-based effect estimation under K-nearest-neighbor interference.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="estimate effects from an experiment's data files")
    p.add_argument("--config", help="JSON file with default values for these flags")
    p.add_argument("--units", help="CSV with header id,treatment,response")
    p.add_argument("--distances", help="CSV with header src,dst,distance or src,dst,rank")
    p.add_argument("--k", type=int, default=None, help="neighborhood size K")
    _add_design_flags(p)
    p.add_argument("--assumptions", choices=["a1", "a2", "both"], default=None)
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--z", type=float, default=None, help="critical value for intervals")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--out", help="write the estimate report here")
    p.add_argument("--counts-out", help="write the exposure-count grid (CSV) here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run the simulation study for one model and design")
    p.add_argument("--config")
    p.add_argument("--model", type=int, default=None, help="interference model 1..9")
    p.add_argument("--design", choices=["crd", "bernoulli"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--redraw-population", action="store_const", const=True, default=None)
    p.add_argument("--workers", type=int, default=None, help="threads (default $KNNIM_THREADS or 1)")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probabilities", help="dump closed-form exposure probabilities")
    p.add_argument("--config")
    p.add_argument("--distances")
    p.add_argument("--units", help="optional units file fixing unit order and n_treated")
    p.add_argument("--k", type=int, default=None)
    _add_design_flags(p)
    p.add_argument("--unit", help="only this unit id (default: all units)")
    p.add_argument("--pair", nargs=2, metavar=("I", "J"), help="also dump joints for this pair")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_probabilities)

    p = sub.add_parser("oracle", help="verify closed forms against exhaustive enumeration")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50, help="random probability instances")
    p.add_argument("--sizes", type=int, nargs="+", default=[6, 8, 10, 12])
    p.add_argument("--tables", type=int, default=20, help="random potential-outcome tables")
    p.add_argument("--table-n", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except io.InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
