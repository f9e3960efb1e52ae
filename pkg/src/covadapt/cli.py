"""Command-line entry point: simulate, allocate, metrics, serve.

Exit codes: 0 success, 1 domain error (bad data, invalid configuration),
2 usage error (unknown or malformed flags).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import MethodConfig, RngStream, standardize
from .errors import CovadaptError
from .methods import run_trial
from .metrics import build_report
from .simulate import SimulationPlan, execute_plan, load_dataset, radar_summary

PARAM_KEYS = ("p0", "c", "categories", "rho", "gamma", "n0", "block_size")


def parse_params(pairs: list[str], parser: argparse.ArgumentParser) -> dict:
    """--param key=value flags into MethodConfig keyword overrides.

    Defaults when absent: p0=0.8, c=3, rho=6, gamma=0.5:4, n0=8,
    block_size=n0/2.
    """
    out: dict = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        key = key.strip().lower()
        if not sep or key not in PARAM_KEYS:
            parser.error(f"--param expects key=value with key in {', '.join(PARAM_KEYS)}; got {pair!r}")
        try:
            if key == "gamma":
                lo, _, hi = value.partition(":")
                out["gamma_range"] = (float(lo), float(hi if hi else lo))
            elif key in ("c", "categories"):
                out["categories"] = int(value)
            elif key in ("n0", "block_size"):
                out[key] = int(value)
            else:
                out[key] = float(value)
        except ValueError:
            parser.error(f"--param {key} has a malformed value {value!r}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covadapt",
        description="Covariate-adaptive randomization for small two-arm trials.",
    )
    parser.add_argument("--version", action="version", version=f"covadapt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replicated method comparison on a dataset")
    sim.add_argument("--data", required=True, help="CSV dataset (header + numeric rows)")
    sim.add_argument("--methods", default="ps,nt,mh,bkw", help="comma-separated method list")
    sim.add_argument("--replicates", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output directory for records.csv and summary.json")
    sim.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sim.add_argument(
        "--fixed-order",
        action="store_true",
        help="keep the dataset row order every replicate instead of reshuffling arrivals",
    )
    sim.add_argument("--param", action="append", metavar="KEY=VALUE", help="method parameter override")
    sim.set_defaults(func=cmd_simulate)

    alloc = sub.add_parser("allocate", help="one-shot allocation of a full dataset")
    alloc.add_argument("--data", required=True)
    alloc.add_argument("--method", required=True, choices=["ps", "nt", "mh", "bkw"])
    alloc.add_argument("--seed", type=int, default=0)
    alloc.add_argument("--out", help="output CSV path (default: stdout)")
    alloc.add_argument("--shuffle", action="store_true", help="randomize the arrival order from the seed")
    alloc.add_argument("--param", action="append", metavar="KEY=VALUE")
    alloc.set_defaults(func=cmd_allocate)

    met = sub.add_parser("metrics", help="balance metrics of an existing allocation")
    met.add_argument("--data", required=True)
    met.add_argument("--allocation", required=True, help="CSV mapping subjects to groups")
    met.add_argument("--n0", type=int, default=8, help="initial-cohort size for the correct-guess series")
    met.add_argument("--permutations", type=int, help="permutation-test replicates for the energy p-value")
    met.add_argument("--seed", type=int, default=0)
    met.add_argument("--raw-scale", action="store_true", help="report on the raw scale instead of z-scale")
    met.set_defaults(func=cmd_metrics)

    srv = sub.add_parser("serve", help="run the live allocation HTTP service")
    srv.add_argument("--listen", default="127.0.0.1:8000", help="host:port")
    srv.add_argument("--data-dir", required=True)
    srv.add_argument("--seed", type=int, help="default seed for new trials (else random per trial)")
    srv.add_argument("--console", help="directory of built console assets to serve at /ui")
    srv.set_defaults(func=cmd_serve)

    return parser


def make_configs(methods: str, target_n: int, params: dict, parser) -> tuple[MethodConfig, ...]:
    tags = [m.strip().lower() for m in methods.split(",") if m.strip()]
    if not tags:
        parser.error("--methods must name at least one method")
    return tuple(MethodConfig(method=tag, target_n=target_n, **params) for tag in tags)


def cmd_simulate(args, parser) -> int:
    if args.replicates < 1:
        parser.error("--replicates must be >= 1")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    params = parse_params(args.param, parser)
    dataset = load_dataset(args.data)
    out = Path(args.out)
    plan = SimulationPlan(
        dataset=args.data,
        methods=make_configs(args.methods, dataset.n_rows, params, parser),
        replicates=args.replicates,
        seed=args.seed,
        shuffle_arrivals=not args.fixed_order,
        records_path=out / "records.csv",
        summary_path=out / "summary.json",
    )
    records, _ = execute_plan(plan, jobs=args.jobs)
    radar = radar_summary(records)
    failures = {m: n for m, n in radar_failures(records).items() if n}
    print(f"{'method':<8}{'avg |n1-n2|':>14}{'avg energy':>14}{'avg mean CG':>14}")
    for method, values in radar.averages.items():
        print(f"{method:<8}{values[0]:>14.4f}{values[1]:>14.4f}{values[2]:>14.4f}")
    if failures:
        print(f"failed replicates (excluded): {failures}", file=sys.stderr)
    print(f"wrote {plan.records_path} and {plan.summary_path}")
    return 0


def radar_failures(records) -> dict:
    counts: dict = {}
    for rec in records:
        counts.setdefault(rec.method, 0)
        if rec.error is not None:
            counts[rec.method] += 1
    return counts


def cmd_allocate(args, parser) -> int:
    params = parse_params(args.param, parser)
    dataset = load_dataset(args.data)
    config = MethodConfig(method=args.method, target_n=dataset.n_rows, **params)
    stream = RngStream(args.seed)
    if args.shuffle:
        order = stream.child(0).generator().permutation(dataset.n_rows)
    else:
        order = np.arange(dataset.n_rows)
    result = run_trial(dataset, order, config, stream)
    rows = [["subject_id", "step", "phase", "group", "discrepancy", "p_group1"]]
    for record in result.records:
        value = record.discrepancy_value
        rows.append(
            [
                record.subject_id,
                record.step,
                record.phase,
                record.group,
                "" if value is None else repr(value),
                repr(record.p_group1),
            ]
        )
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(rows)
        print(f"wrote {path}")
    else:
        writer = csv.writer(sys.stdout)
        writer.writerows(rows)
    return 0


ALLOC_ID_COLUMNS = ("subject_id", "id", "subject")


def read_allocation(path) -> list[tuple[str, int]]:
    """(subject_id, group) pairs in file order from an allocation CSV."""
    with Path(path).open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CovadaptError(f"{path} is empty")
        id_col = next((c for c in ALLOC_ID_COLUMNS if c in reader.fieldnames), None)
        if id_col is None or "group" not in reader.fieldnames:
            raise CovadaptError(
                f"{path} needs a subject id column ({', '.join(ALLOC_ID_COLUMNS)}) and a 'group' column"
            )
        pairs = []
        for row in reader:
            group = int(float(row["group"]))
            if group not in (1, 2):
                raise CovadaptError(f"group must be 1 or 2, got {row['group']!r}")
            pairs.append((row[id_col].strip(), group))
    return pairs


def cmd_metrics(args, parser) -> int:
    dataset = load_dataset(args.data)
    allocation = read_allocation(args.allocation)
    ids = dataset.row_ids()
    if sorted(ids) != sorted(sid for sid, _ in allocation):
        raise CovadaptError("allocation subjects do not match the dataset rows")
    if args.raw_scale:
        values = dataset.values
    else:
        scaled, _ = standardize(dataset)
        values = scaled.values
    by_id = {sid: values[i] for i, sid in enumerate(ids)}
    group1 = [by_id[sid] for sid, g in allocation if g == 1]
    group2 = [by_id[sid] for sid, g in allocation if g == 2]
    groups = [g for _, g in allocation]
    n0 = args.n0 if len(allocation) > args.n0 else None
    if not group1 or not group2:
        print("warning: one group is empty; energy distance omitted", file=sys.stderr)
    report = build_report(
        np.array(group1).reshape(len(group1), dataset.n_cols),
        np.array(group2).reshape(len(group2), dataset.n_cols),
        dataset.names,
        records=groups if n0 is not None else None,
        n0=n0,
        permutations=args.permutations,
        rng=RngStream(args.seed),
    )
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_serve(args, parser) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_text = args.listen.partition(":")
    try:
        port = int(port_text) if port_text else 8000
    except ValueError:
        parser.error(f"--listen port {port_text!r} is not a number")
    console = args.console
    if console is None and Path("frontend/dist").is_dir():
        console = "frontend/dist"
    app = create_app(args.data_dir, default_seed=args.seed, console_dir=console)
    uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="info")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except CovadaptError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
