"""Replicated Monte-Carlo comparison of allocation methods on one dataset.

Each replicate draws one arrival order and one initial-block randomization,
shared by every method so the comparison is paired; only the coin and
uncertainty draws differ per method. Replicates are keyed by
``RngStream(seed, replicate)`` and therefore independent, reproducible, and
safe to run in parallel: output is ordered by (method, replicate) no matter
how many workers computed it.

Outputs: a long-format ``records.csv`` (method, replicate, metric, value)
and a ``summary.json`` with five-number summaries plus the radar averages
(group-size gap, energy distance, mean correct-guess probability).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CovariateMatrix, MethodConfig, RngStream
from .errors import (
    CovadaptError,
    EmptyDatasetError,
    InvalidConfigError,
    NonNumericCellError,
    ParseError,
)
from .methods import allocation_digest, run_trial
from .metrics import MetricReport, build_report

ID_HEADERS = {"id", "subject", "subject_id"}
RADAR_METRICS = ("size_diff", "energy", "mean_cg")


def bundled_dataset(name: str) -> Path:
    """Path of a dataset shipped with the package (``pembro_like`` or
    ``infant_spasms_like``)."""
    from importlib.resources import files

    path = Path(str(files("covadapt") / "data" / f"{name}.csv"))
    if not path.exists():
        raise EmptyDatasetError(f"no bundled dataset named {name!r}")
    return path


def load_dataset(path) -> CovariateMatrix:
    """Parse a CSV dataset: header row of covariate names, numeric body.

    A leading column named ``id``/``subject``/``subject_id`` (case
    insensitive) is treated as row identifiers. Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty")
        has_ids = bool(header) and header[0].strip().lower() in ID_HEADERS
        names = [h for h in (header[1:] if has_ids else header)]
        if not names:
            raise ParseError("header has no covariate columns", line=1)
        ids: list[str] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, found {len(row)}", line=line_no
                )
            body = row[1:] if has_ids else row
            if has_ids:
                ids.append(row[0].strip())
            parsed = []
            for col_no, cell in enumerate(body):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise NonNumericCellError(
                        f"cell {cell!r} is not numeric",
                        line=line_no,
                        column=col_no + 1 + has_ids,
                    )
            rows.append(parsed)
    if not rows:
        raise EmptyDatasetError(f"{path} has a header but no data rows")
    return CovariateMatrix(
        values=np.array(rows, dtype=float),
        names=tuple(names),
        ids=tuple(ids) if has_ids else None,
    )


@dataclass(frozen=True)
class SimulationPlan:
    """What to run: dataset, method configurations, replicate count, seed."""

    dataset: str | Path
    methods: tuple[MethodConfig, ...]
    replicates: int = 1000
    seed: int = 0
    shuffle_arrivals: bool = True
    records_path: str | Path | None = None
    summary_path: str | Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        problems = {}
        if self.replicates < 1:
            problems["replicates"] = f"must be >= 1, got {self.replicates}"
        if not self.methods:
            problems["methods"] = "need at least one method"
        tags = [cfg.method.value for cfg in self.methods]
        if len(set(tags)) != len(tags):
            problems["methods"] = "method tags must be distinct"
        if problems:
            raise InvalidConfigError(problems)


@dataclass(frozen=True)
class ReplicateRecord:
    """Outcome of one (method, replicate) cell: metrics or an error tag."""

    method: str
    replicate: int
    report: MetricReport | None
    digest: str | None
    error: str | None = None


def run_replicate(
    dataset: CovariateMatrix, plan: SimulationPlan, replicate: int
) -> list[ReplicateRecord]:
    """All methods on one replicate's shared arrival order and block draw."""
    stream = RngStream(plan.seed, replicate)
    n = dataset.n_rows
    if plan.shuffle_arrivals:
        order = stream.child(0).generator().permutation(n)
    else:
        order = np.arange(n)
    block_rng = stream.child(1)
    method_keys = {method: 10 + i for i, method in enumerate(type(plan.methods[0].method))}
    out = []
    for config in plan.methods:
        tag = config.method.value
        try:
            # the coin stream is keyed by method identity, not plan position,
            # so a method's records do not depend on what it runs alongside
            result = run_trial(
                dataset, order, config, stream.child(method_keys[config.method]), block_rng=block_rng
            )
            report = build_report(
                result.state.group_values(1),
                result.state.group_values(2),
                dataset.names,
                records=result.records,
                n0=config.n0,
            )
            out.append(
                ReplicateRecord(
                    method=tag,
                    replicate=replicate,
                    report=report,
                    digest=allocation_digest(result.records),
                )
            )
        except CovadaptError as err:
            out.append(
                ReplicateRecord(method=tag, replicate=replicate, report=None, digest=None, error=str(err))
            )
    return out


def _worker(args: tuple[CovariateMatrix, SimulationPlan, int]) -> list[ReplicateRecord]:
    dataset, plan, replicate = args
    return run_replicate(dataset, plan, replicate)


def simulate(plan: SimulationPlan, jobs: int = 1) -> list[ReplicateRecord]:
    """Run the whole plan; returns records ordered by (method, replicate)."""
    dataset = load_dataset(plan.dataset)
    for config in plan.methods:
        if config.target_n != dataset.n_rows:
            raise InvalidConfigError(
                {"target_n": f"{config.method.value} plans {config.target_n} subjects, dataset has {dataset.n_rows}"}
            )
    if jobs > 1 and plan.replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_worker, ((dataset, plan, r) for r in range(plan.replicates)), chunksize=16))
    else:
        chunks = [run_replicate(dataset, plan, r) for r in range(plan.replicates)]
    tag_order = {cfg.method.value: i for i, cfg in enumerate(plan.methods)}
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda rec: (tag_order[rec.method], rec.replicate))
    return records


def metric_values(report: MetricReport) -> list[tuple[str, float]]:
    """Flatten a report into (metric, value) pairs in a stable order."""
    pairs = [
        ("size_diff", float(report.abs_group_size_diff)),
        ("energy", report.energy if report.energy is not None else float("nan")),
        ("mean_cg", report.mean_cg if report.mean_cg is not None else float("nan")),
    ]
    for name, value in zip(report.covariates, report.abs_mean_diff):
        pairs.append((f"mean_diff:{name}", float(value)))
    for name, value in zip(report.covariates, report.abs_sd_diff):
        pairs.append((f"sd_diff:{name}", float(value)))
    return pairs


@dataclass(frozen=True)
class SummaryTable:
    """Five-number summary plus mean, per method and metric, with failure counts."""

    stats: dict  # method -> metric -> {min, q1, median, q3, max, mean}
    failed: dict  # method -> count of errored replicates

    def to_dict(self) -> dict:
        return {"stats": self.stats, "failed": self.failed}


def summarize(records: list[ReplicateRecord]) -> SummaryTable:
    """Type-7 quartile summary of every metric, excluding failed replicates."""
    if not records:
        raise InvalidConfigError({"records": "nothing to summarize"})
    by_method: dict[str, dict[str, list[float]]] = {}
    failed: dict[str, int] = {}
    for rec in records:
        failed.setdefault(rec.method, 0)
        if rec.error is not None or rec.report is None:
            failed[rec.method] += 1
            continue
        slot = by_method.setdefault(rec.method, {})
        for metric, value in metric_values(rec.report):
            slot.setdefault(metric, []).append(value)
    stats: dict[str, dict[str, dict[str, float]]] = {}
    for method, metrics in by_method.items():
        stats[method] = {}
        for metric, values in metrics.items():
            arr = np.array(values, dtype=float)
            q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75])
            stats[method][metric] = {
                "min": float(arr.min()),
                "q1": float(q1),
                "median": float(med),
                "q3": float(q3),
                "max": float(arr.max()),
                "mean": float(arr.mean()),
            }
    return SummaryTable(stats=stats, failed=failed)


@dataclass(frozen=True)
class RadarSummary:
    """Per-method averages of the three headline metrics, normalized so the
    largest average per corner sits at 1."""

    metrics: tuple[str, ...]
    averages: dict  # method -> [size_diff, energy, mean_cg]
    corner_max: list
    normalized: dict  # method -> values in [0, 1]

    def to_dict(self) -> dict:
        return {
            "metrics": list(self.metrics),
            "averages": self.averages,
            "corner_max": self.corner_max,
            "normalized": self.normalized,
        }


def radar_summary(records: list[ReplicateRecord]) -> RadarSummary:
    table = summarize(records)
    averages = {}
    for method, metrics in table.stats.items():
        averages[method] = [metrics[m]["mean"] if m in metrics else float("nan") for m in RADAR_METRICS]
    corner_max = [
        max((vals[i] for vals in averages.values()), default=float("nan")) for i in range(len(RADAR_METRICS))
    ]
    normalized = {
        method: [
            (vals[i] / corner_max[i]) if corner_max[i] and corner_max[i] > 0 else 0.0
            for i in range(len(RADAR_METRICS))
        ]
        for method, vals in averages.items()
    }
    return RadarSummary(
        metrics=RADAR_METRICS,
        averages=averages,
        corner_max=corner_max,
        normalized=normalized,
    )


def write_records_csv(records: list[ReplicateRecord], path) -> None:
    """Long-format dump: one row per (method, replicate, metric)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "replicate", "metric", "value"])
        for rec in records:
            if rec.error is not None:
                writer.writerow([rec.method, rec.replicate, "error", rec.error])
                continue
            for metric, value in metric_values(rec.report):
                writer.writerow([rec.method, rec.replicate, metric, repr(value)])
            writer.writerow([rec.method, rec.replicate, "digest", rec.digest])


def write_summary_json(records: list[ReplicateRecord], plan: SimulationPlan, path) -> dict:
    """Summary + radar payload; returns the object that was written."""
    payload = {
        "schema_version": 1,
        "dataset": str(plan.dataset),
        "replicates": plan.replicates,
        "seed": plan.seed,
        "shuffle_arrivals": plan.shuffle_arrivals,
        "summary": summarize(records).to_dict(),
        "radar": radar_summary(records).to_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return payload


def execute_plan(plan: SimulationPlan, jobs: int = 1) -> tuple[list[ReplicateRecord], dict]:
    """Simulate, write any configured outputs, and return records + summary."""
    records = simulate(plan, jobs=jobs)
    if plan.records_path is not None:
        write_records_csv(records, plan.records_path)
    summary_payload = None
    if plan.summary_path is not None:
        summary_payload = write_summary_json(records, plan, plan.summary_path)
    else:
        summary_payload = {
            "summary": summarize(records).to_dict(),
            "radar": radar_summary(records).to_dict(),
        }
    return records, summary_payload
