from __future__ import annotations

import numpy as np
import pytest

from covadapt.core import Method, MethodConfig, RngStream, permuted_block_init
from covadapt.errors import (
    EmptyDatasetError,
    InvalidConfigError,
    NonNumericCellError,
    ParseError,
)
from covadapt.methods import allocation_digest, run_trial
from covadapt.simulate import (
    SimulationPlan,
    bundled_dataset,
    execute_plan,
    load_dataset,
    radar_summary,
    simulate,
    summarize,
)
from oracles import type7_quantile


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def small_dataset(tmp_path, n=12, p=2, seed=0):
    rng = np.random.default_rng(seed)
    lines = [",".join(f"x{j}" for j in range(p))]
    for row in rng.normal(size=(n, p)):
        lines.append(",".join(f"{v:.6f}" for v in row))
    return write_csv(tmp_path, "\n".join(lines) + "\n")


def configs(target_n, methods=("ps", "nt", "mh", "bkw"), **kw):
    kw.setdefault("n0", 4)
    kw.setdefault("block_size", 2)
    return tuple(MethodConfig(method=m, target_n=target_n, **kw) for m in methods)


# ---------------------------------------------------------------------------
# load_dataset
# ---------------------------------------------------------------------------


def test_load_bundled_trial_shapes():
    pembro = load_dataset(bundled_dataset("pembro_like"))
    assert (pembro.n_rows, pembro.n_cols) == (18, 3)
    assert pembro.names == ("age", "pdl1_score", "hemoglobin")
    assert pembro.ids[0] == "P01"
    infant = load_dataset(bundled_dataset("infant_spasms_like"))
    assert (infant.n_rows, infant.n_cols) == (22, 2)


def test_load_preserves_headers_verbatim(tmp_path):
    path = write_csv(tmp_path, "age at entry, PD L1\n1,2\n3,4\n")
    data = load_dataset(path)
    assert data.names == ("age at entry", " PD L1")
    assert data.ids is None
    assert data.row_ids() == ("1", "2")


def test_load_empty_body(tmp_path):
    with pytest.raises(EmptyDatasetError):
        load_dataset(write_csv(tmp_path, "a,b\n"))


def test_load_non_numeric_cell(tmp_path):
    with pytest.raises(NonNumericCellError) as err:
        load_dataset(write_csv(tmp_path, "id,a,b\nr1,1,x\n"))
    assert err.value.line == 2 and err.value.column == 3


def test_load_ragged_row(tmp_path):
    with pytest.raises(ParseError) as err:
        load_dataset(write_csv(tmp_path, "a,b\n1,2,3\n"))
    assert err.value.line == 2


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_single_replicate_yields_one_record_per_method(tmp_path):
    plan = SimulationPlan(dataset=small_dataset(tmp_path), methods=configs(12), replicates=1, seed=3)
    records = simulate(plan)
    assert len(records) == 4
    assert [r.method for r in records] == ["ps", "nt", "mh", "bkw"]
    assert all(r.error is None for r in records)


def test_simulate_is_deterministic_and_file_identical(tmp_path):
    data = small_dataset(tmp_path)
    outs = []
    for run in ("a", "b"):
        plan = SimulationPlan(
            dataset=data,
            methods=configs(12),
            replicates=5,
            seed=11,
            records_path=tmp_path / run / "records.csv",
            summary_path=tmp_path / run / "summary.json",
        )
        execute_plan(plan)
        outs.append(
            (
                (tmp_path / run / "records.csv").read_bytes(),
                (tmp_path / run / "summary.json").read_bytes(),
            )
        )
    assert outs[0] == outs[1]


def test_simulate_jobs_do_not_change_output(tmp_path):
    data = small_dataset(tmp_path)

    def run(jobs):
        plan = SimulationPlan(dataset=data, methods=configs(12, methods=("ps", "bkw")), replicates=6, seed=2)
        return simulate(plan, jobs=jobs)

    assert run(1) == run(2)


def test_bkw_always_balances_groups(tmp_path):
    plan = SimulationPlan(
        dataset=small_dataset(tmp_path), methods=configs(12, methods=("bkw",)), replicates=50, seed=7
    )
    records = simulate(plan)
    assert all(r.report.abs_group_size_diff == 0 for r in records)


def test_replicates_share_arrival_and_blocks_across_methods(tmp_path):
    data = small_dataset(tmp_path)
    plan = SimulationPlan(dataset=data, methods=configs(12, methods=("nt", "mh")), replicates=3, seed=19)
    records = simulate(plan)
    dataset = load_dataset(data)
    # reconstruct each cell independently from the documented stream layout
    for rec in records:
        stream = RngStream(19, rec.replicate)
        order = stream.child(0).generator().permutation(12)
        config = next(c for c in plan.methods if c.method.value == rec.method)
        key = 10 + list(Method).index(config.method)
        result = run_trial(dataset, order, config, stream.child(key), block_rng=stream.child(1))
        assert allocation_digest(result.records) == rec.digest
    # and the block draw really is the same for both methods in a replicate
    blocks = permuted_block_init(4, 2, RngStream(19, 0).child(1))
    assert blocks.shape == (4,)


def test_method_records_independent_of_plan_composition(tmp_path):
    data = small_dataset(tmp_path)
    both = simulate(SimulationPlan(dataset=data, methods=configs(12, methods=("ps", "nt")), replicates=4, seed=5))
    alone = simulate(SimulationPlan(dataset=data, methods=configs(12, methods=("nt",)), replicates=4, seed=5))
    assert [r.digest for r in both if r.method == "nt"] == [r.digest for r in alone]


def test_failed_replicates_are_recorded_not_fatal(tmp_path):
    # constant column: retrospective standardization is impossible
    path = write_csv(tmp_path, "a,b\n" + "\n".join(f"{i},5" for i in range(8)) + "\n")
    plan = SimulationPlan(dataset=path, methods=configs(8, methods=("nt",)), replicates=3, seed=1)
    records = simulate(plan)
    assert all(r.error is not None for r in records)
    table = summarize(records)
    assert table.failed["nt"] == 3
    assert table.stats == {}


def test_simulate_rejects_target_mismatch(tmp_path):
    plan = SimulationPlan(dataset=small_dataset(tmp_path, n=12), methods=configs(10), replicates=1)
    with pytest.raises(InvalidConfigError):
        simulate(plan)


def test_plan_validation():
    with pytest.raises(InvalidConfigError):
        SimulationPlan(dataset="x.csv", methods=(), replicates=1)
    with pytest.raises(InvalidConfigError):
        SimulationPlan(dataset="x.csv", methods=configs(12, methods=("ps", "ps")), replicates=1)
    with pytest.raises(InvalidConfigError):
        SimulationPlan(dataset="x.csv", methods=configs(12, methods=("ps",)), replicates=0)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


def test_summarize_quantile_convention(tmp_path):
    plan = SimulationPlan(
        dataset=small_dataset(tmp_path), methods=configs(12, methods=("ps",)), replicates=40, seed=23
    )
    table = summarize(simulate(plan))
    values = []
    for rec in simulate(plan):
        values.append(float(rec.report.abs_group_size_diff))
    stats = table.stats["ps"]["size_diff"]
    assert stats["q1"] == pytest.approx(type7_quantile(values, 0.25))
    assert stats["median"] == pytest.approx(type7_quantile(values, 0.5))
    assert stats["q3"] == pytest.approx(type7_quantile(values, 0.75))
    assert stats["q1"] <= stats["median"] <= stats["q3"]


def test_summarize_degenerate_and_ladder():
    # all-identical values collapse the five-number summary
    from covadapt.metrics import MetricReport
    from covadapt.simulate import ReplicateRecord

    def fake(rep, size):
        report = MetricReport(
            covariates=("x",),
            group_sizes=(4, 4),
            abs_group_size_diff=size,
            abs_mean_diff=(0.0,),
            abs_sd_diff=(0.0,),
            energy=0.1,
            energy_p_value=None,
            cg_series=(0.5,),
            mean_cg=0.5,
        )
        return ReplicateRecord(method="ps", replicate=rep, report=report, digest="d")

    table = summarize([fake(i, 2) for i in range(5)])
    s = table.stats["ps"]["size_diff"]
    assert s["min"] == s["q1"] == s["median"] == s["q3"] == s["max"] == 2.0

    table = summarize([fake(i, i + 1) for i in range(5)])  # values 1..5
    s = table.stats["ps"]["size_diff"]
    assert (s["q1"], s["median"], s["q3"]) == (2.0, 3.0, 4.0)


def test_radar_single_replicate_matches_report(tmp_path):
    plan = SimulationPlan(
        dataset=small_dataset(tmp_path), methods=configs(12, methods=("nt",)), replicates=1, seed=9
    )
    records = simulate(plan)
    radar = radar_summary(records)
    report = records[0].report
    assert radar.averages["nt"] == [
        pytest.approx(report.abs_group_size_diff),
        pytest.approx(report.energy),
        pytest.approx(report.mean_cg),
    ]


def test_radar_normalization_properties(tmp_path):
    plan = SimulationPlan(dataset=small_dataset(tmp_path), methods=configs(12), replicates=20, seed=13)
    radar = radar_summary(simulate(plan))
    for i, corner in enumerate(radar.corner_max):
        column = [radar.normalized[m][i] for m in radar.normalized]
        assert all(0.0 <= v <= 1.0 + 1e-12 for v in column)
        if corner > 0:
            assert max(column) == pytest.approx(1.0)


def test_nt_balance_improves_with_deterministic_coin(tmp_path):
    data = small_dataset(tmp_path)

    def median_size_diff(p0):
        cfg = MethodConfig(method="nt", target_n=12, n0=4, block_size=2, p0=p0)
        plan = SimulationPlan(dataset=data, methods=(cfg,), replicates=500, seed=29)
        return summarize(simulate(plan)).stats["nt"]["size_diff"]["median"]

    assert median_size_diff(1.0) <= median_size_diff(0.5)
