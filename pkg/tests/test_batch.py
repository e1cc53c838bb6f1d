import math

import pytest

from ratmesh.batch import (
    BatchResult,
    PER_RUN_COLUMNS,
    analytic_bounds,
    emit_outputs,
    expected_edges_standard,
    run_batch,
    run_single,
    write_per_run_csv,
    write_pmf_csv,
)
from ratmesh.config import ExperimentConfig

# A deployment small enough for fast batches but non-trivial dynamics.
FAST = dict(intensity=8.0, r_a=400.0)


class TestAnalyticBounds:
    def test_reference_values(self):
        upper, lower = analytic_bounds(50.0)
        assert upper == 1300.0
        assert lower == 49.0

    def test_standard_edge_count_variant(self):
        assert expected_edges_standard(50.0) == 1250.0

    def test_small_intensity(self):
        upper, lower = analytic_bounds(2.0)
        # E[N(N+1)]/2 with E[N^2] = 6: (6 + 2) / 2
        assert upper == 4.0
        assert lower == 1.0

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            analytic_bounds(0.0)
        with pytest.raises(ValueError):
            expected_edges_standard(-1.0)


class TestRunSingle:
    def test_deterministic_per_index(self):
        cfg = ExperimentConfig(runs=1, seed=5, **FAST)
        assert run_single(cfg, 2).metrics == run_single(cfg, 2).metrics

    def test_distinct_indices_differ(self):
        cfg = ExperimentConfig(runs=1, seed=5, **FAST)
        assert run_single(cfg, 0).seed != run_single(cfg, 1).seed

    def test_abort_surfaces_diagnostic(self):
        cfg = ExperimentConfig(runs=1, seed=5, event_cap=3, **FAST)
        rec = run_single(cfg, 0)
        assert not rec.converged
        assert "event cap" in rec.diagnostic


class TestRunBatch:
    def test_fixed_count(self):
        cfg = ExperimentConfig(runs=25, seed=3, **FAST)
        result = run_batch(cfg)
        assert result.stats.runs_executed == 25
        assert result.stats.runs_aborted == 0
        assert result.stats.stop_reason == "fixed run count"
        assert len(result.records) == 25

    def test_single_run_reports_infinite_ci(self):
        cfg = ExperimentConfig(runs=1, seed=3, **FAST)
        result = run_batch(cfg)
        st = result.stats.metrics["n_masters"]
        assert st.n == 1
        assert math.isinf(st.ci_half_width)
        assert st.margin_basis == "insufficient"

    def test_auto_stop_is_deterministic_and_bounded(self):
        cfg = ExperimentConfig(runs="auto", seed=3, min_runs=30, max_runs=4000,
                               target_rel_margin=0.25, **FAST)
        a = run_batch(cfg)
        b = run_batch(cfg)
        assert a.stats.runs_executed == b.stats.runs_executed
        assert 30 <= a.stats.runs_executed <= 4000
        rows_a = [r.metrics for r in a.records]
        rows_b = [r.metrics for r in b.records]
        assert rows_a == rows_b

    def test_parallel_matches_serial(self):
        serial = ExperimentConfig(runs=20, seed=8, workers=1, **FAST)
        parallel = ExperimentConfig(runs=20, seed=8, workers=2, **FAST)
        res_s = run_batch(serial)
        res_p = run_batch(parallel)
        assert [r.metrics for r in res_s.records] == \
               [r.metrics for r in res_p.records]

    def test_parallel_auto_stop_matches_serial(self):
        base = dict(runs="auto", seed=8, min_runs=20, max_runs=2000,
                    target_rel_margin=0.3, **FAST)
        res_s = run_batch(ExperimentConfig(workers=1, **base))
        res_p = run_batch(ExperimentConfig(workers=2, **base))
        assert res_s.stats.runs_executed == res_p.stats.runs_executed
        assert [r.seed for r in res_s.records] == [r.seed for r in res_p.records]

    def test_aborted_runs_counted_separately(self):
        cfg = ExperimentConfig(runs=5, seed=3, event_cap=3, **FAST)
        result = run_batch(cfg)
        assert result.stats.runs_executed == 5
        assert result.stats.runs_aborted == 5
        assert result.stats.runs_converged == 0
        assert len(result.aborted) == 5

    def test_pmfs_normalize(self):
        cfg = ExperimentConfig(runs=40, seed=13, **FAST)
        stats = run_batch(cfg).stats
        assert sum(stats.pmf_n_masters.values()) == pytest.approx(1.0, abs=1e-12)
        assert sum(stats.pmf_n_chs.values()) == pytest.approx(1.0, abs=1e-12)
        assert list(stats.pmf_n_masters) == sorted(stats.pmf_n_masters)

    def test_probability_metric_gets_absolute_fallback(self):
        # A probability metric whose relative margin is unattainable still
        # qualifies once its absolute half-width is small enough.
        cfg = ExperimentConfig(runs=400, seed=13, intensity=4.0, r_a=200.0,
                               abs_margin_fallback=0.05)
        stats = run_batch(cfg).stats
        st = stats.metrics["unique_master"]
        assert 0.0 < st.mean < 1.0
        assert st.margin_basis == "absolute"
        # Non-probability metrics never use the fallback.
        assert stats.metrics["poke_r1"].margin_basis in ("relative", "unmet")


class TestEmission:
    def make_result(self, runs=12):
        cfg = ExperimentConfig(runs=runs, seed=21, **FAST)
        return run_batch(cfg)

    def test_per_run_schema_and_trailing_newline(self, tmp_path):
        result = self.make_result()
        path = tmp_path / "per_run.csv"
        write_per_run_csv(result, path)
        text = path.read_text()
        lines = text.splitlines()
        assert lines[0] == ",".join(PER_RUN_COLUMNS)
        assert len(lines) == 1 + result.stats.runs_converged
        assert text.endswith("\n")
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[-1] in ("0", "1")

    def test_emit_outputs_writes_all_files(self, tmp_path):
        result = self.make_result()
        paths = emit_outputs(result, tmp_path / "out")
        names = sorted(p.split("/")[-1] for p in paths)
        assert names == ["aggregate.csv", "per_run.csv",
                         "pmf_n_chs.csv", "pmf_n_masters.csv"]
        for p in paths:
            content = open(p).read()
            assert content.endswith("\n")

    def test_aggregate_includes_run_counts_and_basis(self, tmp_path):
        import os

        result = self.make_result()
        paths = emit_outputs(result, tmp_path / "out")
        agg_path = [p for p in paths if os.path.basename(p) == "aggregate.csv"][0]
        agg = open(agg_path).read()
        assert "runs_executed" in agg
        assert "runs_aborted" in agg
        assert "unique_master" in agg
        assert "margin_basis" not in agg.splitlines()[1]  # header only

    def test_empty_pmf_refused(self, tmp_path):
        with pytest.raises(ValueError):
            write_pmf_csv({}, tmp_path / "empty.csv")

    def test_pmf_rows_sorted(self, tmp_path):
        path = tmp_path / "pmf.csv"
        write_pmf_csv({3: 0.25, 1: 0.5, 2: 0.25}, path)
        lines = path.read_text().splitlines()
        assert lines == ["n,probability", "1,0.5", "2,0.25", "3,0.25"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg = ExperimentConfig(runs=15, seed=31, **FAST)
        out_a = emit_outputs(run_batch(cfg), tmp_path / "a")
        out_b = emit_outputs(run_batch(cfg), tmp_path / "b")
        for pa, pb in zip(out_a, out_b):
            assert open(pa, "rb").read() == open(pb, "rb").read()
