"""Monte-Carlo batch execution with confidence-interval stopping, aggregate
statistics, the closed-form handshake bounds, and CSV emission.

Replications are independent: run k draws its random stream from the master
seed and k alone, so results do not depend on how runs are distributed over
worker processes, and reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import csv
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import simengine, topology
from .config import ExperimentConfig
from .simengine import NonConvergenceError, RunMetrics

# Per-run metrics whose means the stopping rule tracks. unique_master is a
# probability and additionally qualifies under the absolute-margin fallback.
TRACKED_MEANS = [
    "n_masters", "n_chs",
    "hello_r1", "hello_r2", "poke_r1", "poke_r2", "tupdate_r1", "tupdate_r2",
    "convergence_time",
]
TRACKED_PROBS = ["unique_master", "hub_exists"]

PER_RUN_COLUMNS = [
    "run_id", "seed", "n_devices", "n_masters", "n_chs",
    "hello_r1", "hello_r2", "poke_r1", "poke_r2", "tupdate_r1", "tupdate_r2",
    "convergence_time_s", "unique_master",
]


def analytic_bounds(intensity: float) -> "tuple[float, float]":
    """Expected handshake bounds for long-range-only neighbor discovery with
    a Poisson device count.

    Upper bound: every pair discovered directly, using the N(N+1)/2 edge
    count the reference analysis states for a complete graph. Lower bound:
    the N-1 exchanges of a spanning tree.
    """
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    # E[N] = Var[N] = intensity, so E[N^2] = intensity + intensity^2.
    second_moment = intensity + intensity * intensity
    upper = (second_moment + intensity) / 2.0
    lower = intensity - 1.0
    return upper, lower


def expected_edges_standard(intensity: float) -> float:
    """Complete-graph variant with the standard N(N-1)/2 edge count."""
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    second_moment = intensity + intensity * intensity
    return (second_moment - intensity) / 2.0


@dataclass(frozen=True)
class RunRecord:
    run_id: int
    seed: int
    metrics: "RunMetrics | None"     # None when the run was aborted
    diagnostic: "str | None" = None

    @property
    def converged(self) -> bool:
        return self.metrics is not None


def _run_seed_sequence(master_seed: int, run_id: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(run_id,))


def run_single(config: ExperimentConfig, run_id: int) -> RunRecord:
    """Execute one replication with its derived random stream."""
    ss = _run_seed_sequence(config.seed, run_id)
    seed_label = int(ss.generate_state(1, dtype=np.uint64)[0])
    rng = np.random.Generator(np.random.PCG64(ss))
    deployment = topology.sample_deployment(rng, config.deployment_config())
    graphs = topology.realize_links(deployment, config.rats(),
                                    config.channel_params(), rng)
    try:
        metrics = simengine.run(
            deployment, graphs, config.timer_config(), rng,
            rule_config=config.rule_config(), event_cap=config.event_cap,
        )
    except NonConvergenceError as exc:
        return RunRecord(run_id, seed_label, None, str(exc))
    return RunRecord(run_id, seed_label, metrics)


@dataclass(frozen=True)
class MetricStats:
    name: str
    mean: float
    variance: float
    ci_half_width: float
    rel_margin: float
    margin_basis: str   # relative | absolute | zero-variance | insufficient | unmet
    n: int


@dataclass
class AggregateStats:
    metrics: "dict[str, MetricStats]" = field(default_factory=dict)
    pmf_n_masters: "dict[int, float]" = field(default_factory=dict)
    pmf_n_chs: "dict[int, float]" = field(default_factory=dict)
    runs_executed: int = 0
    runs_converged: int = 0
    runs_aborted: int = 0
    structure_failures: int = 0
    master_cert_failures: int = 0
    stop_reason: str = ""


@dataclass
class BatchResult:
    records: "list[RunRecord]"
    stats: AggregateStats

    @property
    def aborted(self) -> "list[RunRecord]":
        return [r for r in self.records if not r.converged]


class _Welford:
    """Streaming mean/variance so the stopping rule can be checked run by run."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x: float) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


def _z_value(confidence: float) -> float:
    return statistics.NormalDist().inv_cdf(0.5 + confidence / 2.0)


def _metric_value(metrics: RunMetrics, name: str) -> float:
    return float(getattr(metrics, name))


def _stats_for(name: str, acc: _Welford, z: float, config: ExperimentConfig,
               is_prob: bool) -> MetricStats:
    n = acc.n
    if n < 2:
        return MetricStats(name, acc.mean, 0.0, math.inf, math.inf,
                           "insufficient", n)
    var = acc.variance
    if var == 0.0:
        return MetricStats(name, acc.mean, 0.0, 0.0, 0.0, "zero-variance", n)
    half = z * math.sqrt(var / n)
    rel = half / abs(acc.mean) if acc.mean != 0.0 else math.inf
    if rel <= config.target_rel_margin:
        basis = "relative"
    elif is_prob and half <= config.abs_margin_fallback:
        basis = "absolute"
    else:
        basis = "unmet"
    return MetricStats(name, acc.mean, var, half, rel, basis, n)


def _margins_met(accs, z, config) -> bool:
    for name in TRACKED_MEANS + TRACKED_PROBS:
        st = _stats_for(name, accs[name], z, config,
                        is_prob=name in TRACKED_PROBS)
        if st.margin_basis in ("unmet", "insufficient"):
            return False
    return True


def run_batch(config: ExperimentConfig, *, progress=None) -> BatchResult:
    """Execute replications until the fixed run count, or under `runs = auto`
    until every tracked metric meets the margin target (at least min_runs,
    at most max_runs). Aborted runs are kept and reported, never dropped.

    The number of runs consumed is a deterministic function of (config,
    master seed): with several workers, surplus speculative runs beyond the
    stopping point are discarded.
    """
    config.validate()
    auto = config.runs == "auto"
    hard_cap = config.max_runs if auto else int(config.runs)
    z = _z_value(config.confidence)

    accs = {name: _Welford() for name in TRACKED_MEANS + TRACKED_PROBS}
    records: "list[RunRecord]" = []
    stop_reason = ""

    def consume(record: RunRecord) -> bool:
        """Append one record in run-id order; True when the batch may stop."""
        records.append(record)
        if record.converged:
            for name in TRACKED_MEANS:
                accs[name].add(_metric_value(record.metrics, name))
            for name in TRACKED_PROBS:
                accs[name].add(_metric_value(record.metrics, name))
        if progress is not None:
            progress(len(records))
        if not auto:
            return len(records) >= hard_cap
        if len(records) < config.min_runs:
            return False
        return _margins_met(accs, z, config)

    if config.workers <= 1:
        for run_id in range(hard_cap):
            if consume(run_single(config, run_id)):
                break
    else:
        wave = max(4 * config.workers, 16)
        next_id = 0
        stopped = False
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            while not stopped and next_id < hard_cap:
                ids = range(next_id, min(next_id + wave, hard_cap))
                next_id = ids.stop
                for record in pool.map(run_single, [config] * len(ids), ids):
                    if consume(record):
                        stopped = True
                        break

    if auto:
        if len(records) >= config.max_runs and not _margins_met(accs, z, config):
            stop_reason = "max_runs reached before margins were met"
        else:
            stop_reason = "margins met" if len(records) < config.max_runs \
                else "margins met at max_runs"
    else:
        stop_reason = "fixed run count"

    stats = _aggregate(records, accs, z, config)
    stats.stop_reason = stop_reason
    return BatchResult(records=records, stats=stats)


def _aggregate(records, accs, z, config) -> AggregateStats:
    stats = AggregateStats()
    converged = [r.metrics for r in records if r.converged]
    stats.runs_executed = len(records)
    stats.runs_converged = len(converged)
    stats.runs_aborted = len(records) - len(converged)
    stats.structure_failures = sum(1 for m in converged if not m.structure_ok)
    stats.master_cert_failures = sum(
        1 for m in converged if m.unique_master and not m.master_cert_ok
    )
    for name in TRACKED_MEANS:
        stats.metrics[name] = _stats_for(name, accs[name], z, config, False)
    for name in TRACKED_PROBS:
        stats.metrics[name] = _stats_for(name, accs[name], z, config, True)
    if converged:
        total = float(len(converged))
        for m in converged:
            stats.pmf_n_masters[m.n_masters] = \
                stats.pmf_n_masters.get(m.n_masters, 0.0) + 1.0
            stats.pmf_n_chs[m.n_chs] = stats.pmf_n_chs.get(m.n_chs, 0.0) + 1.0
        stats.pmf_n_masters = {k: v / total
                               for k, v in sorted(stats.pmf_n_masters.items())}
        stats.pmf_n_chs = {k: v / total
                           for k, v in sorted(stats.pmf_n_chs.items())}
    return stats


# -- CSV emission ------------------------------------------------------------


def per_run_rows(result: BatchResult):
    for r in result.records:
        if not r.converged:
            continue
        m = r.metrics
        yield [
            r.run_id, r.seed, m.n_devices, m.n_masters, m.n_chs,
            m.hello_r1, m.hello_r2, m.poke_r1, m.poke_r2,
            m.tupdate_r1, m.tupdate_r2,
            f"{m.convergence_time:.6g}", int(m.unique_master),
        ]


def write_per_run_csv(result: BatchResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PER_RUN_COLUMNS)
        writer.writerows(per_run_rows(result))


def write_aggregate_csv(result: BatchResult, path) -> None:
    stats = result.stats
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "mean", "variance", "ci_half_width",
                         "rel_margin", "margin_basis", "runs"])
        for name, st in stats.metrics.items():
            writer.writerow([
                name, f"{st.mean:.6g}", f"{st.variance:.6g}",
                f"{st.ci_half_width:.6g}", f"{st.rel_margin:.6g}",
                st.margin_basis, st.n,
            ])
        writer.writerow(["runs_executed", stats.runs_executed, "", "", "",
                         "count", stats.runs_executed])
        writer.writerow(["runs_aborted", stats.runs_aborted, "", "", "",
                         "count", stats.runs_executed])
        writer.writerow(["structure_failures", stats.structure_failures,
                         "", "", "", "count", stats.runs_converged])
        writer.writerow(["master_cert_failures", stats.master_cert_failures,
                         "", "", "", "count", stats.runs_converged])


def write_pmf_csv(pmf: "dict[int, float]", path) -> None:
    if not pmf:
        raise ValueError(f"refusing to emit an empty pmf to {path}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "probability"])
        for n, p in sorted(pmf.items()):
            writer.writerow([n, f"{p:.6g}"])


def emit_outputs(result: BatchResult, out_dir) -> "list[str]":
    """Write per-run, aggregate and pmf CSVs into out_dir; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    targets = [
        ("per_run.csv", lambda p: write_per_run_csv(result, p)),
        ("aggregate.csv", lambda p: write_aggregate_csv(result, p)),
    ]
    if result.stats.pmf_n_masters:
        targets.append(("pmf_n_masters.csv",
                        lambda p: write_pmf_csv(result.stats.pmf_n_masters, p)))
    if result.stats.pmf_n_chs:
        targets.append(("pmf_n_chs.csv",
                        lambda p: write_pmf_csv(result.stats.pmf_n_chs, p)))
    for name, writer in targets:
        path = os.path.join(out_dir, name)
        try:
            writer(path)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        written.append(path)
    return written
