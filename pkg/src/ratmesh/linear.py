"""Exact reliability/latency analysis of the four-node linear network: brute
force over all edge subsets as the ground truth, the matching closed forms,
and the independence lower bound for combining two RATs.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import math
from dataclasses import dataclass

from .channel import ChannelParams, link_prob

MAX_EDGES = 24  # 2^|E| subsets are enumerated; keep that tractable

# Latencies are sums of edge weights; keys are rounded so that equal path
# weights reached via different float additions coincide.
_KEY_DECIMALS = 9


@dataclass(frozen=True)
class LinearScenario:
    """Geometry knobs of the linear study: long-range time-cost multiplier
    and spacing between adjacent nodes."""

    rho: float
    d_min: float

    def __post_init__(self):
        if self.rho < 1:
            raise ValueError("rho must be >= 1")
        if self.d_min <= 0:
            raise ValueError("d_min must be positive")


@dataclass(frozen=True)
class Edge:
    a: int
    b: int
    prob: float
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"edge probability must be in [0, 1], got {self.prob}")
        if self.weight < 1.0:
            raise ValueError(f"edge weight must be >= 1, got {self.weight}")


@dataclass(frozen=True)
class ProbWeightedGraph:
    """Small undirected graph with independent edge existence draws.

    Each edge exists with its own probability; an existing edge is usable in
    both directions and costs its weight in time units.
    """

    vertices: tuple
    edges: tuple
    source: int
    destination: int

    def __post_init__(self):
        if len(self.edges) > MAX_EDGES:
            raise ValueError(f"at most {MAX_EDGES} edges supported, got {len(self.edges)}")
        ids = set(self.vertices)
        if self.source not in ids or self.destination not in ids:
            raise ValueError("source and destination must be vertices")
        for e in self.edges:
            if e.a not in ids or e.b not in ids:
                raise ValueError(f"edge {e} references unknown vertex")


@dataclass(frozen=True)
class LatencyDistribution:
    """pmf of the source-to-destination latency plus the no-path mass."""

    support: tuple  # of (latency, probability), ascending in latency
    failure_prob: float

    def total(self) -> float:
        return self.failure_prob + sum(p for _s, p in self.support)

    def success_prob(self) -> float:
        return sum(p for _s, p in self.support)

    def mass_at(self, latency: float) -> float:
        key = round(latency, _KEY_DECIMALS)
        for s, p in self.support:
            if round(s, _KEY_DECIMALS) == key:
                return p
        return 0.0

    def cdf(self, latency: float) -> float:
        return sum(p for s, p in self.support if s <= latency + 1e-12)

    def mean_given_success(self) -> float:
        """Expected latency conditional on a path existing (nan if none can)."""
        ok = self.success_prob()
        if ok <= 0.0:
            return math.nan
        return sum(s * p for s, p in self.support) / ok


def _shortest(n_vertices, adjacency, source, destination):
    dist = {source: 0.0}
    pq = [(0.0, source)]
    while pq:
        d, u = heapq.heappop(pq)
        if d > dist.get(u, math.inf):
            continue
        if u == destination:
            return d
        for v, w in adjacency[u]:
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(pq, (nd, v))
    return None


def enumerate_latency(graph: ProbWeightedGraph) -> LatencyDistribution:
    """Exact latency pmf by enumerating all 2^|E| edge subsets.

    For each subset the subset probability is accumulated onto the weight of
    the shortest source-destination path (or onto the failure mass).
    """
    edges = graph.edges
    masses: dict = {}
    failure = 0.0
    for included in itertools.product((False, True), repeat=len(edges)):
        prob = 1.0
        adjacency = {v: [] for v in graph.vertices}
        for inc, e in zip(included, edges):
            if inc:
                prob *= e.prob
                adjacency[e.a].append((e.b, e.weight))
                adjacency[e.b].append((e.a, e.weight))
            else:
                prob *= 1.0 - e.prob
        if prob == 0.0:
            continue
        latency = _shortest(len(graph.vertices), adjacency, graph.source,
                            graph.destination)
        if latency is None:
            failure += prob
        else:
            key = round(latency, _KEY_DECIMALS)
            masses[key] = masses.get(key, 0.0) + prob
    support = tuple(sorted(masses.items()))
    return LatencyDistribution(support=support, failure_prob=failure)


def reliability(graph: ProbWeightedGraph) -> float:
    """Probability that at least one source-destination path exists."""
    return 1.0 - enumerate_latency(graph).failure_prob


def closed_form_short_chain(p12: float, p23: float, p34: float) -> float:
    """Success probability of the three-hop relay chain (its only path)."""
    return p12 * p23 * p34


def closed_form_two_hop(p: "dict[tuple[int, int], float]") -> float:
    """Probability that the best long-range path is exactly two hops.

    ``p`` maps the six unordered node pairs of the four-node network to their
    link probabilities.
    """
    p12, p13, p14 = p[(1, 2)], p[(1, 3)], p[(1, 4)]
    p24, p34 = p[(2, 4)], p[(3, 4)]
    return (p12 * p24 * (1.0 - p13 * p34) + p13 * p34) * (1.0 - p14)


def closed_form_three_hop(p: "dict[tuple[int, int], float]") -> float:
    """Probability that the best long-range path is exactly three hops."""
    p12, p13, p14 = p[(1, 2)], p[(1, 3)], p[(1, 4)]
    p23, p24, p34 = p[(2, 3)], p[(2, 4)], p[(3, 4)]
    return p23 * (1.0 - p14) * (
        p12 * p34 * (1.0 - p24) * (1.0 - p13)
        + p13 * p24 * (1.0 - p12) * (1.0 - p34)
    )


def multirat_lower_bound(f1: float, f2: float) -> float:
    """CDF lower bound when two RATs are used independently."""
    if not (0.0 <= f1 <= 1.0 and 0.0 <= f2 <= 1.0):
        raise ValueError("CDF values must be in [0, 1]")
    return 1.0 - (1.0 - f1) * (1.0 - f2)


PAIRS = ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))


def chain_graph(p12: float, p23: float, p34: float, weight: float = 1.0) -> ProbWeightedGraph:
    """The short-range topology: nodes can only reach adjacent neighbors."""
    return ProbWeightedGraph(
        vertices=(1, 2, 3, 4),
        edges=(Edge(1, 2, p12, weight), Edge(2, 3, p23, weight), Edge(3, 4, p34, weight)),
        source=1,
        destination=4,
    )


def long_range_graph(p: "dict[tuple[int, int], float]", rho: float) -> ProbWeightedGraph:
    """The long-range topology: every node pair may be linked, each hop
    costing rho time units."""
    return ProbWeightedGraph(
        vertices=(1, 2, 3, 4),
        edges=tuple(Edge(a, b, p[(a, b)], rho) for a, b in PAIRS),
        source=1,
        destination=4,
    )


@dataclass(frozen=True)
class SweepRow:
    d_min: float
    err_r1: float
    err_r2_norelay: float
    err_r2_relay: float
    err_multirat_lb: float
    lat_r1: float
    lat_r2_relay: float
    lat_multirat_lb: float
    fail_r1: float
    fail_r2_relay: float
    fail_multirat_lb: float


def _combined_bound_distribution(dist1: LatencyDistribution,
                                 dist2: LatencyDistribution) -> LatencyDistribution:
    """Latency distribution implied by the independence bound on the CDFs."""
    points = sorted({round(s, _KEY_DECIMALS) for s, _p in dist1.support}
                    | {round(s, _KEY_DECIMALS) for s, _p in dist2.support})
    support = []
    prev = 0.0
    for s in points:
        cdf = multirat_lower_bound(dist1.cdf(s), dist2.cdf(s))
        mass = cdf - prev
        if mass > 0.0:
            support.append((s, mass))
        prev = cdf
    return LatencyDistribution(support=tuple(support), failure_prob=1.0 - prev)


def figure4_sweep(
    d_min_grid,
    rho: float,
    rats,
    channel: ChannelParams,
) -> "list[SweepRow]":
    """Error probability and conditional expected latency of the linear
    network versus node spacing, for each RAT alone and for the combined
    lower bound.

    The short-range graph keeps only adjacent-pair links regardless of the
    spacing (the construction assumes multi-hop spacing exceeds the LoS
    distance), while the long-range graph links every pair.
    """
    if not d_min_grid:
        raise ValueError("d_min grid must not be empty")
    prev = 0.0
    for d in d_min_grid:
        if d <= prev:
            raise ValueError("d_min grid must be positive and ascending")
        prev = d
    if rho < 1:
        raise ValueError("rho must be >= 1")
    rat1 = next(r for r in rats if r.rat_id == 1)
    rat2 = next(r for r in rats if r.rat_id == 2)

    rows = []
    for d_min in d_min_grid:
        p1 = link_prob(d_min, rat1, channel)
        p2 = {
            (a, b): link_prob(abs(a - b) * d_min, rat2, channel)
            for a, b in PAIRS
        }
        dist1 = enumerate_latency(chain_graph(p1, p1, p1))
        dist2 = enumerate_latency(long_range_graph(p2, rho))
        combined = _combined_bound_distribution(dist1, dist2)
        rows.append(SweepRow(
            d_min=d_min,
            err_r1=dist1.failure_prob,
            err_r2_norelay=1.0 - p2[(1, 4)],
            err_r2_relay=dist2.failure_prob,
            err_multirat_lb=combined.failure_prob,
            lat_r1=dist1.mean_given_success(),
            lat_r2_relay=dist2.mean_given_success(),
            lat_multirat_lb=combined.mean_given_success(),
            fail_r1=dist1.failure_prob,
            fail_r2_relay=dist2.failure_prob,
            fail_multirat_lb=combined.failure_prob,
        ))
    return rows


SWEEP_COLUMNS = [
    "d_min_m", "err_r1", "err_r2_norelay", "err_r2_relay", "err_multirat_lb",
    "lat_r1", "lat_r2_relay", "lat_multirat_lb",
    "fail_r1", "fail_r2_relay", "fail_multirat_lb",
]


def write_sweep_csv(rows: "list[SweepRow]", path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for r in rows:
            writer.writerow([
                f"{r.d_min:.6g}", f"{r.err_r1:.6g}", f"{r.err_r2_norelay:.6g}",
                f"{r.err_r2_relay:.6g}", f"{r.err_multirat_lb:.6g}",
                f"{r.lat_r1:.6g}", f"{r.lat_r2_relay:.6g}",
                f"{r.lat_multirat_lb:.6g}", f"{r.fail_r1:.6g}",
                f"{r.fail_r2_relay:.6g}", f"{r.fail_multirat_lb:.6g}",
            ])
