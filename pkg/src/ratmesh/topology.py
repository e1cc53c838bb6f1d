"""Device deployment on a disk (Poisson point process) and realization of the
per-RAT link graphs from pairwise link probabilities.

Links are drawn once per run and frozen: the channel coherence time is assumed
long enough that a link either exists for the whole setup phase or not at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams, link_prob_batch


@dataclass(frozen=True)
class DeploymentConfig:
    intensity: float      # expected number of devices
    area_radius: float    # meters

    def __post_init__(self):
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")
        if self.area_radius <= 0:
            raise ValueError("area_radius must be positive")


@dataclass(frozen=True)
class Deployment:
    """Sampled device positions; device ids are 0..n-1 in sampling order."""

    positions: tuple  # of (x, y) in meters
    area_radius: float

    @property
    def n_devices(self) -> int:
        return len(self.positions)

    def distance(self, i: int, j: int) -> float:
        (xi, yi), (xj, yj) = self.positions[i], self.positions[j]
        return math.hypot(xi - xj, yi - yj)


class RatLinkGraph:
    """Realized undirected link set for one RAT (irreflexive, symmetric)."""

    def __init__(self, rat_id: int, n: int, edges):
        self.rat_id = rat_id
        self.n = n
        nbrs = [set() for _ in range(n)]
        for i, j in edges:
            if i == j:
                raise ValueError("self-links are not allowed")
            nbrs[i].add(j)
            nbrs[j].add(i)
        self._neighbors = [frozenset(s) for s in nbrs]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._neighbors[i]

    def edges(self):
        for i in range(self.n):
            for j in self._neighbors[i]:
                if i < j:
                    yield (i, j)

    def neighbors(self, i: int) -> frozenset:
        return self._neighbors[i]


def sample_deployment(rng: np.random.Generator, config: DeploymentConfig) -> Deployment:
    """Draw the device count Poisson(intensity) and positions uniform on the disk."""
    n = int(rng.poisson(config.intensity))
    radii = config.area_radius * np.sqrt(rng.random(n))
    angles = 2.0 * math.pi * rng.random(n)
    xs = radii * np.cos(angles)
    ys = radii * np.sin(angles)
    return Deployment(
        positions=tuple((float(x), float(y)) for x, y in zip(xs, ys)),
        area_radius=config.area_radius,
    )


def realize_links(
    deployment: Deployment,
    rats,
    channel: ChannelParams,
    rng: np.random.Generator,
) -> "list[RatLinkGraph]":
    """One Bernoulli draw per unordered device pair per RAT.

    Draws are independent across pairs and RATs; a realized link is
    bidirectional and stays fixed for the whole run.
    """
    n = deployment.n_devices
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    dists = [deployment.distance(i, j) for i, j in pairs]
    graphs = []
    for rat in rats:
        probs = link_prob_batch(dists, rat, channel)
        draws = rng.random(len(pairs))
        edges = [pair for pair, p, u in zip(pairs, probs, draws) if u < p]
        graphs.append(RatLinkGraph(rat.rat_id, n, edges))
    return graphs


def neighborhood(graph: RatLinkGraph, i: int, closed: bool = False) -> frozenset:
    """Open neighborhood of device i, or the closed one (including i)."""
    if not 0 <= i < graph.n:
        raise KeyError(f"unknown device id {i}")
    nbrs = graph.neighbors(i)
    return nbrs | {i} if closed else nbrs


def graph_stats(graph: RatLinkGraph) -> "tuple[bool, int, list[int]]":
    """(is_connected, component count, degree sequence) via BFS traversal."""
    n = graph.n
    degrees = [len(graph.neighbors(i)) for i in range(n)]
    seen = [False] * n
    components = 0
    for start in range(n):
        if seen[start]:
            continue
        components += 1
        stack = [start]
        seen[start] = True
        while stack:
            u = stack.pop()
            for v in graph.neighbors(u):
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
    return (components <= 1, components, degrees)


def serialize_deployment(deployment: Deployment) -> str:
    """Line-oriented `id,x,y` dump for replay and debugging."""
    lines = [f"{i},{x!r},{y!r}" for i, (x, y) in enumerate(deployment.positions)]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_deployment(text: str, area_radius: float) -> Deployment:
    positions = []
    for line in text.splitlines():
        if not line.strip():
            continue
        ident, x, y = line.split(",")
        if int(ident) != len(positions):
            raise ValueError("device ids must be contiguous from 0")
        positions.append((float(x), float(y)))
    return Deployment(positions=tuple(positions), area_radius=area_radius)


def serialize_links(graphs) -> str:
    """Line-oriented `rat,i,j` edge list covering all RATs."""
    lines = []
    for g in graphs:
        for i, j in sorted(g.edges()):
            lines.append(f"{g.rat_id},{i},{j}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_links(text: str, n: int, rat_ids=(1, 2)) -> "list[RatLinkGraph]":
    edges = {rid: [] for rid in rat_ids}
    for line in text.splitlines():
        if not line.strip():
            continue
        rid, i, j = (int(tok) for tok in line.split(","))
        edges[rid].append((i, j))
    return [RatLinkGraph(rid, n, edges[rid]) for rid in rat_ids]
