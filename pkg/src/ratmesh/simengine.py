"""Discrete-event simulator for the setup phase of one deployment: power-on
and promotion timers, neighbor discovery, rule-based status negotiation,
convergence detection and handshake accounting.

Handshakes are treated as instantaneous relative to the timer scales, so a
promotion, its discovery sweep and the follow-up negotiations all execute at
one simulation instant, ordered by event sequence number. The medium is ideal:
an exchange succeeds exactly when the frozen link exists.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import consensus
from .consensus import (
    COORDINATOR_ROLES,
    DeviceState,
    Role,
    RuleConfig,
    set_cluster_head,
    set_master,
    set_role,
)
from .topology import Deployment

# Event kinds, in no particular priority: ordering is (time, seq) only.
POWER_ON = 0
CH_TIMER = 1
M_TIMER = 2
START_DISCOVERY = 3
POKE = 4

# Role pairs that have a rule row at all, used to prune candidate pokes
# before building a full match.
_SHORT_PAIRS = frozenset(
    [(Role.UNMASTERED_CM, Role.ON), (Role.CM, Role.ON), (Role.CM, Role.MASTER),
     (Role.UNMASTERED_CH, Role.ON), (Role.UNMASTERED_CH, Role.UNMASTERED_CH),
     (Role.UNMASTERED_CH, Role.CH), (Role.UNMASTERED_CH, Role.MASTER),
     (Role.CH, Role.ON), (Role.CH, Role.CH), (Role.CH, Role.MASTER)]
    + [(Role.MASTER, r) for r in Role]
)
_LONG_PAIRS = frozenset(
    [(Role.UNMASTERED_CH, Role.MASTER), (Role.CH, Role.MASTER),
     (Role.MASTER, Role.UNMASTERED_CH), (Role.MASTER, Role.CH),
     (Role.MASTER, Role.MASTER)]
)


def has_candidate_row(role_i: Role, role_j: Role, rat: int) -> bool:
    pair = (role_i, role_j)
    return pair in _SHORT_PAIRS if rat == 1 else pair in _LONG_PAIRS


class NonConvergenceError(Exception):
    """The event cap was hit before the network went quiescent."""


@dataclass(frozen=True)
class TimerConfig:
    """Rates of the power-on, CH-promotion and master-promotion timers."""

    lambda_on: float = 0.1
    lambda_ch: float = 0.2
    lambda_m: float = 0.2

    def __post_init__(self):
        if min(self.lambda_on, self.lambda_ch, self.lambda_m) <= 0:
            raise ValueError("timer rates must be positive")


@dataclass
class RunMetrics:
    """Counters for one simulation run."""

    n_devices: int
    n_masters: int = 0
    n_chs: int = 0
    hello_r1: int = 0
    hello_r2: int = 0
    poke_r1: int = 0
    poke_r2: int = 0
    tupdate_r1: int = 0
    tupdate_r2: int = 0
    convergence_time: float = 0.0
    unique_master: bool = False
    # Diagnostics, not part of the per-run CSV schema.
    structure_ok: bool = True
    structure_error: "str | None" = None
    hub_exists: bool = False
    master_cert_ok: bool = True
    events_processed: int = 0
    drain_actions: int = 0

    def handshake_count(self, message: str, rat: int) -> int:
        return getattr(self, f"{_COUNTER_NAMES[message]}_r{rat}")


_COUNTER_NAMES = {"hello": "hello", "poke": "poke", "t_update": "tupdate"}


def count_handshake(metrics: RunMetrics, message: str, rat: int) -> None:
    """Increment exactly one of the six handshake counters."""
    name = f"{_COUNTER_NAMES[message]}_r{rat}"
    setattr(metrics, name, getattr(metrics, name) + 1)


def convergence_check(network, graphs, cfg: RuleConfig = RuleConfig()) -> bool:
    """True when no rule in either table would change any device's status."""
    return not consensus.enabled_actions(network, graphs, cfg)


class _Engine:
    def __init__(self, deployment: Deployment, graphs, timers: TimerConfig,
                 rng: np.random.Generator, cfg: RuleConfig, event_cap: int):
        n = deployment.n_devices
        self.n = n
        self.graphs = {g.rat_id: g for g in graphs}
        self.timers = timers
        self.rng = rng
        self.cfg = cfg
        self.event_cap = event_cap
        self.network = {i: DeviceState(i) for i in range(n)}
        self.metrics = RunMetrics(n_devices=n)

        self.heap = []
        self.seq = 0
        self.now = 0.0
        self.powered = set()
        self.ch_gen = [0] * n
        self.m_gen = [0] * n
        self.ch_pending = [False] * n
        self.m_pending = [False] * n
        self.pending_pokes = set()
        self.ever_v2 = set()
        self.ever_coordinators = set()
        self.coords = set()
        self._coords_version = 0
        self._n2_cache = {}
        self.last_change_time = 0.0

    # -- scheduling ---------------------------------------------------------

    def _push(self, time: float, kind: int, data: tuple) -> None:
        heapq.heappush(self.heap, (time, self.seq, kind, data))
        self.seq += 1

    def _arm_ch_timer(self, dev: int) -> None:
        self.ch_gen[dev] += 1
        self.ch_pending[dev] = True
        delay = self.rng.exponential(1.0 / self.timers.lambda_ch)
        self._push(self.now + delay, CH_TIMER, (dev, self.ch_gen[dev]))

    def _arm_m_timer(self, dev: int) -> None:
        self.m_gen[dev] += 1
        self.m_pending[dev] = True
        delay = self.rng.exponential(1.0 / self.timers.lambda_m)
        self._push(self.now + delay, M_TIMER, (dev, self.m_gen[dev]))

    def cancel_timers_on_discovery(self, dev: int, discoverer_role: Role) -> None:
        """Discovery by a CH or master stops the device's self-promotion."""
        state = self.network[dev]
        if discoverer_role in (Role.CH, Role.MASTER) and state.role is Role.ON:
            self.ch_gen[dev] += 1
            self.ch_pending[dev] = False
        if discoverer_role is Role.MASTER and state.role is Role.UNMASTERED_CH:
            self.m_gen[dev] += 1
            self.m_pending[dev] = False

    def _schedule_reeval(self, i: int, j: int, rat: int) -> None:
        """Queue a negotiation for (i -> j) if a rule currently fires with
        effect; the poke event re-checks when it executes and falls through
        silently if the state moved on."""
        net = self.network
        if not has_candidate_row(net[i].role, net[j].role, rat):
            return
        key = (i, j, rat)
        if key in self.pending_pokes:
            return
        outcome = consensus.match_rule(net[i], net[j], rat, self.cfg,
                                       self._reachable, self._n2_true)
        if outcome.matched and not outcome.is_noop(net):
            self.pending_pokes.add(key)
            self._push(self.now, POKE, (i, j, rat, False))

    def _reachable(self, a: int, b: int, rat: int) -> bool:
        return self.graphs[rat].has_edge(a, b)

    def _n2_true(self, dev: int) -> frozenset:
        """Closed long-range neighborhood over the current coordinator set:
        the vertex set of the graph the hierarchy negotiation reasons
        about. Cached until the coordinator set changes."""
        version, cached = self._n2_cache.get(dev, (-1, None))
        if version != self._coords_version:
            cached = (self.graphs[2].neighbors(dev) & self.coords) | {dev}
            self._n2_cache[dev] = (self._coords_version, cached)
        return cached

    # -- handshakes ---------------------------------------------------------

    def _hello(self, i: int, j: int, rat: int) -> None:
        """Three-message discovery exchange: both sides learn each other and
        store the peer's open neighborhood as advertised right now."""
        net = self.network
        ki, kj = net[i].known[rat], net[j].known[rat]
        open_i = frozenset(ki) | {j}
        open_j = frozenset(kj) | {i}
        ki[j] = open_j
        kj[i] = open_i
        count_handshake(self.metrics, "hello", rat)
        self.cancel_timers_on_discovery(j, net[i].role)
        if rat == 2:
            self.ever_v2.add(i)
            self.ever_v2.add(j)
        # The pair is now mutually pokeable; the responder may hold a rule
        # row toward the initiator (the initiator's own sweep covers i -> j).
        self._schedule_reeval(j, i, rat)

    def _execute_poke(self, i: int, j: int, rat: int, sweep: bool) -> None:
        net = self.network
        outcome = consensus.match_rule(net[i], net[j], rat, self.cfg,
                                       self._reachable, self._n2_true)
        effective = outcome.matched and not outcome.is_noop(net)
        if sweep:
            count_handshake(self.metrics, "poke", rat)
        elif not effective:
            return  # nothing to negotiate anymore; no exchange happens
        else:
            count_handshake(self.metrics, "poke", rat)
        self._refresh_advertisements(i, j, rat)
        if effective:
            affected = consensus.apply_changes(
                net, outcome.changes, self.cfg, self._reachable
            )
            count_handshake(self.metrics, "t_update", rat)
            self._after_state_change(affected)
        # A forming cluster head that the exchange did not convert resumes
        # its own election; its timer may have been cancelled at discovery.
        for dev in (i, j):
            if (net[dev].role is Role.UNMASTERED_CH
                    and not self.m_pending[dev]):
                self._arm_m_timer(dev)

    def _refresh_advertisements(self, i: int, j: int, rat: int) -> None:
        """A completed negotiation exchange is also the 'last exchange' for
        the peers' advertised neighborhoods: both views become current. The
        rule evaluation itself always uses the pre-exchange advertisement."""
        net = self.network
        ki, kj = net[i].known[rat], net[j].known[rat]
        ki[j] = frozenset(kj)
        kj[i] = frozenset(ki)

    # -- state-change bookkeeping -------------------------------------------

    def _after_state_change(self, affected) -> None:
        self.last_change_time = self.now
        net = self.network
        flipped = []
        for x in affected:
            is_coord = net[x].role in COORDINATOR_ROLES
            if is_coord != (x in self.coords):
                flipped.append(x)
                if is_coord:
                    self.coords.add(x)
                    self.ever_coordinators.add(x)
                else:
                    self.coords.discard(x)
        if flipped:
            self._coords_version += 1
        for x in sorted(affected):
            state = net[x]
            role = state.role
            if role is Role.ON and x in self.powered:
                # Orphaned device: re-enters the election with a fresh timer.
                self._arm_ch_timer(x)
            elif role is Role.UNMASTERED_CH:
                if not self.m_pending[x]:
                    self._arm_m_timer(x)
                self._push(self.now, START_DISCOVERY, (x, 1))
            elif role is Role.MASTER:
                self.ever_v2.add(x)
                self._push(self.now, START_DISCOVERY, (x, 2))
            for rat in (1, 2):
                for nb in sorted(state.known[rat]):
                    self._schedule_reeval(x, nb, rat)
                    self._schedule_reeval(nb, x, rat)
        # A device entering or leaving the coordinator set changes the
        # long-range neighborhoods of its realized neighbors, which can
        # enable negotiations between pairs that did not change themselves.
        for x in sorted(flipped):
            for a in sorted(self.graphs[2].neighbors(x) & self.coords):
                for b in sorted(net[a].known[2]):
                    self._schedule_reeval(a, b, 2)
                    self._schedule_reeval(b, a, 2)

    # -- event handlers -----------------------------------------------------

    def _on_power_on(self, dev: int) -> None:
        self.powered.add(dev)
        self.last_change_time = self.now
        self._arm_ch_timer(dev)

    def _on_ch_timer(self, dev: int, gen: int) -> None:
        if gen != self.ch_gen[dev] or not self.ch_pending[dev]:
            return
        self.ch_pending[dev] = False
        if self.network[dev].role not in (Role.ON, Role.UNMASTERED_CM):
            return
        affected = consensus.apply_changes(
            self.network,
            [set_role(dev, Role.UNMASTERED_CH), set_cluster_head(dev, dev)],
            self.cfg,
            self._reachable,
        )
        self._after_state_change(affected | {dev})

    def _on_m_timer(self, dev: int, gen: int) -> None:
        if gen != self.m_gen[dev] or not self.m_pending[dev]:
            return
        self.m_pending[dev] = False
        if self.network[dev].role is not Role.UNMASTERED_CH:
            return
        affected = consensus.apply_changes(
            self.network,
            [set_role(dev, Role.MASTER), set_cluster_head(dev, dev),
             set_master(dev, dev)],
            self.cfg,
            self._reachable,
        )
        self._after_state_change(affected | {dev})

    def _on_start_discovery(self, dev: int, rat: int) -> None:
        net = self.network
        state = net[dev]
        known = state.known[rat]
        for j in sorted(self.graphs[rat].neighbors(dev)):
            if j in known or j not in self.powered:
                continue
            if rat == 2 and net[j].role not in COORDINATOR_ROLES:
                continue  # only the coordination plane answers long-range
            self._hello(dev, j, rat)
        for j in sorted(known):
            self._push(self.now, POKE, (dev, j, rat, True))

    # -- main loop ----------------------------------------------------------

    def run(self) -> RunMetrics:
        for dev in range(self.n):
            t_on = self.rng.exponential(1.0 / self.timers.lambda_on)
            self._push(t_on, POWER_ON, (dev,))

        events = 0
        while True:
            while self.heap:
                self.now, _seq, kind, data = heapq.heappop(self.heap)
                events += 1
                if events > self.event_cap:
                    raise NonConvergenceError(
                        f"event cap {self.event_cap} exceeded at t={self.now:.3f}s "
                        f"with {len(self.heap)} queued events; likely rule livelock"
                    )
                if kind == POWER_ON:
                    self._on_power_on(*data)
                elif kind == CH_TIMER:
                    self._on_ch_timer(*data)
                elif kind == M_TIMER:
                    self._on_m_timer(*data)
                elif kind == START_DISCOVERY:
                    self._on_start_discovery(*data)
                else:
                    i, j, rat, sweep = data
                    if not sweep:
                        self.pending_pokes.discard((i, j, rat))
                    self._execute_poke(i, j, rat, sweep)
            # Safety net: the event waves above should leave nothing enabled,
            # but any remainder is executed (and counted) rather than ignored.
            leftovers = consensus.enabled_actions(
                self.network, self.graphs.values(), self.cfg
            )
            if not leftovers:
                break
            i, j, rat = leftovers[0]
            self.metrics.drain_actions += 1
            events += 1
            if events > self.event_cap:
                raise NonConvergenceError(
                    f"event cap {self.event_cap} exceeded in final drain"
                )
            self._execute_poke(i, j, rat, sweep=True)

        self.metrics.events_processed = events
        self._finalize()
        return self.metrics

    def _finalize(self) -> None:
        m = self.metrics
        net = self.network
        m.n_masters = sum(1 for s in net.values() if s.role is Role.MASTER)
        m.n_chs = sum(1 for s in net.values() if s.role is Role.CH)
        m.unique_master = m.n_masters == 1
        m.convergence_time = self.last_change_time
        ok, err = validate_structure(net, self.graphs)
        m.structure_ok = ok
        m.structure_error = err
        coords = sorted(self.ever_v2)
        g2 = self.graphs[2]
        m.hub_exists = bool(coords) and any(
            all(g2.has_edge(i, j) for j in coords if j != i) for i in coords
        )
        if m.unique_master:
            master = next(d for d, s in net.items() if s.role is Role.MASTER)
            m.master_cert_ok = all(
                g2.has_edge(master, j) for j in coords if j != master
            )


def validate_structure(network, graphs) -> "tuple[bool, str | None]":
    """Post-convergence structural check: every device holds a final role and
    its coordinator references are backed by realized links."""
    by_rat = graphs if isinstance(graphs, dict) else {g.rat_id: g for g in graphs}
    for dev, state in network.items():
        role = state.role
        if role is Role.CM:
            head = network.get(state.cluster_head)
            if head is None or head.role not in (Role.CH, Role.MASTER):
                return False, f"device {dev}: cluster head is not a CH/master"
            if not by_rat[1].has_edge(dev, state.cluster_head):
                return False, f"device {dev}: no short-range link to cluster head"
        elif role is Role.CH:
            boss = network.get(state.master)
            if boss is None or boss.role is not Role.MASTER:
                return False, f"device {dev}: master reference is not a master"
            if not by_rat[2].has_edge(dev, state.master):
                return False, f"device {dev}: no long-range link to master"
        elif role is Role.MASTER:
            if state.master != dev or state.cluster_head != dev:
                return False, f"device {dev}: master must reference itself"
        else:
            return False, f"device {dev}: non-final role {role.label}"
    return True, None


def run(
    deployment: Deployment,
    graphs,
    timers: TimerConfig,
    rng: np.random.Generator,
    *,
    rule_config: RuleConfig = RuleConfig(),
    event_cap: int = 10**6,
) -> RunMetrics:
    """Simulate the setup phase on a realized deployment until quiescence.

    Raises NonConvergenceError when the event cap is exhausted first.
    """
    engine = _Engine(deployment, graphs, timers, rng, rule_config, event_cap)
    return engine.run()
