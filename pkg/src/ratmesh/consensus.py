"""Protocol core: hierarchy roles, the short-range and long-range status-change
rule tables, change-list application with its cascades, and the quiescence
predicate. Everything here is scheduler-independent; timers and handshake
counting live in the simulation engine.

Role vocabulary: ON (powered, no role yet), UNMASTERED_CM / UNMASTERED_CH
(cluster member / cluster head whose cluster has no master yet), CM, CH,
MASTER. A device's status is (role, cluster_head, master).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum


class Role(IntEnum):
    ON = 0
    UNMASTERED_CM = 1
    CM = 2
    UNMASTERED_CH = 3
    CH = 4
    MASTER = 5

    @property
    def label(self) -> str:
        return _ROLE_LABELS[self]


_ROLE_LABELS = {
    Role.ON: "on",
    Role.UNMASTERED_CM: "ucm",
    Role.CM: "cm",
    Role.UNMASTERED_CH: "uch",
    Role.CH: "ch",
    Role.MASTER: "master",
}


# Roles that head a cluster: other devices may point at them as cluster_head.
CLUSTER_HEAD_ROLES = frozenset({Role.UNMASTERED_CH, Role.CH, Role.MASTER})
# Roles that answer long-range discovery (the coordination plane).
COORDINATOR_ROLES = CLUSTER_HEAD_ROLES


@dataclass(frozen=True)
class RuleConfig:
    """Toggles for the documented rule-table ambiguities.

    literal_tables: keep the printed `j <- unmastered CH` outcome of the two
    short-range recruitment rows instead of the corrected unmastered-CM role.
    reparent_orphans: members of an absorbed cluster head move to the absorbing
    cluster (when the short-range link exists) instead of reverting to ON.
    """

    literal_tables: bool = False
    reparent_orphans: bool = False


class DeviceState:
    """Mutable per-device status plus per-RAT neighbor knowledge.

    ``known[rat]`` maps a discovered neighbor id to that neighbor's open
    neighborhood as advertised at the last HELLO exchange (possibly stale).
    """

    __slots__ = ("id", "role", "cluster_head", "master", "known")

    def __init__(self, device_id: int, role: Role = Role.ON,
                 cluster_head: "int | None" = None, master: "int | None" = None):
        self.id = device_id
        self.role = role
        self.cluster_head = cluster_head
        self.master = master
        self.known = {1: {}, 2: {}}

    def known_closed(self, rat: int) -> frozenset:
        """Closed neighborhood on `rat` from this device's own knowledge."""
        return frozenset(self.known[rat]) | {self.id}

    def advertised_closed(self, rat: int, neighbor: int) -> frozenset:
        """Closed neighborhood of `neighbor` as it last advertised it to us."""
        return self.known[rat][neighbor] | {neighbor}

    def snapshot(self) -> tuple:
        return (self.role, self.cluster_head, self.master)

    def __repr__(self):
        return (f"DeviceState({self.id}, {self.role.label}, "
                f"c={self.cluster_head}, m={self.master})")


class InvalidChangeError(Exception):
    """A change list left some device in an inconsistent status."""


def validate_device(state: DeviceState, cfg: RuleConfig = RuleConfig()) -> None:
    """Raise InvalidChangeError unless the (role, cluster_head, master) triple
    is consistent."""
    r, c, m = state.role, state.cluster_head, state.master
    ok = True
    if r is Role.ON:
        ok = c is None and m is None
    elif r is Role.UNMASTERED_CM:
        ok = c is not None and m is None
    elif r is Role.CM:
        ok = c is not None and m is not None
    elif r is Role.UNMASTERED_CH:
        # A forming cluster head heads itself; literal-table mode allows the
        # printed variant where it points at its recruiter.
        ok = m is None and (c == state.id or (cfg.literal_tables and c is not None))
    elif r is Role.CH:
        ok = c is not None and m is not None
    elif r is Role.MASTER:
        ok = c == state.id and m == state.id
    if not ok:
        raise InvalidChangeError(f"inconsistent status: {state!r}")


@dataclass(frozen=True)
class Assignment:
    """One status assignment: field is 'role', 'cluster_head' or 'master'."""

    field: str
    device: int
    value: object

    def is_noop(self, network) -> bool:
        return getattr(network[self.device], self.field) == self.value


def set_role(device: int, role: Role) -> Assignment:
    return Assignment("role", device, role)


def set_cluster_head(device: int, head: "int | None") -> Assignment:
    return Assignment("cluster_head", device, head)


def set_master(device: int, master: "int | None") -> Assignment:
    return Assignment("master", device, master)


ChangeList = "list[Assignment]"


@dataclass
class RuleOutcome:
    matched: bool
    changes: "list[Assignment]" = field(default_factory=list)

    @property
    def affected_devices(self) -> frozenset:
        return frozenset(a.device for a in self.changes)

    def is_noop(self, network) -> bool:
        return all(a.is_noop(network) for a in self.changes)


_NO_MATCH = RuleOutcome(False)


def match_rule_short(i: DeviceState, j: DeviceState,
                     cfg: RuleConfig = RuleConfig(),
                     reachable=None) -> RuleOutcome:
    """Short-range rule table for an exchange initiated by i toward j.

    At most one row applies to any ordered role pair; unmatched pairs return
    matched=False with no changes. The two member-recruitment rows hand the
    newcomer over to the initiator's own cluster head, which is only feasible
    when the newcomer can reach that head: ``reachable(a, b, rat)`` guards
    this (None means always reachable).
    """
    if i.id == j.id:
        raise ValueError("a device cannot poke itself")
    ri, rj = i.role, j.role

    if ri is Role.MASTER:
        # A master absorbs any short-range neighbor into its own cluster.
        # Devices already serving a different master only switch allegiance
        # toward a lower id: without a total order two adjacent masters keep
        # stealing a shared neighbor from each other indefinitely.
        if (rj in (Role.CM, Role.CH) and j.master is not None
                and j.master != i.id and i.id > j.master):
            return _NO_MATCH
        return RuleOutcome(True, [
            set_role(j.id, Role.CM),
            set_cluster_head(j.id, i.id),
            set_master(j.id, i.id),
        ])
    if ri is Role.UNMASTERED_CM and rj is Role.ON:
        if reachable is not None and not reachable(j.id, i.cluster_head, 1):
            return _NO_MATCH
        return RuleOutcome(True, [
            set_role(j.id, Role.UNMASTERED_CM),
            set_cluster_head(j.id, i.cluster_head),
        ])
    if ri is Role.CM and rj is Role.ON:
        if reachable is not None and not reachable(j.id, i.cluster_head, 1):
            return _NO_MATCH
        return RuleOutcome(True, [
            set_role(j.id, Role.CM),
            set_cluster_head(j.id, i.cluster_head),
            set_master(j.id, i.master),
        ])
    if ri is Role.CM and rj is Role.MASTER:
        # Join the master's own cluster; across trees, only toward a lower
        # master id (same ordering as the absorption row above).
        if i.master != j.id and j.id > i.master:
            return _NO_MATCH
        return RuleOutcome(True, [
            set_cluster_head(i.id, j.id),
            set_master(i.id, j.id),
        ])
    if ri is Role.UNMASTERED_CH and rj in (Role.ON, Role.UNMASTERED_CH):
        recruited = Role.UNMASTERED_CH if cfg.literal_tables else Role.UNMASTERED_CM
        if (cfg.literal_tables and rj is Role.UNMASTERED_CH
                and j.cluster_head is not None and i.id > j.cluster_head):
            # Literal recruits keep initiating, so the head reference must
            # only ever move down the id order or mutual recruitment between
            # forming cluster heads never settles.
            return _NO_MATCH
        return RuleOutcome(True, [
            set_role(j.id, recruited),
            set_cluster_head(j.id, i.id),
        ])
    if ri is Role.UNMASTERED_CH and rj is Role.CH:
        return RuleOutcome(True, [
            set_role(i.id, Role.CM),
            set_cluster_head(i.id, j.id),
            set_master(i.id, j.master),
        ])
    if ri is Role.UNMASTERED_CH and rj is Role.MASTER:
        return RuleOutcome(True, [
            set_role(i.id, Role.CM),
            set_cluster_head(i.id, j.id),
            set_master(i.id, j.id),
        ])
    if ri is Role.CH and rj is Role.ON:
        return RuleOutcome(True, [
            set_role(j.id, Role.CM),
            set_cluster_head(j.id, i.id),
            set_master(j.id, i.master),
        ])
    if ri is Role.CH and rj is Role.CH:
        if i.master == j.master:
            return RuleOutcome(True, [
                set_role(j.id, Role.CM),
                set_cluster_head(j.id, i.id),
            ])
        return _NO_MATCH
    if ri is Role.CH and rj is Role.MASTER:
        return RuleOutcome(True, [
            set_role(i.id, Role.CM),
            set_cluster_head(i.id, j.id),
            set_master(i.id, j.id),
        ])
    return _NO_MATCH


def match_rule_long(i: DeviceState, j: DeviceState,
                    n2_closed_i: frozenset, n2_closed_j: frozenset,
                    cfg: RuleConfig = RuleConfig()) -> RuleOutcome:
    """Long-range rule table; conditions compare closed long-range
    neighborhoods, normally as advertised at the last exchange."""
    if i.id == j.id:
        raise ValueError("a device cannot poke itself")
    ri, rj = i.role, j.role

    if ri is Role.UNMASTERED_CH and rj is Role.MASTER:
        if n2_closed_i <= n2_closed_j:
            # The printed row assigns only the cluster head; the master
            # reference is added so the resulting CH has one.
            return RuleOutcome(True, [
                set_role(i.id, Role.CH),
                set_cluster_head(i.id, j.id),
                set_master(i.id, j.id),
            ])
        return _NO_MATCH
    if ri is Role.CH and rj is Role.MASTER:
        if n2_closed_i > n2_closed_j and i.master == j.id:
            # Mastership swap: the better-connected CH takes over.
            return RuleOutcome(True, [
                set_role(i.id, Role.MASTER),
                set_cluster_head(i.id, i.id),
                set_master(i.id, i.id),
                set_role(j.id, Role.CH),
                set_master(j.id, i.id),
            ])
        return _NO_MATCH
    if ri is Role.MASTER and rj is Role.UNMASTERED_CH:
        if n2_closed_i >= n2_closed_j:
            return RuleOutcome(True, [
                set_role(j.id, Role.CH),
                set_cluster_head(j.id, j.id),
                set_master(j.id, i.id),
            ])
        return _NO_MATCH
    if ri is Role.MASTER and rj is Role.CH:
        if n2_closed_i < n2_closed_j and j.master == i.id:
            # Printed row restates j's current status; kept verbatim, so it
            # never enables an action (and never promotes j).
            return RuleOutcome(True, [
                set_role(j.id, Role.CH),
                set_master(j.id, i.id),
            ])
        return _NO_MATCH
    if ri is Role.MASTER and rj is Role.MASTER:
        if n2_closed_i >= n2_closed_j:
            return RuleOutcome(True, [
                set_role(j.id, Role.CH),
                set_master(j.id, i.id),
            ])
        if n2_closed_i < n2_closed_j:
            return RuleOutcome(True, [
                set_role(i.id, Role.CH),
                set_master(i.id, j.id),
            ])
        return _NO_MATCH
    return _NO_MATCH


def match_rule(i: DeviceState, j: DeviceState, rat: int,
               cfg: RuleConfig = RuleConfig(), reachable=None,
               n2_provider=None) -> RuleOutcome:
    """Dispatch on RAT.

    For the long-range table, ``n2_provider(device_id)`` must return the
    closed long-range neighborhood over the current coordinator set; without
    one, the initiator's stored knowledge is used (own set for itself, the
    peer's last advertisement for the peer).
    """
    if rat == 1:
        return match_rule_short(i, j, cfg, reachable)
    if n2_provider is not None:
        n2_i, n2_j = n2_provider(i.id), n2_provider(j.id)
    else:
        n2_i, n2_j = i.known_closed(2), i.advertised_closed(2, j.id)
    return match_rule_long(i, j, n2_i, n2_j, cfg)


def apply_changes(
    network: "dict[int, DeviceState]",
    changes: "list[Assignment]",
    cfg: RuleConfig = RuleConfig(),
    reachable=None,
) -> "set[int]":
    """Apply a change list in order, run the induced cascades, and return the
    set of devices whose status changed.

    Cascades (applied when a role assignment implies them):
    - a demoted master's subordinates follow it to its new master, falling
      back to unmastered-CH (fresh election) when the long-range link to the
      new master is missing;
    - members of a cluster head that stopped being one are orphaned back to
      ON, or re-parented into the absorbing cluster when cfg.reparent_orphans
      and the short-range link exists;
    - members of an unmastered CH that acquired a master (or became one) are
      promoted to CM under that master.

    ``reachable(a, b, rat)`` reports whether a realized link exists; when None
    every link is assumed present (pure state-logic mode).
    """
    if reachable is None:
        reachable = lambda a, b, rat: True  # noqa: E731

    before = {d: s.snapshot() for d, s in network.items()}
    for a in changes:
        if a.device not in network:
            raise InvalidChangeError(f"unknown device {a.device} in change list")
        setattr(network[a.device], a.field, a.value)

    demoted_masters = []   # (device, new_master)
    lost_headship = []     # device ids
    gained_master = []     # device ids (were unmastered CH)
    for dev, (old_role, _c, _m) in before.items():
        new_role = network[dev].role
        if new_role is old_role:
            continue
        if old_role is Role.MASTER and new_role is not Role.MASTER:
            demoted_masters.append((dev, network[dev].master))
        if old_role in CLUSTER_HEAD_ROLES and new_role not in CLUSTER_HEAD_ROLES:
            lost_headship.append(dev)
        if old_role is Role.UNMASTERED_CH and new_role in (Role.CH, Role.MASTER):
            gained_master.append(dev)

    member_roles = {Role.UNMASTERED_CM, Role.CM}
    if cfg.literal_tables:
        member_roles = member_roles | {Role.UNMASTERED_CH}

    for x, new_master in demoted_masters:
        # Subordinate CHs first, members second so they can follow their head.
        subs = [d for d, s in network.items()
                if d != x and s.master == x and d != new_master]
        for y in sorted(d for d in subs if network[d].role is Role.CH):
            st = network[y]
            if new_master is not None and reachable(y, new_master, 2):
                st.master = new_master
            else:
                st.role = Role.UNMASTERED_CH
                st.cluster_head = y
                st.master = None
        for y in sorted(d for d in subs if network[d].role is Role.CM):
            st = network[y]
            head = network.get(st.cluster_head)
            if head is None:
                continue
            if head.role in (Role.CH, Role.MASTER) and head.master is not None:
                st.master = head.master
            elif head.role is Role.UNMASTERED_CH:
                st.role = Role.UNMASTERED_CM
                st.master = None
            # A head that itself lost cluster headship is handled below.

    for x in lost_headship:
        members = sorted(
            d for d, s in network.items()
            if d != x and s.cluster_head == x and s.role in member_roles
        )
        new_head = network[x].cluster_head
        for y in members:
            st = network[y]
            if (cfg.reparent_orphans and new_head is not None and new_head != x
                    and reachable(y, new_head, 1)):
                head = network[new_head]
                st.cluster_head = new_head
                if head.master is not None:
                    st.role = Role.CM
                    st.master = head.master
                else:
                    st.role = Role.UNMASTERED_CM
                    st.master = None
            else:
                st.role = Role.ON
                st.cluster_head = None
                st.master = None

    for x in gained_master:
        head_master = network[x].master
        members = sorted(
            d for d, s in network.items()
            if d != x and s.cluster_head == x and s.role is Role.UNMASTERED_CM
        )
        for y in members:
            st = network[y]
            st.role = Role.CM
            st.master = head_master

    affected = {d for d, snap in before.items() if network[d].snapshot() != snap}
    for d in affected:
        validate_device(network[d], cfg)
    return affected


def enabled_actions(
    network: "dict[int, DeviceState]",
    graphs,
    cfg: RuleConfig = RuleConfig(),
) -> "list[tuple[int, int, int]]":
    """All (initiator, target, rat) triples whose rule match would change at
    least one status field. An empty list means the network has converged.

    A pair is considered only when the realized link exists and the initiator
    has discovered the target on that RAT. Long-range conditions compare the
    realized closed neighborhoods over the devices currently holding a
    coordinator role, matching the graph the hierarchy reasons about.
    """
    out = []
    by_rat = {g.rat_id: g for g in graphs}

    def reachable(a, b, rat):
        return b is not None and by_rat[rat].has_edge(a, b)

    coords = frozenset(
        d for d, s in network.items() if s.role in COORDINATOR_ROLES
    )

    def n2_provider(dev):
        return (by_rat[2].neighbors(dev) & coords) | {dev}

    for rat in sorted(by_rat):
        graph = by_rat[rat]
        for i in sorted(network):
            state = network[i]
            for j in sorted(state.known[rat]):
                if j not in network or not graph.has_edge(i, j):
                    continue
                outcome = match_rule(state, network[j], rat, cfg, reachable,
                                     n2_provider)
                if outcome.matched and not outcome.is_noop(network):
                    out.append((i, j, rat))
    return out


_SHORT_ROWS = [
    ("ucm", "on", "-", "j<-ucm, c(j)<-c(i)"),
    ("cm", "on", "-", "j<-cm, c(j)<-c(i), m(j)<-m(i)"),
    ("cm", "master", "-", "c(i)<-j, m(i)<-j"),
    ("uch", "on", "-", "j<-{recruit}, c(j)<-i"),
    ("uch", "uch", "-", "j<-{recruit}, c(j)<-i"),
    ("uch", "ch", "-", "i<-cm, c(i)<-j, m(i)<-m(j)"),
    ("uch", "master", "-", "i<-cm, c(i)<-j, m(i)<-j"),
    ("ch", "on", "-", "j<-cm, c(j)<-i, m(j)<-m(i)"),
    ("ch", "ch", "m(i)==m(j)", "j<-cm, c(j)<-i"),
    ("ch", "master", "-", "i<-cm, c(i)<-j, m(i)<-j"),
    ("master", "any", "-", "j<-cm, c(j)<-i, m(j)<-i"),
]

_LONG_ROWS = [
    ("uch", "master", "N2[i] subseteq N2[j]", "i<-ch, c(i)<-j, m(i)<-j"),
    ("ch", "master", "N2[i] superset N2[j], m(i)==j",
     "i<-master, j<-ch, m(j)<-i"),
    ("master", "uch", "N2[i] supseteq N2[j]", "j<-ch, c(j)<-j, m(j)<-i"),
    ("master", "ch", "N2[i] subset N2[j], m(j)==i", "j<-ch, m(j)<-i"),
    ("master", "master", "N2[i] supseteq N2[j]", "j<-ch, m(j)<-i"),
    ("master", "master", "N2[i] subset N2[j]", "i<-ch, m(i)<-j"),
]


def dump_rule_tables(cfg: RuleConfig = RuleConfig()) -> str:
    """Human-readable decision-table dump, one line per rule row."""
    recruit = "uch" if cfg.literal_tables else "ucm"
    lines = ["# short-range rules (i initiates)"]
    for ri, rj, cond, changes in _SHORT_ROWS:
        lines.append(f"short | {ri:6} {rj:6} | {cond:24} | "
                     f"{changes.replace('{recruit}', recruit)}")
    lines.append("# long-range rules (i initiates)")
    for ri, rj, cond, changes in _LONG_ROWS:
        lines.append(f"long  | {ri:6} {rj:6} | {cond:24} | {changes}")
    return "\n".join(lines) + "\n"
