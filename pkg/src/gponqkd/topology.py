"""The optical distribution tree: element kinds, validation and path finding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

from .physics import FIBER_TYPES, BpfModel, Physics

SPLITTER_PORTS = (2, 4, 8, 16, 32, 64)
ONT_BAND_NM = (1260.0, 1360.0)


class TopologyError(ValueError):
    """A topology document or object that violates the model's invariants."""

    def __init__(self, message: str, violations: list[Violation] | None = None):
        super().__init__(message)
        self.violations = violations or []


class UnknownNodeError(KeyError):
    def __str__(self) -> str:
        return f"unknown node {self.args[0]!r}"


class Direction(str, Enum):
    UP = "up"  # toward the root (OLT head-end)
    DOWN = "down"
    TURN = "turn"  # branch-to-branch through a splitter at the path apex


@dataclass(frozen=True)
class OltHead:
    pass


@dataclass(frozen=True)
class QkdTx:
    pass


@dataclass(frozen=True)
class QkdRx:
    bpf: BpfModel | None = None


@dataclass(frozen=True)
class FiberSpan:
    length_km: float
    fiber_type: str = "G652D"


@dataclass(frozen=True)
class Splitter:
    ports: int
    excess_loss_db: float | None = None
    return_loss_db: float | None = None


@dataclass(frozen=True)
class Coupler:
    ratio: tuple[float, float] = (0.5, 0.5)
    return_loss_db: float | None = None


@dataclass(frozen=True)
class Connector:
    insertion_loss_db: float | None = None
    return_loss_db: float | None = None


@dataclass(frozen=True)
class Ont:
    wavelength_nm: float
    nominal_power_dbm: float = 0.0
    power_class: str = "B+"


Element = OltHead | QkdTx | QkdRx | FiberSpan | Splitter | Coupler | Connector | Ont
BRANCHING = (Splitter, Coupler)


@dataclass(frozen=True)
class Violation:
    node: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.node}: {self.rule}: {self.message}"


@dataclass(frozen=True)
class Terminals:
    alice: str
    bob: str
    onts: tuple[str, ...] = ()


@dataclass(frozen=True)
class Hop:
    """One element on a path.

    ``port_in``/``port_out`` are branch indices (document order of children)
    for splitters and couplers, ``None`` meaning the common port.
    """

    node: str
    direction: Direction
    port_in: int | None = None
    port_out: int | None = None

    def reversed(self) -> Hop:
        flipped = {Direction.UP: Direction.DOWN, Direction.DOWN: Direction.UP}.get(
            self.direction, Direction.TURN
        )
        return Hop(self.node, flipped, self.port_out, self.port_in)


@dataclass(frozen=True)
class OpticalPath:
    source: str
    sink: str
    hops: tuple[Hop, ...] = ()

    def reversed(self) -> OpticalPath:
        return OpticalPath(self.sink, self.source, tuple(h.reversed() for h in reversed(self.hops)))

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(h.node for h in self.hops)


class Role(str, Enum):
    QUANTUM = "quantum"
    DOWNSTREAM = "downstream"
    UPSTREAM = "upstream"
    SERVICE = "service"


class ChannelDirection(str, Enum):
    DOWNSTREAM = "downstream"
    UPSTREAM = "upstream"


@dataclass(frozen=True)
class Channel:
    role: Role
    wavelength_nm: float
    launch_power_dbm: float | None = None
    direction: ChannelDirection = ChannelDirection.DOWNSTREAM
    source: str | None = None  # ONT id for upstream channels

    @property
    def name(self) -> str:
        if self.source:
            return f"{self.role.value}:{self.source}"
        return f"{self.role.value}:{self.wavelength_nm:g}"


@dataclass(frozen=True)
class ChannelPlan:
    channels: tuple[Channel, ...]

    @property
    def quantum(self) -> Channel:
        return next(c for c in self.channels if c.role is Role.QUANTUM)

    @property
    def classical(self) -> tuple[Channel, ...]:
        return tuple(c for c in self.channels if c.role is not Role.QUANTUM)

    def upstream_of(self, ont: str) -> Channel | None:
        return next((c for c in self.channels if c.role is Role.UPSTREAM and c.source == ont), None)

    def problems(self) -> list[Violation]:
        out = []
        quantum = [c for c in self.channels if c.role is Role.QUANTUM]
        if len(quantum) != 1:
            out.append(Violation("channels", "quantum-count", "exactly one quantum channel required"))
        sources = [c.source for c in self.channels if c.role is Role.UPSTREAM]
        if None in sources:
            out.append(Violation("channels", "upstream-source", "upstream channel needs a source ONT"))
        elif len(set(sources)) != len(sources):
            out.append(Violation("channels", "upstream-source", "upstream sources must be distinct"))
        for c in self.channels:
            if c.role is not Role.QUANTUM and c.launch_power_dbm is None:
                out.append(Violation("channels", "launch-power", f"{c.name} has no launch power"))
            if c.role is Role.UPSTREAM and c.direction is not ChannelDirection.UPSTREAM:
                out.append(Violation("channels", "direction", f"{c.name} must travel upstream"))
        return out


@dataclass(frozen=True)
class Topology:
    nodes: dict[str, Element]
    edges: tuple[tuple[str, str], ...]
    terminals: Terminals
    physics: Physics = field(default_factory=Physics)

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for parent, child in self.edges:
            out.setdefault(parent, []).append(child)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def parent(self) -> dict[str, str]:
        # first parent wins; validate() reports the rest
        out: dict[str, str] = {}
        for p, c in self.edges:
            out.setdefault(c, p)
        return out

    @property
    def root(self) -> str:
        return self.terminals.alice

    def element(self, node: str) -> Element:
        try:
            return self.nodes[node]
        except KeyError:
            raise UnknownNodeError(node) from None

    def ancestors(self, node: str) -> list[str]:
        """``node`` followed by its ancestors up to the root."""
        self.element(node)
        chain = [node]
        seen = {node}
        while chain[-1] in self.parent:
            nxt = self.parent[chain[-1]]
            if nxt in seen:
                raise TopologyError(f"cycle through {nxt}")
            seen.add(nxt)
            chain.append(nxt)
        return chain

    def branch_index(self, node: str, child: str) -> int:
        return self.children[node].index(child)

    def with_physics(self, physics: Physics) -> Topology:
        return Topology(self.nodes, self.edges, self.terminals, physics)


def path_between(t: Topology, a: str, b: str) -> OpticalPath:
    """The unique tree path from ``a`` to ``b``, endpoints excluded."""
    up_a = t.ancestors(a)
    up_b = t.ancestors(b)
    if a == b:
        return OpticalPath(a, b)
    in_b = set(up_b)
    lca = next((n for n in up_a if n in in_b), None)
    if lca is None:
        raise TopologyError(f"{a} and {b} are not connected")
    rise = up_a[: up_a.index(lca)]
    fall = list(reversed(up_b[: up_b.index(lca)]))

    hops: list[Hop] = []
    for below, node in zip(rise, rise[1:]):
        port = t.branch_index(node, below) if isinstance(t.nodes[node], BRANCHING) else None
        hops.append(Hop(node, Direction.UP, port, None))
    if lca not in (a, b):
        hops.append(
            Hop(lca, Direction.TURN, t.branch_index(lca, rise[-1]), t.branch_index(lca, fall[0]))
        )
    for node, below in zip(fall, fall[1:]):
        port = t.branch_index(node, below) if isinstance(t.nodes[node], BRANCHING) else None
        hops.append(Hop(node, Direction.DOWN, None, port))
    return OpticalPath(a, b, tuple(hops))


def _element_problems(e: Element) -> list[tuple[str, str]]:
    out = []
    if isinstance(e, FiberSpan):
        if not (e.length_km > 0 and math.isfinite(e.length_km)):
            out.append(("fiber-length", "length_km must be > 0"))
        if e.fiber_type not in FIBER_TYPES:
            out.append(("fiber-type", f"fiber_type must be one of {FIBER_TYPES}"))
    elif isinstance(e, Splitter):
        if e.ports not in SPLITTER_PORTS:
            out.append(("splitter-ports", f"ports must be one of {SPLITTER_PORTS}"))
        if e.excess_loss_db is not None and e.excess_loss_db < 0:
            out.append(("splitter-excess", "excess_loss_db must be >= 0"))
        if e.return_loss_db is not None and e.return_loss_db <= 0:
            out.append(("return-loss", "return_loss_db must be > 0"))
    elif isinstance(e, Coupler):
        if len(e.ratio) != 2 or any(r <= 0 for r in e.ratio) or abs(sum(e.ratio) - 1.0) > 1e-9:
            out.append(("coupler-ratio", "ratio must be two positive shares summing to 1"))
        if e.return_loss_db is not None and e.return_loss_db <= 0:
            out.append(("return-loss", "return_loss_db must be > 0"))
    elif isinstance(e, Connector):
        if e.insertion_loss_db is not None and e.insertion_loss_db < 0:
            out.append(("connector-loss", "insertion_loss_db must be >= 0"))
        if e.return_loss_db is not None and e.return_loss_db <= 0:
            out.append(("return-loss", "return_loss_db must be > 0"))
    elif isinstance(e, Ont):
        lo, hi = ONT_BAND_NM
        if not lo <= e.wavelength_nm <= hi:
            out.append(("ont-wavelength", f"wavelength_nm must be within [{lo:g}, {hi:g}]"))
        if e.power_class not in ("B+", "C+"):
            out.append(("ont-class", "power_class must be B+ or C+"))
    elif isinstance(e, QkdRx) and e.bpf is not None:
        out.extend(("bpf", p) for p in e.bpf.problems())
    return out


def validate(t: Topology) -> list[Violation]:
    """Check every structural and per-element invariant; empty list means valid."""
    v: list[Violation] = []
    nodes = t.nodes

    for node, e in nodes.items():
        for rule, msg in _element_problems(e):
            v.append(Violation(node, rule, msg))

    parents: dict[str, list[str]] = {}
    for p, c in t.edges:
        for end in (p, c):
            if end not in nodes:
                v.append(Violation(end, "unknown-node", "edge references an undeclared node"))
        if p == c:
            v.append(Violation(p, "self-loop", "edge from a node to itself"))
        parents.setdefault(c, []).append(p)
    for c, ps in parents.items():
        if len(ps) > 1:
            v.append(Violation(c, "not-a-tree", f"multiple parents: {', '.join(ps)}"))
    if len(set(t.edges)) != len(t.edges):
        v.append(Violation("edges", "duplicate-edge", "the same edge is listed twice"))

    root = t.terminals.alice
    if root not in nodes:
        v.append(Violation(root, "unknown-terminal", "alice is not a declared node"))
        return v
    if root in parents:
        v.append(Violation(root, "root", "alice/OLT head must be the root (no parent)"))
    if not isinstance(nodes[root], (OltHead, QkdTx)):
        v.append(Violation(root, "root-kind", "root must be an OLT head or QKD transmitter"))

    # reachability and cycles from the root
    children = t.children
    seen = {root}
    stack = [root]
    while stack:
        n = stack.pop()
        for c in children.get(n, ()):
            if c in seen:
                v.append(Violation(c, "cycle", "node reached twice from the root"))
                continue
            seen.add(c)
            stack.append(c)
    for n in nodes:
        if n not in seen:
            v.append(Violation(n, "disconnected", "not reachable from the root"))

    for n, e in nodes.items():
        kids = children.get(n, ())
        if isinstance(e, Splitter) and len(kids) > e.ports:
            v.append(
                Violation(n, "over-subscribed", f"{len(kids)} children on a 1:{e.ports} splitter")
            )
        elif isinstance(e, Coupler) and len(kids) > 2:
            v.append(Violation(n, "over-subscribed", f"{len(kids)} children on a 1:2 coupler"))
        elif isinstance(e, (FiberSpan, Connector, OltHead, QkdTx)) and len(kids) > 1:
            v.append(Violation(n, "branching", "only splitters and couplers may fan out"))
        elif isinstance(e, (Ont, QkdRx)) and kids:
            v.append(Violation(n, "leaf", "ONTs and the QKD receiver must be leaves"))
        if isinstance(e, (OltHead, QkdTx)) and n != root:
            v.append(Violation(n, "root-kind", "head-end elements may only appear at the root"))

    bob = t.terminals.bob
    if bob not in nodes:
        v.append(Violation(bob, "unknown-terminal", "bob is not a declared node"))
    elif not isinstance(nodes[bob], QkdRx):
        v.append(Violation(bob, "terminal-kind", "bob must be a QKD receiver"))
    if len(set(t.terminals.onts)) != len(t.terminals.onts):
        v.append(Violation("terminals", "duplicate-ont", "an ONT is listed twice"))
    for o in t.terminals.onts:
        if o not in nodes:
            v.append(Violation(o, "unknown-terminal", "ONT terminal is not a declared node"))
        elif not isinstance(nodes[o], Ont):
            v.append(Violation(o, "terminal-kind", "ONT terminal must be an ONT element"))
    for n, e in nodes.items():
        if isinstance(e, Ont) and n not in t.terminals.onts:
            v.append(Violation(n, "terminal-missing", "ONT not listed under terminals.onts"))
        if isinstance(e, QkdRx) and n != bob:
            v.append(Violation(n, "terminal-missing", "only one QKD receiver is supported"))
    return v
