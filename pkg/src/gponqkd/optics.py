"""Wavelength-dependent losses, filter response and single-bounce reflections.

Splitters and couplers carry one implicit connector on every port, so
traversing one costs ``2 x connector + body``. Reflections are single-bounce:
light from an ONT travels up the tree, is reflected once, and comes back down
to Bob. Reflections below the splitter where the ONT and Bob branches meet go
back to the ONT only and are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .physics import MAX_WAVELENGTH_NM, MIN_WAVELENGTH_NM, BpfModel, Physics, dbm_to_w, w_to_dbm
from .topology import (
    BRANCHING,
    Channel,
    ChannelDirection,
    ChannelPlan,
    Connector,
    Coupler,
    Direction,
    Element,
    FiberSpan,
    Hop,
    Ont,
    OpticalPath,
    QkdRx,
    Splitter,
    Topology,
    TopologyError,
    path_between,
)


@dataclass(frozen=True)
class Atom:
    """Smallest lossy/reflective piece of a path (a fiber, a connector, a splitter body)."""

    node: str
    part: str  # "fiber" | "connector" | "port" | "body" | "terminal"
    loss_db: float
    return_loss_db: float | None = None
    rl_class: str | None = None  # "connector" | "splitter" | "coupler"


@dataclass(frozen=True)
class ReflectionPath:
    reflection_point: str
    interface: str
    forward_loss_db: float
    return_loss_db: float
    backward_loss_db: float
    wavelength_nm: float
    rl_class: str = "connector"

    @property
    def total_loss_db(self) -> float:
        return self.forward_loss_db + self.return_loss_db + self.backward_loss_db

    def with_return_loss(self, return_loss_db: float) -> ReflectionPath:
        return ReflectionPath(
            self.reflection_point,
            self.interface,
            self.forward_loss_db,
            return_loss_db,
            self.backward_loss_db,
            self.wavelength_nm,
            self.rl_class,
        )


def _check_wavelength(wavelength_nm: float) -> None:
    if not MIN_WAVELENGTH_NM <= wavelength_nm <= MAX_WAVELENGTH_NM:
        raise ValueError(
            f"wavelength {wavelength_nm} nm outside supported range "
            f"[{MIN_WAVELENGTH_NM:g}, {MAX_WAVELENGTH_NM:g}]"
        )


def _splitting_db(e: Element, branch: int | None, physics: Physics) -> float:
    if isinstance(e, Splitter):
        excess = physics.splitter_excess_db if e.excess_loss_db is None else e.excess_loss_db
        return 10.0 * math.log10(e.ports) + excess
    # coupler
    if branch is None:
        if abs(e.ratio[0] - e.ratio[1]) > 1e-12:
            raise ValueError("branch index required for an unbalanced coupler")
        branch = 0
    return -10.0 * math.log10(e.ratio[branch])


def element_loss_db(
    e: Element,
    wavelength_nm: float,
    direction: Direction = Direction.DOWN,
    *,
    physics: Physics | None = None,
    branch: int | None = None,
) -> float:
    """Loss of one element body, excluding the implicit port connectors.

    Passive splitters are symmetric, so ``direction`` only matters for a
    ``TURN`` (branch to branch), which pays the splitting loss twice.
    """
    _check_wavelength(wavelength_nm)
    physics = physics or Physics()
    if isinstance(e, FiberSpan):
        return physics.attenuation(e.fiber_type).db_per_km(wavelength_nm) * e.length_km
    if isinstance(e, Connector):
        return physics.connector_insertion_db if e.insertion_loss_db is None else e.insertion_loss_db
    if isinstance(e, BRANCHING):
        once = _splitting_db(e, branch, physics)
        return 2.0 * once if direction is Direction.TURN else once
    return 0.0


def _connector_rl(e: Connector | None, physics: Physics) -> float:
    if e is not None and e.return_loss_db is not None:
        return e.return_loss_db
    return physics.connector_return_loss_db


def _device_rl(e: Element, physics: Physics) -> tuple[float, str]:
    if isinstance(e, Splitter):
        rl = physics.splitter_return_loss_db if e.return_loss_db is None else e.return_loss_db
        return rl, "splitter"
    rl = physics.coupler_return_loss_db if e.return_loss_db is None else e.return_loss_db
    return rl, "coupler"


def interface_return_loss_db(e: Element, interface: str, physics: Physics) -> float:
    """Return loss of a reflective interface, element value first, then plant default."""
    if interface == "port":
        return physics.connector_return_loss_db
    if interface == "connector":
        return _connector_rl(e, physics)
    return _device_rl(e, physics)[0]


def hop_atoms(t: Topology, hop: Hop, wavelength_nm: float) -> list[Atom]:
    e = t.element(hop.node)
    ph = t.physics
    if isinstance(e, FiberSpan):
        return [Atom(hop.node, "fiber", element_loss_db(e, wavelength_nm, physics=ph))]
    if isinstance(e, Connector):
        il = element_loss_db(e, wavelength_nm, physics=ph)
        return [Atom(hop.node, "connector", il, interface_return_loss_db(e, "connector", ph), "connector")]
    if isinstance(e, BRANCHING):
        _check_wavelength(wavelength_nm)
        port = Atom(
            hop.node, "port", ph.connector_insertion_db, interface_return_loss_db(e, "port", ph), "connector"
        )
        rl, cls = interface_return_loss_db(e, "body", ph), _device_rl(e, ph)[1]
        if hop.direction is Direction.TURN:
            bodies = [
                Atom(hop.node, "body", _splitting_db(e, hop.port_in, ph), rl, cls),
                Atom(hop.node, "body", _splitting_db(e, hop.port_out, ph), None, None),
            ]
        else:
            branch = hop.port_in if hop.direction is Direction.UP else hop.port_out
            bodies = [Atom(hop.node, "body", _splitting_db(e, branch, ph), rl, cls)]
        return [port, *bodies, port]
    _check_wavelength(wavelength_nm)
    return [Atom(hop.node, "terminal", 0.0)]


def path_atoms(t: Topology, path: OpticalPath, wavelength_nm: float) -> list[Atom]:
    out: list[Atom] = []
    for hop in path.hops:
        out.extend(hop_atoms(t, hop, wavelength_nm))
    return out


def hops_loss_db(t: Topology, hops, wavelength_nm: float) -> float:
    return sum(a.loss_db for h in hops for a in hop_atoms(t, h, wavelength_nm))


def path_loss_db(t: Topology, a: str, b: str, wavelength_nm: float) -> float:
    """End-to-end loss between two nodes, implicit port connectors included."""
    _check_wavelength(wavelength_nm)
    path = path_between(t, a, b)
    return hops_loss_db(t, path.hops, wavelength_nm)


def receiver_bpf(t: Topology) -> BpfModel:
    bob = t.element(t.terminals.bob)
    if isinstance(bob, QkdRx) and bob.bpf is not None:
        return bob.bpf
    return t.physics.bpf


def bpf_transmission_db(f: BpfModel, wavelength_nm: float) -> float:
    """Attenuation (positive dB) of the receiver filter at ``wavelength_nm``."""
    detune = abs(wavelength_nm - f.center_nm) - f.passband_halfwidth_nm
    if detune <= 0:
        return f.passband_loss_db
    return min(f.floor_isolation_db, f.passband_loss_db + f.edge_slope_db_per_nm * detune)


def reflection_paths(t: Topology, ont: str, bob: str | None = None) -> list[ReflectionPath]:
    """Every single-bounce reflection of ``ont``'s light that reaches Bob.

    Losses are evaluated at the ONT wavelength and stop at Bob's input,
    before the receiver filter.
    """
    bob = bob or t.terminals.bob
    e = t.element(ont)
    if not isinstance(e, Ont):
        raise TopologyError(f"{ont} is not an ONT")
    lam = e.wavelength_nm

    to_bob = path_between(t, ont, bob)
    turn = next((i for i, h in enumerate(to_bob.hops) if h.direction is Direction.TURN), None)
    if turn is None:
        return []
    apex = to_bob.hops[turn]
    apex_el = t.element(apex.node)
    ph = t.physics

    # descending leg from the apex common port down to Bob
    down_atoms = [
        Atom(apex.node, "body", _splitting_db(apex_el, apex.port_out, ph)),
        Atom(apex.node, "port", ph.connector_insertion_db),
    ]
    for h in to_bob.hops[turn + 1 :]:
        down_atoms.extend(hop_atoms(t, h, lam))
    down_db = sum(a.loss_db for a in down_atoms)

    up_hops = list(to_bob.hops[:turn]) + [Hop(apex.node, Direction.UP, apex.port_in, None)]
    up_hops += [h for h in path_between(t, apex.node, t.root).hops]
    up = [a for h in up_hops for a in hop_atoms(t, h, lam)]

    apex_body = next(
        i for i, a in enumerate(up) if a.node == apex.node and a.part == "body"
    )
    out: list[ReflectionPath] = []
    prefix = [0.0]
    for a in up:
        prefix.append(prefix[-1] + a.loss_db)
    for k in range(apex_body, len(up)):
        a = up[k]
        if a.return_loss_db is None:
            continue
        if k == apex_body:
            # cross-port reflection inside the splitter where the branches meet
            fwd = prefix[k + 1]
            back = down_db
        else:
            fwd = prefix[k]
            back = (prefix[k] - prefix[apex_body + 1]) + down_db
        out.append(
            ReflectionPath(a.node, a.part, fwd, a.return_loss_db, back, lam, a.rl_class or "connector")
        )
    return out


def reflected_power_dbm(paths: list[ReflectionPath], launch_dbm: float) -> float:
    """Total power at Bob's input from all reflection paths of one source."""
    if launch_dbm == -math.inf:
        return -math.inf
    total = sum(dbm_to_w(launch_dbm - p.total_loss_db) for p in paths)
    return w_to_dbm(total)


def _channel_source(t: Topology, ch: Channel) -> str:
    if ch.direction is ChannelDirection.UPSTREAM:
        if ch.source is None:
            raise TopologyError(f"{ch.name} has no source ONT")
        return ch.source
    return t.root


def received_power_dbm(t: Topology, plan: ChannelPlan, channel: Channel, sink: str) -> float:
    """Launch power minus path loss (and Bob's filter when the sink is Bob)."""
    if channel.launch_power_dbm is None:
        raise ValueError(f"{channel.name} has no launch power")
    if channel not in plan.channels:
        raise ValueError(f"{channel.name} is not part of the channel plan")
    src = _channel_source(t, channel)
    power = channel.launch_power_dbm - path_loss_db(t, src, sink, channel.wavelength_nm)
    if sink == t.terminals.bob:
        power -= bpf_transmission_db(receiver_bpf(t), channel.wavelength_nm)
    return power
