"""Scenario documents: one JSON file describing plant, channels and physics.

Top-level keys: ``nodes``, ``edges``, ``terminals``, ``channels`` (required)
and ``physics``, ``gpon``, ``qkd``, ``scenario`` (optional). Unknown keys at
any level are rejected so that typos fail loudly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .gpon import DbaLoad, PlsuPolicy
from .physics import (
    FIBER_TYPES,
    AttenuationModel,
    BpfModel,
    DetectorParams,
    Physics,
    RamanModel,
)
from .qkd import DecoyParams
from .topology import (
    Channel,
    ChannelDirection,
    ChannelPlan,
    Connector,
    Coupler,
    FiberSpan,
    OltHead,
    Ont,
    QkdRx,
    QkdTx,
    Role,
    Splitter,
    Terminals,
    Topology,
    TopologyError,
    validate,
)


class DocumentError(TopologyError):
    def __init__(self, message: str, locus: str = "", violations=None):
        super().__init__(f"{locus}: {message}" if locus else message, violations)
        self.locus = locus


@dataclass(frozen=True)
class Toggles:
    plsu: bool = True
    raman: bool = True
    reflections: bool = True


@dataclass(frozen=True)
class RunSettings:
    active_onts: tuple[str, ...] | None = None  # None: every ONT terminal
    duration_s: float = 60 * 3600.0
    block_s: float = 60.0
    seed: int = 0
    toggles: Toggles = field(default_factory=Toggles)


@dataclass(frozen=True)
class Document:
    topology: Topology
    plan: ChannelPlan
    plsu: PlsuPolicy = field(default_factory=PlsuPolicy)
    dba: DbaLoad = field(default_factory=DbaLoad)
    qkd: DecoyParams = field(default_factory=DecoyParams)
    run: RunSettings = field(default_factory=RunSettings)

    @property
    def physics(self) -> Physics:
        return self.topology.physics

    def effective_plsu(self) -> PlsuPolicy:
        """PLSu policy after the physics override and the run toggle."""
        if not self.run.toggles.plsu:
            return PlsuPolicy.off()
        ph = self.physics
        if ph.plsu_db_per_ont is not None and self.plsu.mode == "continuous":
            return replace(self.plsu, db_per_added_ont=ph.plsu_db_per_ont)
        return self.plsu

    def effective_qkd(self) -> DecoyParams:
        return replace(self.qkd, rate_scale=self.physics.rate_scale)

    def active(self, count: int | None = None) -> tuple[str, ...]:
        onts = self.topology.terminals.onts
        if count is not None:
            if not 0 <= count <= len(onts):
                raise ValueError(f"{count} ONTs requested but the plant has {len(onts)}")
            return onts[:count]
        return self.run.active_onts if self.run.active_onts is not None else onts

    def with_physics(self, physics: Physics) -> Document:
        return replace(self, topology=self.topology.with_physics(physics))


# --- field readers -----------------------------------------------------------


def _obj(value: Any, locus: str) -> dict:
    if not isinstance(value, dict):
        raise DocumentError("expected an object", locus)
    return value


def _only(obj: dict, allowed: set[str], locus: str) -> None:
    extra = sorted(set(obj) - allowed)
    if extra:
        where = f"{locus}.{extra[0]}" if locus else extra[0]
        raise DocumentError("unknown key", where)


def _num(obj: dict, key: str, locus: str, default: Any = ..., *, integer: bool = False):
    if key not in obj:
        if default is ...:
            raise DocumentError("missing required field", f"{locus}.{key}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DocumentError("expected a number", f"{locus}.{key}")
    if integer:
        if int(v) != v:
            raise DocumentError("expected an integer", f"{locus}.{key}")
        return int(v)
    if not math.isfinite(v):
        raise DocumentError("expected a finite number", f"{locus}.{key}")
    return float(v)


def _str(obj: dict, key: str, locus: str, default: Any = ...) -> str:
    if key not in obj:
        if default is ...:
            raise DocumentError("missing required field", f"{locus}.{key}")
        return default
    v = obj[key]
    if not isinstance(v, str):
        raise DocumentError("expected a string", f"{locus}.{key}")
    return v


def _bool(obj: dict, key: str, locus: str, default: bool) -> bool:
    v = obj.get(key, default)
    if not isinstance(v, bool):
        raise DocumentError("expected true/false", f"{locus}.{key}")
    return v


def _dataclass_block(cls, obj: dict, locus: str, base=None):
    base = base if base is not None else cls()
    names = {f.name for f in fields(cls)}
    _only(obj, names, locus)
    changes = {k: _num(obj, k, locus) for k in obj}
    try:
        return replace(base, **changes)
    except ValueError as exc:
        raise DocumentError(str(exc), locus) from None


# --- nodes ---------------------------------------------------------------------

_NODE_KEYS = {
    "olt": set(),
    "qkd_tx": set(),
    "qkd_rx": {"bpf"},
    "fiber": {"length_km", "fiber_type"},
    "splitter": {"ports", "excess_loss_db", "return_loss_db"},
    "coupler": {"ratio", "return_loss_db"},
    "connector": {"insertion_loss_db", "return_loss_db"},
    "ont": {"wavelength_nm", "nominal_power_dbm", "power_class"},
}


def _parse_node(raw: Any, locus: str, physics: Physics):
    obj = _obj(raw, locus)
    kind = _str(obj, "kind", locus)
    if kind not in _NODE_KEYS:
        raise DocumentError(f"unknown kind {kind!r}", f"{locus}.kind")
    _only(obj, _NODE_KEYS[kind] | {"kind"}, locus)
    opt = lambda k: _num(obj, k, locus, None)  # noqa: E731
    if kind == "olt":
        return OltHead()
    if kind == "qkd_tx":
        return QkdTx()
    if kind == "qkd_rx":
        bpf = None
        if "bpf" in obj:
            bpf = _dataclass_block(BpfModel, _obj(obj["bpf"], f"{locus}.bpf"), f"{locus}.bpf", physics.bpf)
        return QkdRx(bpf)
    if kind == "fiber":
        ft = _str(obj, "fiber_type", locus, "G652D")
        if ft not in FIBER_TYPES:
            raise DocumentError(f"fiber_type must be one of {FIBER_TYPES}", f"{locus}.fiber_type")
        return FiberSpan(_num(obj, "length_km", locus), ft)
    if kind == "splitter":
        return Splitter(_num(obj, "ports", locus, integer=True), opt("excess_loss_db"), opt("return_loss_db"))
    if kind == "coupler":
        ratio = obj.get("ratio", [0.5, 0.5])
        if (
            not isinstance(ratio, list)
            or len(ratio) != 2
            or not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in ratio)
        ):
            raise DocumentError("expected two numbers", f"{locus}.ratio")
        return Coupler((float(ratio[0]), float(ratio[1])), opt("return_loss_db"))
    if kind == "connector":
        return Connector(opt("insertion_loss_db"), opt("return_loss_db"))
    return Ont(
        _num(obj, "wavelength_nm", locus),
        _num(obj, "nominal_power_dbm", locus, 0.0),
        _str(obj, "power_class", locus, "B+"),
    )


def _node_to_dict(e) -> dict:
    if isinstance(e, OltHead):
        return {"kind": "olt"}
    if isinstance(e, QkdTx):
        return {"kind": "qkd_tx"}
    if isinstance(e, QkdRx):
        d = {"kind": "qkd_rx"}
        if e.bpf is not None:
            d["bpf"] = _dataclass_dict(e.bpf)
        return d
    if isinstance(e, FiberSpan):
        return {"kind": "fiber", "length_km": e.length_km, "fiber_type": e.fiber_type}
    if isinstance(e, Splitter):
        d = {"kind": "splitter", "ports": e.ports}
    elif isinstance(e, Coupler):
        d = {"kind": "coupler", "ratio": list(e.ratio)}
    elif isinstance(e, Connector):
        d = {"kind": "connector"}
    else:
        return {
            "kind": "ont",
            "wavelength_nm": e.wavelength_nm,
            "nominal_power_dbm": e.nominal_power_dbm,
            "power_class": e.power_class,
        }
    for k in ("excess_loss_db", "insertion_loss_db", "return_loss_db"):
        v = getattr(e, k, None)
        if v is not None:
            d[k] = v
    return d


def _dataclass_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


# --- physics -----------------------------------------------------------------

_PHYSICS_SCALARS = (
    "splitter_excess_db",
    "connector_insertion_db",
    "connector_return_loss_db",
    "splitter_return_loss_db",
    "coupler_return_loss_db",
    "rate_scale",
)


def parse_physics(raw: Any, locus: str = "physics", base: Physics | None = None) -> Physics:
    obj = _obj(raw, locus)
    _only(
        obj,
        set(_PHYSICS_SCALARS) | {"alpha_db_per_km", "bpf", "raman_rho", "detector", "plsu_db_per_ont"},
        locus,
    )
    ph = base or Physics()
    changes: dict[str, Any] = {k: _num(obj, k, locus) for k in _PHYSICS_SCALARS if k in obj}
    if "plsu_db_per_ont" in obj:
        changes["plsu_db_per_ont"] = _num(obj, "plsu_db_per_ont", locus)
    if "alpha_db_per_km" in obj:
        alpha = dict(ph.alpha)
        amap = _obj(obj["alpha_db_per_km"], f"{locus}.alpha_db_per_km")
        _only(amap, set(FIBER_TYPES), f"{locus}.alpha_db_per_km")
        for ft, table in amap.items():
            tloc = f"{locus}.alpha_db_per_km.{ft}"
            table = _obj(table, tloc)
            try:
                anchors = tuple(sorted((float(k), _num(table, k, tloc)) for k in table))
                alpha[ft] = AttenuationModel(anchors)
            except ValueError as exc:
                raise DocumentError(str(exc), tloc) from None
        changes["alpha"] = alpha
    if "bpf" in obj:
        changes["bpf"] = _dataclass_block(BpfModel, _obj(obj["bpf"], f"{locus}.bpf"), f"{locus}.bpf", ph.bpf)
    if "detector" in obj:
        changes["detector"] = _dataclass_block(
            DetectorParams, _obj(obj["detector"], f"{locus}.detector"), f"{locus}.detector", ph.detector
        )
    if "raman_rho" in obj:
        rr = obj["raman_rho"]
        rloc = f"{locus}.raman_rho"
        try:
            if isinstance(rr, (int, float)) and not isinstance(rr, bool):
                changes["raman"] = RamanModel.flat(float(rr))
            elif isinstance(rr, list):
                changes["raman"] = RamanModel(tuple((float(a), float(b)) for a, b in rr))
            else:
                raise DocumentError("expected a number or a list of [offset_nm, rho] pairs", rloc)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DocumentError):
                raise
            raise DocumentError(str(exc), rloc) from None
    problems = changes.get("bpf", ph.bpf).problems() + changes.get("detector", ph.detector).problems()
    if problems:
        raise DocumentError(problems[0], locus)
    return replace(ph, **changes)


def physics_to_dict(ph: Physics) -> dict:
    d: dict[str, Any] = {
        "alpha_db_per_km": {
            ft: {repr(lam): a for lam, a in model.anchors} for ft, model in ph.alpha.items()
        }
    }
    for k in _PHYSICS_SCALARS:
        d[k] = getattr(ph, k)
    d["bpf"] = _dataclass_dict(ph.bpf)
    d["detector"] = _dataclass_dict(ph.detector)
    d["raman_rho"] = ph.raman.anchors[0][1] if ph.raman.is_flat() else [list(a) for a in ph.raman.anchors]
    if ph.plsu_db_per_ont is not None:
        d["plsu_db_per_ont"] = ph.plsu_db_per_ont
    return d


# --- gpon / qkd / scenario blocks ----------------------------------------------


def _parse_gpon(raw: Any, onts: tuple[str, ...]) -> tuple[PlsuPolicy, DbaLoad]:
    obj = _obj(raw, "gpon")
    _only(obj, {"plsu", "dba"}, "gpon")
    plsu = PlsuPolicy()
    if "plsu" in obj:
        p = _obj(obj["plsu"], "gpon.plsu")
        loc = "gpon.plsu"
        _only(p, {"mode", "db_per_added_ont", "reference_count", "levels_dbm", "thresholds"}, loc)
        try:
            plsu = PlsuPolicy(
                mode=_str(p, "mode", loc, "continuous"),
                db_per_added_ont=_num(p, "db_per_added_ont", loc, 0.6),
                reference_count=_num(p, "reference_count", loc, 4, integer=True),
                levels_dbm=tuple(float(x) for x in p.get("levels_dbm", ())),
                thresholds=tuple(int(x) for x in p.get("thresholds", ())),
            )
        except (TypeError, ValueError) as exc:
            raise DocumentError(str(exc), loc) from None
    dba = DbaLoad()
    if "dba" in obj:
        b = _obj(obj["dba"], "gpon.dba")
        loc = "gpon.dba"
        _only(b, {"mode", "duty", "n_provisioned"}, loc)
        duty = _obj(b.get("duty", {}), f"{loc}.duty")
        for k in duty:
            if k not in onts:
                raise DocumentError("duty share for an unknown ONT", f"{loc}.duty.{k}")
        try:
            dba = DbaLoad(
                mode=_str(b, "mode", loc, "equal"),
                duty={k: _num(duty, k, f"{loc}.duty") for k in duty},
                n_provisioned=_num(b, "n_provisioned", loc, None, integer=True),
            )
        except ValueError as exc:
            raise DocumentError(str(exc), loc) from None
    if dba.mode == "provisioned" and dba.n_provisioned is None:
        dba = replace(dba, n_provisioned=len(onts))
    return plsu, dba


def _parse_run(raw: Any, onts: tuple[str, ...]) -> RunSettings:
    obj = _obj(raw, "scenario")
    loc = "scenario"
    _only(obj, {"active_onts", "duration_s", "block_s", "seed", "toggles"}, loc)
    active = None
    if "active_onts" in obj:
        a = obj["active_onts"]
        if isinstance(a, int) and not isinstance(a, bool):
            if not 0 <= a <= len(onts):
                raise DocumentError(f"plant has only {len(onts)} ONTs", f"{loc}.active_onts")
            active = onts[:a]
        elif isinstance(a, list) and all(isinstance(x, str) for x in a):
            unknown = [x for x in a if x not in onts]
            if unknown:
                raise DocumentError(f"unknown ONT {unknown[0]!r}", f"{loc}.active_onts")
            active = tuple(a)
        else:
            raise DocumentError("expected a count or a list of ONT ids", f"{loc}.active_onts")
    toggles = Toggles()
    if "toggles" in obj:
        t = _obj(obj["toggles"], f"{loc}.toggles")
        _only(t, {"plsu", "raman", "reflections"}, f"{loc}.toggles")
        toggles = Toggles(*(_bool(t, k, f"{loc}.toggles", True) for k in ("plsu", "raman", "reflections")))
    seed = _num(obj, "seed", loc, 0, integer=True)
    if not 0 <= seed < 2**64:
        raise DocumentError("seed must be a 64-bit unsigned integer", f"{loc}.seed")
    run = RunSettings(
        active,
        _num(obj, "duration_s", loc, RunSettings.duration_s),
        _num(obj, "block_s", loc, RunSettings.block_s),
        seed,
        toggles,
    )
    check_run(run)
    return run


def check_run(run: RunSettings) -> None:
    if run.block_s <= 0 or run.duration_s <= 0:
        raise DocumentError("duration_s and block_s must be positive", "scenario")
    if run.block_s > run.duration_s:
        raise DocumentError("block_s must not exceed duration_s", "scenario.block_s")


# --- channels ------------------------------------------------------------------


def _parse_channels(raw: Any, nodes: dict) -> ChannelPlan:
    if not isinstance(raw, list):
        raise DocumentError("expected a list", "channels")
    out = []
    for i, c in enumerate(raw):
        loc = f"channels[{i}]"
        c = _obj(c, loc)
        _only(c, {"role", "wavelength_nm", "launch_power_dbm", "direction", "source"}, loc)
        try:
            role = Role(_str(c, "role", loc))
        except ValueError:
            raise DocumentError(f"role must be one of {[r.value for r in Role]}", f"{loc}.role") from None
        default_dir = "upstream" if role is Role.UPSTREAM else "downstream"
        try:
            direction = ChannelDirection(_str(c, "direction", loc, default_dir))
        except ValueError:
            raise DocumentError("direction must be upstream or downstream", f"{loc}.direction") from None
        source = _str(c, "source", loc, None)
        wl = _num(c, "wavelength_nm", loc, None)
        launch = _num(c, "launch_power_dbm", loc, None)
        if role is Role.UPSTREAM:
            if source is None or not isinstance(nodes.get(source), Ont):
                raise DocumentError("upstream channel needs an ONT source", f"{loc}.source")
            ont = nodes[source]
            wl = ont.wavelength_nm if wl is None else wl
            launch = ont.nominal_power_dbm if launch is None else launch
        elif direction is ChannelDirection.UPSTREAM:
            raise DocumentError("only ONT upstream channels may travel upstream", f"{loc}.direction")
        elif source is not None:
            raise DocumentError("only upstream channels have a source", f"{loc}.source")
        if role is Role.QUANTUM:
            wl = 1310.0 if wl is None else wl
            if launch is not None:
                raise DocumentError("the quantum channel has no launch power", f"{loc}.launch_power_dbm")
        if wl is None:
            raise DocumentError("missing required field", f"{loc}.wavelength_nm")
        out.append(Channel(role, wl, launch, direction, source))
    # ONTs without an explicit upstream channel transmit at their nominal power
    listed = {c.source for c in out if c.role is Role.UPSTREAM}
    for node, e in nodes.items():
        if isinstance(e, Ont) and node not in listed:
            out.append(
                Channel(Role.UPSTREAM, e.wavelength_nm, e.nominal_power_dbm, ChannelDirection.UPSTREAM, node)
            )
    return ChannelPlan(tuple(out))


def _channel_to_dict(c: Channel) -> dict:
    d: dict[str, Any] = {"role": c.role.value, "wavelength_nm": c.wavelength_nm}
    if c.launch_power_dbm is not None:
        d["launch_power_dbm"] = c.launch_power_dbm
    d["direction"] = c.direction.value
    if c.source is not None:
        d["source"] = c.source
    return d


# --- entry points ----------------------------------------------------------------


def parse_document(text: str, *, check: bool = True) -> Document:
    """Parse a scenario document; with ``check`` any invariant violation raises."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    top = _obj(raw, "document")
    _only(top, {"nodes", "edges", "terminals", "channels", "physics", "gpon", "qkd", "scenario"}, "")
    for key in ("nodes", "edges", "terminals", "channels"):
        if key not in top:
            raise DocumentError("missing required section", key)

    physics = parse_physics(top["physics"]) if "physics" in top else Physics()

    nodes_raw = _obj(top["nodes"], "nodes")
    nodes = {nid: _parse_node(n, f"nodes.{nid}", physics) for nid, n in nodes_raw.items()}

    edges_raw = top["edges"]
    if not isinstance(edges_raw, list):
        raise DocumentError("expected a list of [parent, child] pairs", "edges")
    edges = []
    for i, e in enumerate(edges_raw):
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, str) for x in e)):
            raise DocumentError("expected [parent, child]", f"edges[{i}]")
        edges.append((e[0], e[1]))

    term = _obj(top["terminals"], "terminals")
    _only(term, {"alice", "bob", "onts"}, "terminals")
    onts_raw = term.get("onts")
    if onts_raw is None:
        onts = tuple(n for n, e in nodes.items() if isinstance(e, Ont))
    elif isinstance(onts_raw, list) and all(isinstance(x, str) for x in onts_raw):
        onts = tuple(onts_raw)
    else:
        raise DocumentError("expected a list of node ids", "terminals.onts")
    terminals = Terminals(_str(term, "alice", "terminals"), _str(term, "bob", "terminals"), onts)

    topology = Topology(nodes, tuple(edges), terminals, physics)
    plan = _parse_channels(top["channels"], nodes)

    plsu, dba = _parse_gpon(top.get("gpon", {}), onts)
    qkd = DecoyParams()
    if "qkd" in top:
        qobj = _obj(top["qkd"], "qkd")
        _only(qobj, {f.name for f in fields(DecoyParams)} - {"rate_scale"}, "qkd")
        qkd = _dataclass_block(DecoyParams, qobj, "qkd")
    run = _parse_run(top.get("scenario", {}), onts)

    doc = Document(topology, plan, plsu, dba, qkd, run)
    if check:
        violations = validate(topology) + plan.problems()
        if violations:
            raise DocumentError(
                "; ".join(str(v) for v in violations), violations[0].node, violations
            )
    return doc


def parse_topology(text: str) -> tuple[Topology, ChannelPlan]:
    doc = parse_document(text)
    return doc.topology, doc.plan


def load_document(path: str | Path, *, check: bool = True) -> Document:
    return parse_document(Path(path).read_text(encoding="utf-8"), check=check)


def document_to_dict(doc: Document) -> dict:
    t = doc.topology
    out: dict[str, Any] = {
        "nodes": {nid: _node_to_dict(e) for nid, e in t.nodes.items()},
        "edges": [list(e) for e in t.edges],
        "terminals": {
            "alice": t.terminals.alice,
            "bob": t.terminals.bob,
            "onts": list(t.terminals.onts),
        },
        "channels": [_channel_to_dict(c) for c in doc.plan.channels],
        "physics": physics_to_dict(t.physics),
    }
    p = doc.plsu
    plsu: dict[str, Any] = {"mode": p.mode}
    if p.mode == "continuous":
        plsu |= {"db_per_added_ont": p.db_per_added_ont, "reference_count": p.reference_count}
    elif p.mode == "discrete":
        plsu |= {"levels_dbm": list(p.levels_dbm), "thresholds": list(p.thresholds)}
    dba: dict[str, Any] = {"mode": doc.dba.mode}
    if doc.dba.duty:
        dba["duty"] = dict(doc.dba.duty)
    if doc.dba.n_provisioned is not None:
        dba["n_provisioned"] = doc.dba.n_provisioned
    out["gpon"] = {"plsu": plsu, "dba": dba}
    q = _dataclass_dict(doc.qkd)
    q.pop("rate_scale")
    out["qkd"] = q
    r = doc.run
    scen: dict[str, Any] = {
        "duration_s": r.duration_s,
        "block_s": r.block_s,
        "seed": r.seed,
        "toggles": _dataclass_dict(r.toggles),
    }
    if r.active_onts is not None:
        scen["active_onts"] = list(r.active_onts)
    out["scenario"] = scen
    return out


def dump_document(doc: Document) -> str:
    return json.dumps(document_to_dict(doc), indent=2)
