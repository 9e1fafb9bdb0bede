"""Noise photons per detector gate at Bob.

Three mechanisms feed the background yield: spontaneous Raman scattering of
the classical carriers inside each fiber span on the Alice-Bob path, ONT
light reflected back toward Bob and leaking through the receiver filter, and
detector dark counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .gpon import DbaLoad, PlsuPolicy, effective_upstream_power_dbm
from .optics import (
    ReflectionPath,
    bpf_transmission_db,
    hops_loss_db,
    receiver_bpf,
    reflection_paths,
)
from .physics import (
    C_LIGHT,
    AttenuationModel,
    H_PLANCK,
    DetectorParams,
    RamanModel,
    dbm_to_w,
    w_to_dbm,
)
from .topology import (
    Channel,
    ChannelDirection,
    ChannelPlan,
    FiberSpan,
    Ont,
    Role,
    Topology,
    path_between,
)


@dataclass(frozen=True)
class NoiseBudget:
    """Probability of at least one noise click per gate, per mechanism."""

    raman_forward: float
    raman_backward: float
    reflection_leakage: float
    dark: float
    back_reflection_dbm: float = -math.inf  # at Bob's input, before the filter

    @property
    def Y0(self) -> float:
        return combine_probabilities(
            (self.raman_forward, self.raman_backward, self.reflection_leakage, self.dark)
        )


def combine_probabilities(probs) -> float:
    """1 - prod(1 - p), accurate for tiny probabilities."""
    log_keep = 0.0
    for p in probs:
        if p >= 1.0:
            return 1.0
        log_keep += math.log1p(-p)
    return -math.expm1(log_keep)


def click_probability(mean_photons: float) -> float:
    return -math.expm1(-mean_photons)


def raman_noise_power_dbm(
    launch_dbm: float,
    fiber: FiberSpan,
    pump_nm: float,
    quantum_nm: float,
    filter_bw_nm: float,
    direction: str,
    raman: RamanModel | None = None,
    alpha_db_per_km: float | None = None,
) -> float:
    """Raman power inside the quantum passband at the span output.

    ``direction`` is ``"fwd"`` for a pump co-propagating with the quantum
    signal (noise exits at the far end) and ``"bwd"`` for a counter-propagating
    pump (noise exits where the pump entered). Pump and signal share the
    attenuation at the quantum wavelength.
    """
    if fiber.length_km <= 0:
        raise ValueError("fiber length must be > 0")
    raman = raman or RamanModel()
    rho = raman.rho(quantum_nm - pump_nm)
    p = dbm_to_w(launch_dbm)
    if rho == 0.0 or p == 0.0 or filter_bw_nm <= 0:
        return -math.inf
    if alpha_db_per_km is None:
        alpha_db_per_km = AttenuationModel().db_per_km(quantum_nm)
    alpha = alpha_db_per_km * math.log(10.0) / 10.0
    length = fiber.length_km
    if direction == "fwd":
        out = p * rho * filter_bw_nm * length * math.exp(-alpha * length)
    elif direction == "bwd":
        out = p * rho * filter_bw_nm * (-math.expm1(-2.0 * alpha * length)) / (2.0 * alpha)
    else:
        raise ValueError(f"direction must be 'fwd' or 'bwd', not {direction!r}")
    return w_to_dbm(out)


def photons_per_gate(power_dbm: float, wavelength_nm: float, det: DetectorParams) -> float:
    """Mean detected photons per gate for a CW power at Bob's filter output."""
    if power_dbm == -math.inf:
        return 0.0
    photon_j = H_PLANCK * C_LIGHT / (wavelength_nm * 1e-9)
    flux = dbm_to_w(power_dbm) / photon_j
    return (
        flux
        * det.gate_width_s
        * det.efficiency
        * 10.0 ** (-det.receiver_insertion_loss_db / 10.0)
    )


@dataclass(frozen=True)
class RamanTerm:
    """One (classical channel, fiber span) pair that scatters into the quantum band."""

    channel: Channel
    span: str
    fiber: FiberSpan
    direction: str
    pump_loss_db: float  # source -> span input, at the pump wavelength
    exit_loss_db: float  # span output -> Bob input, at the quantum wavelength
    alpha_db_per_km: float  # at the quantum wavelength


def raman_terms(t: Topology, plan: ChannelPlan) -> list[RamanTerm]:
    bob = t.terminals.bob
    q_nm = plan.quantum.wavelength_nm
    main = path_between(t, t.root, bob)
    spans = [i for i, h in enumerate(main.hops) if isinstance(t.nodes[h.node], FiberSpan)]
    out = []
    for ch in plan.classical:
        for i in spans:
            node = main.hops[i].node
            fiber = t.nodes[node]
            alpha = t.physics.attenuation(fiber.fiber_type).db_per_km(q_nm)
            if ch.direction is ChannelDirection.DOWNSTREAM:
                pump = hops_loss_db(t, main.hops[:i], ch.wavelength_nm)
                exit_ = hops_loss_db(t, main.hops[i + 1 :], q_nm)
                out.append(RamanTerm(ch, node, fiber, "fwd", pump, exit_, alpha))
            else:
                src = ch.source
                if src is None or node not in t.ancestors(src):
                    continue
                pump = hops_loss_db(t, path_between(t, src, node).hops, ch.wavelength_nm)
                exit_ = hops_loss_db(t, path_between(t, node, bob).hops, q_nm)
                out.append(RamanTerm(ch, node, fiber, "bwd", pump, exit_, alpha))
    return out


def ont_nominal_dbm(t: Topology, plan: ChannelPlan, ont: str) -> float:
    ch = plan.upstream_of(ont)
    if ch is not None and ch.launch_power_dbm is not None:
        return ch.launch_power_dbm
    e = t.element(ont)
    assert isinstance(e, Ont)
    return e.nominal_power_dbm


def upstream_powers(
    t: Topology,
    plan: ChannelPlan,
    active_onts,
    plsu: PlsuPolicy,
    dba: DbaLoad,
) -> dict[str, float]:
    """Time-averaged output power of every active ONT."""
    active = list(active_onts)
    return {
        o: effective_upstream_power_dbm(plsu, dba, o, len(active), ont_nominal_dbm(t, plan, o), active)
        for o in active
    }


def raman_photons(
    terms: list[RamanTerm],
    launch: dict[str, float],
    raman: RamanModel,
    q_nm: float,
    filter_bw_nm: float,
    passband_loss_db: float,
    det: DetectorParams,
) -> tuple[float, float]:
    """Mean Raman photons per gate, split into (forward, backward).

    ``launch`` maps channel names to the power each channel launches; channels
    absent from it (e.g. silent ONTs) contribute nothing.
    """
    fwd = bwd = 0.0
    for term in terms:
        p0 = launch.get(term.channel.name)
        if p0 is None:
            continue
        pump_nm = term.channel.wavelength_nm
        scattered = raman_noise_power_dbm(
            p0 - term.pump_loss_db,
            term.fiber,
            pump_nm,
            q_nm,
            filter_bw_nm,
            term.direction,
            raman,
            term.alpha_db_per_km,
        )
        n = photons_per_gate(scattered - term.exit_loss_db - passband_loss_db, q_nm, det)
        if term.direction == "fwd":
            fwd += n
        else:
            bwd += n
    return fwd, bwd


def reflection_photons(
    reflections: dict[str, list[ReflectionPath]],
    powers: dict[str, float],
    bpf,
    det: DetectorParams,
) -> tuple[float, float]:
    """(mean leaked photons per gate, total reflected dBm at Bob's input)."""
    photons = 0.0
    total_w = 0.0
    for ont, p_dbm in powers.items():
        paths = reflections[ont]
        if not paths or p_dbm == -math.inf:
            continue
        w = sum(dbm_to_w(p_dbm - rp.total_loss_db) for rp in paths)
        total_w += w
        lam = paths[0].wavelength_nm
        photons += photons_per_gate(w_to_dbm(w) - bpf_transmission_db(bpf, lam), lam, det)
    return photons, w_to_dbm(total_w)


def channel_launch_powers(plan: ChannelPlan, upstream: dict[str, float]) -> dict[str, float]:
    out = {}
    for ch in plan.classical:
        if ch.role is Role.UPSTREAM:
            if ch.source in upstream:
                out[ch.name] = upstream[ch.source]
        elif ch.launch_power_dbm is not None:
            out[ch.name] = ch.launch_power_dbm
    return out


def noise_budget(
    t: Topology,
    plan: ChannelPlan,
    active_onts,
    det: DetectorParams | None = None,
    raman: RamanModel | None = None,
    *,
    plsu: PlsuPolicy | None = None,
    dba: DbaLoad | None = None,
    raman_on: bool = True,
    reflections_on: bool = True,
) -> NoiseBudget:
    det = det or t.physics.detector
    raman = raman or t.physics.raman
    plsu = plsu or PlsuPolicy()
    dba = dba or DbaLoad()
    active = list(active_onts)
    bpf = receiver_bpf(t)
    q_nm = plan.quantum.wavelength_nm

    powers = upstream_powers(t, plan, active, plsu, dba) if active else {}

    fwd = bwd = 0.0
    if raman_on:
        fwd, bwd = raman_photons(
            raman_terms(t, plan),
            channel_launch_powers(plan, powers),
            raman,
            q_nm,
            bpf.acceptance_bandwidth_nm,
            bpf.passband_loss_db,
            det,
        )

    leak, back_dbm = 0.0, -math.inf
    if reflections_on and active:
        refl = {o: reflection_paths(t, o) for o in active}
        leak, back_dbm = reflection_photons(refl, powers, bpf, det)

    return NoiseBudget(
        raman_forward=click_probability(fwd),
        raman_backward=click_probability(bwd),
        reflection_leakage=click_probability(leak),
        dark=det.dark_count_prob_per_gate,
        back_reflection_dbm=back_dbm,
    )
