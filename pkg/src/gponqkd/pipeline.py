"""Steady-state analytic chain: optics -> noise -> gpon -> qkd.

``LinkModel`` precomputes everything that depends only on the plant geometry
(path losses, reflection paths, Raman span terms) so that repeated evaluations
under different return losses, filter shapes, Raman coefficients or PLSu steps
cost a few microseconds each. Calibration relies on this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .document import Document, Toggles
from .gpon import PlsuPolicy
from .noise import (
    NoiseBudget,
    channel_launch_powers,
    click_probability,
    photons_per_gate,
    raman_terms,
    upstream_powers,
)
from .optics import bpf_transmission_db, path_loss_db, reflection_paths
from .physics import Physics, dbm_to_w, w_to_dbm
from .qkd import ChannelParams, DecoyParams, KeyRateReport, secure_key_rate
from .topology import BRANCHING, Connector, QkdRx, Splitter


@dataclass(frozen=True)
class Evaluation:
    active: tuple[str, ...]
    noise: NoiseBudget
    channel: ChannelParams
    report: KeyRateReport

    @property
    def n_onts(self) -> int:
        return len(self.active)

    @property
    def skr_bps(self) -> float:
        return self.report.skr_bps

    @property
    def qber_percent(self) -> float:
        return self.report.qber_percent

    @property
    def back_reflection_dbm(self) -> float:
        return self.noise.back_reflection_dbm


def _geometry_key(ph: Physics):
    return (ph.alpha, ph.splitter_excess_db, ph.connector_insertion_db)


def _rl_attribute(e, interface: str) -> str | None:
    """Physics attribute that sets this interface's return loss, or None when the element fixes it."""
    if interface == "port":
        return "connector_return_loss_db"
    if isinstance(e, Connector):
        return None if e.return_loss_db is not None else "connector_return_loss_db"
    if isinstance(e, BRANCHING) and e.return_loss_db is None:
        return "splitter_return_loss_db" if isinstance(e, Splitter) else "coupler_return_loss_db"
    return None


def transmittance(path_loss: float, physics: Physics, bpf) -> float:
    """Alice-to-click probability for one photon: channel, filter, receiver optics, detector."""
    det = physics.detector
    total_db = path_loss + bpf.passband_loss_db + det.receiver_insertion_loss_db
    return det.efficiency * 10.0 ** (-total_db / 10.0)


class LinkModel:
    """Cached geometry of one scenario document."""

    def __init__(self, doc: Document):
        self.doc = doc
        t = doc.topology
        self._geom = _geometry_key(t.physics)
        self.q_nm = doc.plan.quantum.wavelength_nm
        self.path_loss_db = path_loss_db(t, t.root, t.terminals.bob, self.q_nm)
        self.raman_terms = raman_terms(t, doc.plan)
        self.reflections = {o: reflection_paths(t, o) for o in t.terminals.onts}
        bob = t.element(t.terminals.bob)
        self._own_bpf = bob.bpf if isinstance(bob, QkdRx) else None

        # Raman: photons scale as launch_W * rho * (span factor) * 10^(-losses/10)
        self._raman = []
        for term in self.raman_terms:
            a = term.alpha_db_per_km * math.log(10.0) / 10.0
            L = term.fiber.length_km
            if term.direction == "fwd":
                span = L * math.exp(-a * L)
            else:
                span = -math.expm1(-2.0 * a * L) / (2.0 * a)
            gain = span * 10.0 ** (-(term.pump_loss_db + term.exit_loss_db) / 10.0)
            offset = self.q_nm - term.channel.wavelength_nm
            self._raman.append((term.channel.name, offset, term.direction == "fwd", gain))

        # Reflections: per ONT, linear gain grouped by the return loss that scales it
        self._refl = {}
        for o, paths in self.reflections.items():
            fixed = 0.0
            by_attr: dict[str, float] = {}
            for rp in paths:
                g = 10.0 ** (-(rp.forward_loss_db + rp.backward_loss_db) / 10.0)
                attr = _rl_attribute(t.element(rp.reflection_point), rp.interface)
                if attr is None:
                    fixed += g * 10.0 ** (-rp.return_loss_db / 10.0)
                else:
                    by_attr[attr] = by_attr.get(attr, 0.0) + g
            lam = paths[0].wavelength_nm if paths else None
            self._refl[o] = (lam, fixed, tuple(by_attr.items()))

    def evaluate(
        self,
        active=None,
        physics: Physics | None = None,
        *,
        toggles: Toggles | None = None,
        qkd: DecoyParams | None = None,
    ) -> Evaluation:
        """Noise budget and key rate with ``active`` ONTs transmitting.

        ``physics`` may override any non-geometric parameter of the document;
        changing fiber attenuation, excess loss or connector insertion loss
        requires a new ``LinkModel``.
        """
        doc = self.doc
        physics = physics or doc.physics
        if _geometry_key(physics) != self._geom:
            raise ValueError("geometry-relevant physics changed; build a new LinkModel")
        toggles = toggles or doc.run.toggles
        active = tuple(doc.active() if active is None else active)
        bpf = self._own_bpf or physics.bpf
        det = physics.detector

        plsu = doc.plsu
        if not toggles.plsu:
            plsu = PlsuPolicy.off()
        elif physics.plsu_db_per_ont is not None and plsu.mode == "continuous":
            plsu = replace(plsu, db_per_added_ont=physics.plsu_db_per_ont)
        powers = upstream_powers(doc.topology, doc.plan, active, plsu, doc.dba) if active else {}

        fwd = bwd = 0.0
        if toggles.raman:
            launch = {k: dbm_to_w(v) for k, v in channel_launch_powers(doc.plan, powers).items()}
            to_photons = (
                photons_per_gate(30.0, self.q_nm, det)  # per watt
                * bpf.acceptance_bandwidth_nm
                * 10.0 ** (-bpf.passband_loss_db / 10.0)
            )
            for name, offset, forward, gain in self._raman:
                w = launch.get(name)
                if not w:
                    continue
                n = w * physics.raman.rho(offset) * gain * to_photons
                if forward:
                    fwd += n
                else:
                    bwd += n
        leak, back = 0.0, -math.inf
        if toggles.reflections and active:
            total = 0.0
            for o in active:
                lam, fixed, by_attr = self._refl[o]
                p = powers[o]
                if lam is None or p == -math.inf:
                    continue
                g = fixed + sum(v * 10.0 ** (-getattr(physics, a) / 10.0) for a, v in by_attr)
                w = dbm_to_w(p) * g
                total += w
                leak += photons_per_gate(w_to_dbm(w) - bpf_transmission_db(bpf, lam), lam, det)
            back = w_to_dbm(total)

        noise = NoiseBudget(
            raman_forward=click_probability(fwd),
            raman_backward=click_probability(bwd),
            reflection_leakage=click_probability(leak),
            dark=det.dark_count_prob_per_gate,
            back_reflection_dbm=back,
        )
        eta = transmittance(self.path_loss_db, physics, bpf)
        ch = ChannelParams(eta=eta, Y0=noise.Y0, e_det=det.intrinsic_error_e_det)
        d = replace(qkd or doc.qkd, rate_scale=physics.rate_scale)
        return Evaluation(active, noise, ch, secure_key_rate(d, ch))

    def sweep(self, counts, physics: Physics | None = None, **kw) -> list[Evaluation]:
        return [self.evaluate(self.doc.active(n), physics, **kw) for n in counts]


def analyze(doc: Document, active=None) -> Evaluation:
    return LinkModel(doc).evaluate(active)
