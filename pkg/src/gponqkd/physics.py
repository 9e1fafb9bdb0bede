"""Physical parameter containers shared by the optics, noise and gpon layers.

Everything here is plain immutable data plus small evaluation helpers. Values
that the plant does not pin down (filter edge, Raman coefficient, return
losses) have library defaults and are normally replaced by calibration.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace

H_PLANCK = 6.62607015e-34
C_LIGHT = 299_792_458.0

MIN_WAVELENGTH_NM = 1250.0
MAX_WAVELENGTH_NM = 1600.0

FIBER_TYPES = ("G652D", "G657A1")


def dbm_to_w(dbm: float) -> float:
    if dbm == -math.inf:
        return 0.0
    return 10.0 ** ((dbm - 30.0) / 10.0)


def w_to_dbm(watts: float) -> float:
    if watts <= 0.0:
        return -math.inf
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (-db / 10.0)


def _interp(anchors: tuple[tuple[float, float], ...], x: float) -> float:
    """Piecewise-linear interpolation, clamped to the end anchors."""
    xs = [a[0] for a in anchors]
    if x <= xs[0]:
        return anchors[0][1]
    if x >= xs[-1]:
        return anchors[-1][1]
    i = bisect_right(xs, x)
    (x0, y0), (x1, y1) = anchors[i - 1], anchors[i]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


@dataclass(frozen=True)
class AttenuationModel:
    """Fiber attenuation in dB/km, linear between wavelength anchors."""

    anchors: tuple[tuple[float, float], ...] = ((1310.0, 0.35), (1490.0, 0.24), (1550.0, 0.21))

    def __post_init__(self):
        if not self.anchors:
            raise ValueError("attenuation model needs at least one anchor")
        xs = [a[0] for a in self.anchors]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("attenuation anchors must be strictly increasing in wavelength")
        if any(a[1] <= 0 for a in self.anchors):
            raise ValueError("attenuation must be positive")

    def db_per_km(self, wavelength_nm: float) -> float:
        return _interp(self.anchors, wavelength_nm)

    def nepers_per_km(self, wavelength_nm: float) -> float:
        return self.db_per_km(wavelength_nm) * math.log(10.0) / 10.0


@dataclass(frozen=True)
class BpfModel:
    """Receiver bandpass filter, piecewise linear in dB.

    Flat ``passband_loss_db`` within ``passband_halfwidth_nm`` of the center,
    then attenuation grows at ``edge_slope_db_per_nm`` until it saturates at
    ``floor_isolation_db``.
    """

    center_nm: float = 1310.0
    passband_halfwidth_nm: float = 1.0
    passband_loss_db: float = 0.5
    floor_isolation_db: float = 60.0
    edge_slope_db_per_nm: float = 15.0

    def problems(self) -> list[str]:
        out = []
        if self.passband_loss_db < 0:
            out.append("passband_loss_db must be >= 0")
        if self.floor_isolation_db <= self.passband_loss_db:
            out.append("floor_isolation_db must exceed passband_loss_db")
        if self.passband_halfwidth_nm < 0:
            out.append("passband_halfwidth_nm must be >= 0")
        if self.edge_slope_db_per_nm <= 0:
            out.append("edge_slope_db_per_nm must be > 0")
        return out

    @property
    def acceptance_bandwidth_nm(self) -> float:
        return 2.0 * self.passband_halfwidth_nm


@dataclass(frozen=True)
class RamanModel:
    """Spontaneous Raman coefficient versus wavelength offset.

    ``anchors`` hold (offset_nm, rho) with offset = scattered - pump wavelength
    and rho in 1/(km nm). Offsets beyond ``max_offset_nm`` scatter nothing.
    """

    anchors: tuple[tuple[float, float], ...] = ((-250.0, 1e-9), (250.0, 1e-9))
    max_offset_nm: float = 250.0

    def __post_init__(self):
        xs = [a[0] for a in self.anchors]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("raman anchors must be strictly increasing in offset")
        if any(a[1] < 0 for a in self.anchors):
            raise ValueError("raman coefficient must be >= 0")

    @classmethod
    def flat(cls, rho: float) -> RamanModel:
        return cls(anchors=((-250.0, rho), (250.0, rho)))

    def rho(self, offset_nm: float) -> float:
        if abs(offset_nm) > self.max_offset_nm or not self.anchors:
            return 0.0
        return _interp(self.anchors, offset_nm)

    def is_flat(self) -> bool:
        return len({a[1] for a in self.anchors}) <= 1


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.20
    dark_count_prob_per_gate: float = 1e-5
    gate_rate_hz: float = 1e9
    gate_width_s: float = 100e-12
    intrinsic_error_e_det: float = 0.015
    receiver_insertion_loss_db: float = 2.0

    def problems(self) -> list[str]:
        out = []
        for name in ("efficiency", "dark_count_prob_per_gate", "intrinsic_error_e_det"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name} must be in [0, 1]")
        if self.gate_rate_hz <= 0:
            out.append("gate_rate_hz must be > 0")
        if self.gate_width_s <= 0 or self.gate_width_s > 1.0 / self.gate_rate_hz:
            out.append("gate_width_s must be in (0, 1/gate_rate_hz]")
        if self.receiver_insertion_loss_db < 0:
            out.append("receiver_insertion_loss_db must be >= 0")
        return out


def _default_alpha() -> dict[str, AttenuationModel]:
    return {ft: AttenuationModel() for ft in FIBER_TYPES}


@dataclass(frozen=True)
class Physics:
    """Plant-wide defaults and calibration knobs.

    Element-level values in the topology document win over these; anything an
    element leaves unset is resolved here.
    """

    alpha: dict[str, AttenuationModel] = field(default_factory=_default_alpha)
    splitter_excess_db: float = 0.5
    connector_insertion_db: float = 0.3
    connector_return_loss_db: float = 50.0
    splitter_return_loss_db: float = 55.0
    coupler_return_loss_db: float = 55.0
    bpf: BpfModel = field(default_factory=BpfModel)
    raman: RamanModel = field(default_factory=RamanModel)
    detector: DetectorParams = field(default_factory=DetectorParams)
    plsu_db_per_ont: float | None = None
    rate_scale: float = 1.0

    def attenuation(self, fiber_type: str) -> AttenuationModel:
        return self.alpha[fiber_type]

    def with_updates(self, **changes) -> Physics:
        return replace(self, **changes)
