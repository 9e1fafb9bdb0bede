"""Asymptotic vacuum + weak decoy-state BB84 key rate.

Channel model: background clicks (probability ``Y0`` per gate) and signal
clicks are independent, so a state with mean photon number ``m`` is detected
with gain ``Q = 1 - (1 - Y0) exp(-eta m)``. Signal-only clicks err with the
misalignment error ``e_det``; background and double clicks give a random bit
(``e0 = 1/2``). The single-photon yield and error are bounded from the signal
and weak-decoy statistics and fed into the GLLP rate with an error-correction
overhead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class NoKeyError(ValueError):
    """The decoy bounds certify no single-photon contribution."""


@dataclass(frozen=True)
class DecoyParams:
    mu: float = 0.5
    nu: float = 0.1
    p_signal: float = 0.9
    p_decoy: float = 0.075
    p_vacuum: float = 0.025
    sifting_q: float = 0.9
    f_ec: float = 1.16
    clock_rate_hz: float = 1e9
    rate_scale: float = 1.0

    def __post_init__(self):
        if not 0 < self.nu < self.mu:
            raise ValueError("need 0 < nu < mu")
        if self.nu >= 1:
            raise ValueError("decoy intensity must be < 1")
        probs = (self.p_signal, self.p_decoy, self.p_vacuum)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("state probabilities must be non-negative and sum to 1")
        if not 0 < self.sifting_q <= 1:
            raise ValueError("sifting_q must be in (0, 1]")
        if self.f_ec < 1:
            raise ValueError("f_ec must be >= 1")
        if self.clock_rate_hz <= 0 or self.rate_scale <= 0:
            raise ValueError("clock rate and rate scale must be positive")

    @property
    def sifted_rate_hz(self) -> float:
        """Signal pulses per second that survive sifting (before detection)."""
        return self.sifting_q * self.p_signal * self.clock_rate_hz * self.rate_scale


@dataclass(frozen=True)
class ChannelParams:
    eta: float
    Y0: float
    e_det: float = 0.015
    e0: float = 0.5

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must be in [0, 1]")
        if not 0 <= self.Y0 < 1:
            raise ValueError("Y0 must be in [0, 1)")
        if not 0 <= self.e_det <= 0.5:
            raise ValueError("e_det must be in [0, 0.5]")


@dataclass(frozen=True)
class KeyRateReport:
    Q_mu: float
    E_mu: float
    Q_nu: float
    E_nu: float
    Y1_lower: float
    e1_upper: float
    Q1_lower: float
    skr_bps: float
    qber_percent: float
    reason: str = ""


def h2(x: float) -> float:
    """Binary entropy in bits."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"h2 argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def gain_and_qber(m: float, ch: ChannelParams) -> tuple[float, float]:
    if m < 0:
        raise ValueError("mean photon number must be >= 0")
    signal = -math.expm1(-ch.eta * m)
    q = ch.Y0 + (1.0 - ch.Y0) * signal
    if q == 0.0:
        return 0.0, ch.e0
    return q, (ch.e0 * ch.Y0 + ch.e_det * (1.0 - ch.Y0) * signal) / q


def y1_lower_bound(Q_mu: float, Q_nu: float, Y0: float, mu: float, nu: float) -> float:
    if not 0 < nu < mu:
        raise ValueError("need 0 < nu < mu for the decoy bound")
    bound = (mu / (mu * nu - nu * nu)) * (
        Q_nu * math.exp(nu)
        - Q_mu * math.exp(mu) * (nu * nu) / (mu * mu)
        - ((mu * mu - nu * nu) / (mu * mu)) * Y0
    )
    return min(1.0, max(0.0, bound))


def e1_upper_bound(
    E_nu: float, Q_nu: float, Y0: float, nu: float, Y1_lower: float, e0: float = 0.5
) -> float:
    if Y1_lower <= 0:
        raise NoKeyError("single-photon yield bound is zero")
    bound = (E_nu * Q_nu * math.exp(nu) - e0 * Y0) / (Y1_lower * nu)
    return min(0.5, max(0.0, bound))


def key_rate_from_statistics(
    d: DecoyParams,
    Q_mu: float,
    E_mu: float,
    Q_nu: float,
    E_nu: float,
    Y0: float,
    e0: float = 0.5,
) -> KeyRateReport:
    """Rate from observed (or expected) signal/decoy gains and error rates."""
    qber = 100.0 * E_mu
    y1 = y1_lower_bound(Q_mu, Q_nu, Y0, d.mu, d.nu)
    try:
        e1 = e1_upper_bound(E_nu, Q_nu, Y0, d.nu, y1, e0)
    except NoKeyError:
        return KeyRateReport(Q_mu, E_mu, Q_nu, E_nu, y1, 0.5, 0.0, 0.0, qber, "no-single-photon-yield")
    q1 = y1 * d.mu * math.exp(-d.mu)
    per_pulse = q1 * (1.0 - h2(e1)) - d.f_ec * Q_mu * h2(min(max(E_mu, 0.0), 1.0))
    rate = d.sifted_rate_hz * per_pulse
    reason = ""
    if rate <= 0:
        rate, reason = 0.0, "negative-rate"
    return KeyRateReport(Q_mu, E_mu, Q_nu, E_nu, y1, e1, q1, rate, qber, reason)


def secure_key_rate(d: DecoyParams, ch: ChannelParams) -> KeyRateReport:
    if ch.eta == 0.0:
        q_mu, e_mu = gain_and_qber(d.mu, ch)
        q_nu, e_nu = gain_and_qber(d.nu, ch)
        return KeyRateReport(q_mu, e_mu, q_nu, e_nu, 0.0, 0.5, 0.0, 0.0, 100.0 * e_mu, "zero-transmittance")
    q_mu, e_mu = gain_and_qber(d.mu, ch)
    q_nu, e_nu = gain_and_qber(d.nu, ch)
    return key_rate_from_statistics(d, q_mu, e_mu, q_nu, e_nu, ch.Y0, ch.e0)
