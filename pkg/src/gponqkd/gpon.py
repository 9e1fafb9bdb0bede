"""GPON upstream power management: PLSu launch-power leveling and TDM duty shares."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class PlsuPolicy:
    """How the OLT levels ONT launch power as more ONTs register.

    ``mode`` is ``"off"``, ``"continuous"`` (a fixed dB step for every ONT
    beyond ``reference_count``) or ``"discrete"`` (stepped absolute levels;
    ``thresholds[i]`` is the largest ONT count still served by level ``i``).
    """

    mode: str = "continuous"
    db_per_added_ont: float = 0.6
    reference_count: int = 4
    levels_dbm: tuple[float, ...] = ()
    thresholds: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in ("off", "continuous", "discrete"):
            raise ValueError(f"unknown PLSu mode {self.mode!r}")
        if self.db_per_added_ont < 0:
            raise ValueError("db_per_added_ont must be >= 0")
        if self.reference_count < 0:
            raise ValueError("reference_count must be >= 0")
        if self.mode == "discrete":
            lv = self.levels_dbm
            if not lv or any(b >= a for a, b in zip(lv, lv[1:])):
                raise ValueError("discrete levels must be non-empty and strictly decreasing")
            if len(self.thresholds) != len(lv) - 1:
                raise ValueError("discrete mode needs len(levels) - 1 thresholds")
            if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
                raise ValueError("discrete thresholds must be strictly increasing")

    @classmethod
    def off(cls) -> PlsuPolicy:
        return cls(mode="off")

    def level_index(self, n_active: int) -> int:
        return sum(1 for th in self.thresholds if n_active > th)


@dataclass(frozen=True)
class DbaLoad:
    """Upstream duty share per ONT.

    ``equal`` splits the frame among the active ONTs, ``provisioned`` gives
    every provisioned ONT a fixed ``1/n_provisioned`` slot whether or not the
    others are active, ``fixed`` takes explicit per-ONT shares.
    """

    mode: str = "equal"
    duty: dict[str, float] = field(default_factory=dict)
    n_provisioned: int | None = None

    def __post_init__(self):
        if self.mode not in ("equal", "provisioned", "fixed"):
            raise ValueError(f"unknown DBA mode {self.mode!r}")
        if any(not 0.0 <= d <= 1.0 for d in self.duty.values()):
            raise ValueError("duty fractions must lie in [0, 1]")
        if sum(self.duty.values()) > 1.0 + 1e-9:
            raise ValueError("TDM duty fractions must sum to at most 1")

    def shares(self, active: list[str] | tuple[str, ...]) -> dict[str, float]:
        if self.mode == "equal":
            return {o: 1.0 / len(active) for o in active} if active else {}
        if self.mode == "provisioned":
            n = self.n_provisioned or len(active)
            if len(active) > n:
                raise ValueError("more active ONTs than provisioned slots")
            return {o: 1.0 / n for o in active}
        missing = [o for o in active if o not in self.duty]
        if missing:
            raise ValueError(f"no duty share for {', '.join(missing)}")
        return {o: self.duty[o] for o in active}


def ont_launch_power_dbm(policy: PlsuPolicy, n_active: int, nominal_dbm: float) -> float:
    if n_active < 1:
        raise ValueError("PLSu needs at least one active ONT")
    if policy.mode == "off":
        return nominal_dbm
    if policy.mode == "continuous":
        return nominal_dbm - policy.db_per_added_ont * max(0, n_active - policy.reference_count)
    return policy.levels_dbm[policy.level_index(n_active)]


def effective_upstream_power_dbm(
    policy: PlsuPolicy,
    load: DbaLoad,
    ont: str,
    n_active: int,
    nominal_dbm: float,
    active: list[str] | tuple[str, ...] | None = None,
) -> float:
    """Time-averaged ONT output power: leveled launch power times its duty share."""
    active = list(active) if active is not None else None
    if load.mode == "fixed":
        if ont not in load.duty:
            raise ValueError(f"{ont} has no duty share")
        duty = load.duty[ont]
    elif load.mode == "provisioned":
        duty = 1.0 / (load.n_provisioned or n_active)
    else:
        duty = 1.0 / n_active
    if active is not None and ont not in active:
        raise ValueError(f"{ont} is not active")
    if duty == 0.0:
        return -math.inf
    return ont_launch_power_dbm(policy, n_active, nominal_dbm) + 10.0 * math.log10(duty)
