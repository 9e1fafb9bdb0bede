"""Fit the plant's unpublished parameters to measured QBER, SKR and back-reflection.

The optimizer is scipy's bounded Nelder-Mead run from ``p0`` and from seeded
random starts inside the box, followed by polishing restarts from the best
point. ``rho`` and ``rate_scale`` are searched in log10 space.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .physics import Physics, RamanModel
from .pipeline import LinkModel

PENALTY_DECADES = 6.0  # SKR residual floor when no key survives
BACK_REFLECTION_FLOOR_DBM = -200.0


@dataclass(frozen=True)
class CalibrationParams:
    raman_rho: float = 1e-9  # per km per nm
    bpf_floor_isolation_db: float = 60.0
    bpf_edge_slope_db_per_nm: float = 15.0
    splitter_return_loss_db: float = 55.0
    coupler_return_loss_db: float = 55.0
    connector_return_loss_db: float = 50.0
    plsu_db_per_ont: float = 0.6
    rate_scale: float = 1.0

    @classmethod
    def from_physics(cls, ph: Physics, plsu_db_per_ont: float = 0.6) -> CalibrationParams:
        return cls(
            raman_rho=ph.raman.anchors[0][1],
            bpf_floor_isolation_db=ph.bpf.floor_isolation_db,
            bpf_edge_slope_db_per_nm=ph.bpf.edge_slope_db_per_nm,
            splitter_return_loss_db=ph.splitter_return_loss_db,
            coupler_return_loss_db=ph.coupler_return_loss_db,
            connector_return_loss_db=ph.connector_return_loss_db,
            plsu_db_per_ont=ph.plsu_db_per_ont if ph.plsu_db_per_ont is not None else plsu_db_per_ont,
            rate_scale=ph.rate_scale,
        )

    def apply(self, ph: Physics) -> Physics:
        return replace(
            ph,
            raman=RamanModel.flat(self.raman_rho),
            bpf=replace(
                ph.bpf,
                floor_isolation_db=self.bpf_floor_isolation_db,
                edge_slope_db_per_nm=self.bpf_edge_slope_db_per_nm,
            ),
            splitter_return_loss_db=self.splitter_return_loss_db,
            coupler_return_loss_db=self.coupler_return_loss_db,
            connector_return_loss_db=self.connector_return_loss_db,
            plsu_db_per_ont=self.plsu_db_per_ont,
            rate_scale=self.rate_scale,
        )

    def to_physics_fragment(self) -> dict:
        """``physics`` block for a scenario document."""
        return {
            "raman_rho": self.raman_rho,
            "bpf": {
                "floor_isolation_db": self.bpf_floor_isolation_db,
                "edge_slope_db_per_nm": self.bpf_edge_slope_db_per_nm,
            },
            "splitter_return_loss_db": self.splitter_return_loss_db,
            "coupler_return_loss_db": self.coupler_return_loss_db,
            "connector_return_loss_db": self.connector_return_loss_db,
            "plsu_db_per_ont": self.plsu_db_per_ont,
            "rate_scale": self.rate_scale,
        }


NAMES = tuple(f.name for f in fields(CalibrationParams))
LOG_PARAMS = ("raman_rho", "rate_scale")
DB_PARAMS = (
    "bpf_floor_isolation_db",
    "splitter_return_loss_db",
    "coupler_return_loss_db",
    "connector_return_loss_db",
)


@dataclass(frozen=True)
class Bounds:
    raman_rho: tuple[float, float] = (1e-11, 1e-7)
    bpf_floor_isolation_db: tuple[float, float] = (20.0, 90.0)
    bpf_edge_slope_db_per_nm: tuple[float, float] = (5.0, 40.0)
    splitter_return_loss_db: tuple[float, float] = (30.0, 70.0)
    coupler_return_loss_db: tuple[float, float] = (30.0, 70.0)
    connector_return_loss_db: tuple[float, float] = (30.0, 70.0)
    plsu_db_per_ont: tuple[float, float] = (0.0, 2.0)
    rate_scale: tuple[float, float] = (1e-3, 10.0)

    def contains(self, p: CalibrationParams) -> bool:
        return all(lo <= getattr(p, n) <= hi for n, (lo, hi) in asdict(self).items())

    def clip(self, p: CalibrationParams) -> CalibrationParams:
        return CalibrationParams(
            **{n: min(max(getattr(p, n), lo), hi) for n, (lo, hi) in asdict(self).items()}
        )

    def internal(self) -> list[tuple[float, float]]:
        return [_to_internal(n, lo, hi) for n, (lo, hi) in asdict(self).items()]


def _to_internal(name: str, *vals):
    out = tuple(math.log10(v) if name in LOG_PARAMS else v for v in vals)
    return out if len(out) > 1 else out[0]


def to_vector(p: CalibrationParams) -> np.ndarray:
    return np.array([_to_internal(n, getattr(p, n)) for n in NAMES])


def from_vector(x) -> CalibrationParams:
    return CalibrationParams(
        **{n: float(10.0 ** v) if n in LOG_PARAMS else float(v) for n, v in zip(NAMES, x)}
    )


@dataclass(frozen=True)
class Observation:
    n_onts: int
    qber_percent: float
    skr_bps: float | None  # None: no key observed
    back_reflection_dbm: float | None = None


@dataclass(frozen=True)
class Weights:
    qber: float = 2.0  # per percentage point
    skr: float = 10.0  # per decade
    back_reflection: float = 2.0  # per dB


@dataclass(frozen=True)
class Observations:
    rows: tuple[Observation, ...]
    weights: Weights = field(default_factory=Weights)

    def __post_init__(self):
        counts = [r.n_onts for r in self.rows]
        if len(set(counts)) != len(counts):
            raise ValueError("n_onts values must be distinct")
        for r in self.rows:
            if r.skr_bps is not None and r.skr_bps <= 0:
                raise ValueError("observed SKR must be positive (leave it blank when no key)")

    @property
    def counts(self) -> list[int]:
        return [r.n_onts for r in self.rows]


def parse_observations_csv(text: str) -> Observations:
    """Rows of ``n_onts,qber,skr_bps,back_refl_dbm``; QBER in percent, blank SKR or back-reflection means unobserved."""
    reader = csv.DictReader(io.StringIO(text))
    need = {"n_onts", "qber", "skr_bps", "back_refl_dbm"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ValueError(f"observation CSV needs columns {sorted(need)}")
    rows = []
    for i, r in enumerate(reader, start=2):
        try:
            skr = (r["skr_bps"] or "").strip()
            br = (r["back_refl_dbm"] or "").strip()
            rows.append(
                Observation(
                    int(r["n_onts"]),
                    float(r["qber"]),
                    float(skr) if skr else None,
                    float(br) if br else None,
                )
            )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"line {i}: {exc}") from None
    if not rows:
        raise ValueError("no observations")
    return Observations(tuple(rows))


def read_observations_csv(path: str | Path) -> Observations:
    return parse_observations_csv(Path(path).read_text(encoding="utf-8"))


def synthesize(model: LinkModel, p: CalibrationParams, counts, with_reflection=None) -> Observations:
    """Noiseless observations generated by the model itself."""
    ph = p.apply(model.doc.physics)
    rows = []
    for n in counts:
        ev = model.evaluate(model.doc.active(n), ph)
        br = ev.back_reflection_dbm if (with_reflection is None or n in with_reflection) else None
        if br is not None and not math.isfinite(br):
            br = None
        rows.append(Observation(n, ev.qber_percent, ev.skr_bps if ev.skr_bps > 0 else None, br))
    return Observations(tuple(rows))


def residuals(p: CalibrationParams, obs: Observations, model: LinkModel) -> np.ndarray:
    """Weighted residuals: QBER in points, SKR in decades, back-reflection in dB."""
    ph = p.apply(model.doc.physics)
    w = obs.weights
    out = []
    for row in obs.rows:
        ev = model.evaluate(model.doc.active(row.n_onts), ph)
        out.append(w.qber * (ev.qber_percent - row.qber_percent))
        if row.skr_bps is not None:
            skr = max(ev.skr_bps, row.skr_bps * 10.0**-PENALTY_DECADES)
            out.append(w.skr * math.log10(skr / row.skr_bps))
        if row.back_reflection_dbm is not None:
            br = max(ev.back_reflection_dbm, BACK_REFLECTION_FLOOR_DBM)
            out.append(w.back_reflection * (br - row.back_reflection_dbm))
    return np.array(out)


def objective(p: CalibrationParams, obs: Observations, model: LinkModel) -> float:
    r = residuals(p, obs, model)
    return float(r @ r)


@dataclass
class FitReport:
    params: CalibrationParams
    objective: float
    initial_objective: float
    residuals: np.ndarray
    evaluations: int
    converged: bool
    restart_objectives: list[float]
    sensitivity: dict[str, float]
    status: str = ""

    def summary(self) -> str:
        lines = [
            f"objective {self.objective:.6g} (start {self.initial_objective:.6g}), "
            f"{self.evaluations} evaluations, {self.status}"
        ]
        for n in NAMES:
            lines.append(f"  {n:26s} {getattr(self.params, n):12.6g}  sensitivity {self.sensitivity[n]:.3g}")
        return "\n".join(lines)


def _sensitivity(f, x: np.ndarray) -> dict[str, float]:
    """Objective rise for a symmetric step: 0.1 dB (or unit-ish) per parameter, 1 % for log ones."""
    f0 = f(x)
    out = {}
    for i, n in enumerate(NAMES):
        h = math.log10(1.01) if n in LOG_PARAMS else 0.1
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[n] = 0.5 * (f(xp) + f(xm)) - f0
    return out


def minimize_box(f, x0, bounds, budget: int, restarts: int = 8, seed: int = 0, xatol: float = 1e-9, fatol: float = 1e-14):
    """Bounded Nelder-Mead with seeded random restarts and polishing.

    Returns ``(x_best, f_best, evaluations, converged, restart_objectives)``.
    Ties in the restart reduction go to the lowest restart index.
    """
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x0 = np.clip(np.asarray(x0, float), lo, hi)
    rng = np.random.default_rng(seed)
    starts = [x0] + [lo + rng.random(len(lo)) * (hi - lo) for _ in range(max(restarts, 1) - 1)]
    per_run = max(budget // (2 * len(starts)), 50)
    used = 0
    results = []
    for s in starts:
        if used >= budget:
            break
        r = minimize(
            f,
            s,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxfev": min(per_run, budget - used), "xatol": xatol, "fatol": fatol, "adaptive": True},
        )
        used += r.nfev
        results.append((float(r.fun), np.clip(r.x, lo, hi), bool(r.success)))
    objs = [r[0] for r in results]
    best = min(range(len(results)), key=lambda i: (objs[i], i))
    f_best, x_best, ok = results[best]
    # polish: restart the simplex from the incumbent until it stops improving
    while used < budget:
        r = minimize(
            f,
            x_best,
            method="Nelder-Mead",
            bounds=bounds,
            options={"maxfev": min(per_run, budget - used), "xatol": xatol, "fatol": fatol, "adaptive": True},
        )
        used += r.nfev
        ok = bool(r.success)
        if r.fun < f_best - max(fatol, 1e-12 * abs(f_best)):
            f_best, x_best = float(r.fun), np.clip(r.x, lo, hi)
        else:
            if r.fun < f_best:
                f_best, x_best = float(r.fun), np.clip(r.x, lo, hi)
            break
    else:
        ok = False
    return x_best, f_best, used, ok, objs


def fit(
    p0: CalibrationParams,
    obs: Observations,
    model: LinkModel,
    budget: int = 20000,
    *,
    restarts: int = 8,
    seed: int = 0,
    bounds: Bounds | None = None,
    free: tuple[str, ...] | None = None,
) -> FitReport:
    """Least-squares fit of ``p0``'s parameters; ``free`` restricts which ones move."""
    bounds = bounds or Bounds()
    if not bounds.contains(p0):
        raise ValueError("p0 lies outside the parameter bounds")
    free = tuple(free) if free is not None else NAMES
    unknown = [n for n in free if n not in NAMES]
    if unknown:
        raise ValueError(f"unknown parameter {unknown[0]!r}")
    idx = [NAMES.index(n) for n in free]
    base = to_vector(p0)
    box = bounds.internal()

    def full(x):
        v = base.copy()
        v[idx] = x
        return v

    def f(x):
        return objective(from_vector(full(x)), obs, model)

    f0 = f(base[idx])
    x, fx, used, ok, objs = minimize_box(
        f, base[idx], [box[i] for i in idx], budget, restarts=restarts, seed=seed
    )
    if fx > f0:
        x, fx = base[idx], f0
    params = bounds.clip(from_vector(full(x)))

    def f_all(v):
        return objective(from_vector(np.clip(v, [b[0] for b in box], [b[1] for b in box])), obs, model)

    return FitReport(
        params=params,
        objective=fx,
        initial_objective=f0,
        residuals=residuals(params, obs, model),
        evaluations=used,
        converged=ok,
        restart_objectives=objs,
        sensitivity=_sensitivity(f_all, to_vector(params)),
        status="converged" if ok else "not converged",
    )
