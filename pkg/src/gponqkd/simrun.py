"""Seeded time series of per-block key statistics, and multi-load sweeps.

Each block draws its sifted count from a Poisson law with the analytic mean
and its error count from a binomial on those sifted bits; the per-block key
rate is then recomputed from the sampled gain and error rate. The generator
is numpy's PCG64 seeded from the 64-bit scenario seed.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .document import Document, DocumentError, RunSettings, Toggles, check_run
from .pipeline import Evaluation, LinkModel
from .qkd import key_rate_from_statistics

RNG_NAME = "numpy.random.PCG64"
HIST_BINS = 20


@dataclass(frozen=True)
class Scenario:
    document: Document
    active_onts: tuple[str, ...]
    duration_s: float = 60 * 3600.0
    block_s: float = 60.0
    seed: int = 0
    toggles: Toggles = field(default_factory=Toggles)

    def __post_init__(self):
        check_run(RunSettings(None, self.duration_s, self.block_s, self.seed, self.toggles))
        if not 0 <= self.seed < 2**64:
            raise DocumentError("seed must be a 64-bit unsigned integer", "scenario.seed")
        unknown = [o for o in self.active_onts if o not in self.document.topology.terminals.onts]
        if unknown:
            raise DocumentError(f"unknown ONT {unknown[0]!r}", "scenario.active_onts")

    @classmethod
    def from_document(cls, doc: Document, n_onts: int | None = None, **overrides) -> Scenario:
        r = doc.run
        base = dict(
            active_onts=doc.active(n_onts),
            duration_s=r.duration_s,
            block_s=r.block_s,
            seed=r.seed,
            toggles=r.toggles,
        )
        base.update(overrides)
        return cls(doc, **base)

    @property
    def n_blocks(self) -> int:
        return max(1, int(math.floor(self.duration_s / self.block_s + 1e-9)))


@dataclass
class TimeSeries:
    t_s: np.ndarray
    skr_bps: np.ndarray
    qber_percent: np.ndarray
    sifted: np.ndarray
    errors: np.ndarray

    HEADER = "t_s,skr_bps,qber_percent,sifted,errors"

    def __len__(self) -> int:
        return len(self.t_s)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(self.HEADER + "\n")
        for t, s, q, n, e in zip(self.t_s, self.skr_bps, self.qber_percent, self.sifted, self.errors):
            buf.write(f"{t:.3f},{s:.6f},{q:.6f},{int(n)},{int(e)}\n")
        return buf.getvalue()


@dataclass
class Summary:
    n_onts: int
    active_onts: list[str]
    n_blocks: int
    duration_s: float
    block_s: float
    seed: int
    mean_skr_bps: float
    std_skr_bps: float
    mean_qber_percent: float
    analytic_skr_bps: float
    analytic_qber_percent: float
    back_reflection_dbm: float | None
    skr_histogram: dict
    toggles: dict
    rng: str = RNG_NAME

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _blocks(s: Scenario, ev: Evaluation):
    d = replace(s.document.qkd, rate_scale=s.document.physics.rate_scale)
    n = s.n_blocks
    bits_per_gain = d.sifted_rate_hz * s.block_s  # sifted bits per unit Q_mu
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(s.seed)))
    sifted = rng.poisson(ev.report.Q_mu * bits_per_gain, n)
    errors = rng.binomial(sifted, ev.report.E_mu)

    rep = ev.report
    ch = ev.channel
    skr = np.empty(n)
    qber = np.empty(n)
    for i in range(n):
        if sifted[i] == 0:
            skr[i], qber[i] = 0.0, 100.0 * ch.e0
            continue
        e = errors[i] / sifted[i]
        r = key_rate_from_statistics(d, sifted[i] / bits_per_gain, e, rep.Q_nu, rep.E_nu, ch.Y0, ch.e0)
        skr[i], qber[i] = r.skr_bps, 100.0 * e
    t = np.arange(n) * s.block_s
    return TimeSeries(t, skr, qber, sifted, errors)


def run_scenario(s: Scenario, model: LinkModel | None = None) -> tuple[TimeSeries, Summary]:
    model = model or LinkModel(s.document)
    ev = model.evaluate(s.active_onts, toggles=s.toggles)
    ts = _blocks(s, ev)
    counts, edges = np.histogram(ts.skr_bps, bins=HIST_BINS)
    br = ev.back_reflection_dbm
    summary = Summary(
        n_onts=len(s.active_onts),
        active_onts=list(s.active_onts),
        n_blocks=len(ts),
        duration_s=s.duration_s,
        block_s=s.block_s,
        seed=s.seed,
        mean_skr_bps=float(ts.skr_bps.mean()),
        std_skr_bps=float(ts.skr_bps.std()),
        mean_qber_percent=float(ts.qber_percent.mean()),
        analytic_skr_bps=ev.skr_bps,
        analytic_qber_percent=ev.qber_percent,
        back_reflection_dbm=br if math.isfinite(br) else None,
        skr_histogram={"edges": edges.tolist(), "counts": counts.tolist()},
        toggles=dict(s.toggles.__dict__),
    )
    return ts, summary


def sweep(base: Scenario, ont_counts) -> list[Summary]:
    """One summary per ONT count; row ``i`` uses seed ``base.seed ^ i``."""
    doc = base.document
    n_max = len(doc.topology.terminals.onts)
    for n in ont_counts:
        if not 0 <= n <= n_max:
            raise ValueError(f"{n} ONTs requested but the plant has {n_max}")
    model = LinkModel(doc)
    out = []
    for i, n in enumerate(ont_counts):
        s = replace(base, active_onts=doc.active(n), seed=base.seed ^ i)
        out.append(run_scenario(s, model)[1])
    return out


def sweep_table(rows: list[Summary]) -> str:
    """Observation-table layout: ``n_onts,qber,skr_bps,back_refl_dbm``."""
    lines = ["n_onts,qber,skr_bps,back_refl_dbm"]
    for r in rows:
        br = "" if r.back_reflection_dbm is None else f"{r.back_reflection_dbm:.3f}"
        lines.append(f"{r.n_onts},{r.mean_qber_percent:.4f},{r.mean_skr_bps:.3f},{br}")
    return "\n".join(lines) + "\n"
