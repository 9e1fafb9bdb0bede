"""Command-line entry point: ``gponqkd <subcommand> DOCUMENT ...``.

Exit codes: 0 success, 1 domain error (invalid plant, no key, bad override
value), 2 I/O or usage error. Output files go to ``--out`` or, when absent,
to ``$GPONQKD_OUT_DIR`` or the current directory.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

from . import calibrate as cal
from .document import Document, DocumentError, parse_document, parse_physics
from .optics import path_atoms, path_loss_db
from .pipeline import LinkModel
from .simrun import Scenario, run_scenario, sweep, sweep_table
from .topology import TopologyError, UnknownNodeError, path_between

OUT_ENV = "GPONQKD_OUT_DIR"
BUILTIN = "builtin:"


class UsageError(Exception):
    pass


# --- document loading ------------------------------------------------------------


def _read_text(ref: str) -> str:
    if ref.startswith(BUILTIN):
        name = ref[len(BUILTIN) :]
        res = resources.files("gponqkd.scenarios").joinpath(name if "." in name else f"{name}.json")
        if not res.is_file():
            raise FileNotFoundError(f"no built-in file {name!r}")
        return res.read_text(encoding="utf-8")
    return Path(ref).read_text(encoding="utf-8")


_SCENARIO_KEYS = {"active_onts", "duration_s", "block_s", "seed"}
_TOGGLE_KEYS = {"plsu", "raman", "reflections"}
_SECTIONS = {"scenario", "physics", "qkd", "gpon"}


def _override_path(key: str) -> list[str]:
    parts = key.split(".")
    if parts[0] in _SECTIONS and len(parts) > 1:
        return parts
    if key in _SCENARIO_KEYS:
        return ["scenario", key]
    if key in _TOGGLE_KEYS:
        return ["scenario", "toggles", key]
    if parts[0] == "toggles" and len(parts) == 2 and parts[1] in _TOGGLE_KEYS:
        return ["scenario", *parts]
    raise UsageError(f"unknown override key {key!r}")


def _override_value(text: str):
    low = text.lower()
    if low in ("on", "true"):
        return True
    if low in ("off", "false"):
        return False
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        path = _override_path(key.strip())
        node = raw
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise UsageError(f"cannot override inside {p!r}")
        node[path[-1]] = _override_value(value.strip())
    return raw


def load(args) -> Document:
    text = _read_text(args.document)
    overrides = list(getattr(args, "set", None) or [])
    frag = getattr(args, "physics", None)
    if not overrides and not frag:
        return parse_document(text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError:
        return parse_document(text)  # reports the syntax error with its position
    if frag:
        extra = json.loads(_read_text(frag))
        parse_physics(extra)  # reject a malformed fragment early
        raw.setdefault("physics", {}).update(extra)
    apply_overrides(raw, overrides)
    return parse_document(json.dumps(raw))


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


# --- subcommands -----------------------------------------------------------------


def cmd_validate(args) -> int:
    try:
        doc = load(args)
    except DocumentError as exc:
        for v in exc.violations or []:
            print(v, file=sys.stderr)
        if not exc.violations:
            print(exc, file=sys.stderr)
        return 1
    t = doc.topology
    print(f"ok: {len(t.nodes)} nodes, {len(t.terminals.onts)} ONTs")
    return 0


def cmd_budget(args) -> int:
    doc = load(args)
    t = doc.topology
    a = getattr(args, "from") or t.terminals.alice
    b = args.to or t.terminals.bob
    lam = args.wavelength
    path = path_between(t, a, b)
    rows = [(atom.node, atom.part, atom.loss_db) for atom in path_atoms(t, path, lam)]
    total = path_loss_db(t, a, b, lam)
    if args.format == "json":
        print(
            json.dumps(
                {
                    "from": a,
                    "to": b,
                    "wavelength_nm": lam,
                    "elements": [{"node": n, "part": p, "loss_db": x} for n, p, x in rows],
                    "total_db": total,
                },
                indent=2,
            )
        )
    elif args.format == "csv":
        print("node,part,loss_db")
        for n, p, x in rows:
            print(f"{n},{p},{x:.4f}")
        print(f"total,,{total:.4f}")
    else:
        print(f"{a} -> {b} at {lam:g} nm")
        for n, p, x in rows:
            print(f"  {n:16s} {p:10s} {x:8.3f} dB")
        print(f"  {'total':16s} {'':10s} {total:8.3f} dB")
    return 0


def _print_summary(s) -> None:
    br = "-" if s.back_reflection_dbm is None else f"{s.back_reflection_dbm:.2f} dBm"
    print(f"ONTs active     {s.n_onts}")
    print(f"blocks          {s.n_blocks} x {s.block_s:g} s")
    print(f"mean SKR        {s.mean_skr_bps:.1f} bps (analytic {s.analytic_skr_bps:.1f})")
    print(f"mean QBER       {s.mean_qber_percent:.3f} % (analytic {s.analytic_qber_percent:.3f})")
    print(f"back-reflection {br}")
    print(f"seed            {s.seed} ({s.rng})")


def cmd_simulate(args) -> int:
    doc = load(args)
    over = {}
    if args.duration is not None:
        over["duration_s"] = args.duration
    if args.block is not None:
        over["block_s"] = args.block
    if args.seed is not None:
        over["seed"] = args.seed
    if args.onts is not None:
        over["active_onts"] = doc.active(args.onts)
    scen = Scenario.from_document(doc, **over)
    ts, summary = run_scenario(scen)
    out = _out_dir(args)
    _write(out / "timeseries.csv", ts.to_csv())
    _write(out / "summary.json", summary.to_json())
    _print_summary(summary)
    return 0


def cmd_sweep(args) -> int:
    doc = load(args)
    try:
        counts = [int(x) for x in args.onts.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--onts expects comma-separated integers, got {args.onts!r}") from None
    over = {} if args.seed is None else {"seed": args.seed}
    rows = sweep(Scenario.from_document(doc, **over), counts)
    table = sweep_table(rows)
    out = _out_dir(args)
    _write(out / "sweep.csv", table)
    _write(out / "sweep.json", json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n")
    sys.stdout.write(table)
    return 0


def cmd_calibrate(args) -> int:
    doc = load(args)
    try:
        text = _read_text(args.observations)
    except OSError as exc:
        print(f"cannot read observations: {exc}", file=sys.stderr)
        return 2
    obs = cal.parse_observations_csv(text)
    model = LinkModel(doc)
    p0 = cal.CalibrationParams.from_physics(doc.physics, doc.plsu.db_per_added_ont)
    report = cal.fit(p0, obs, model, budget=args.budget, restarts=args.restarts, seed=args.seed)
    print(report.summary())
    ph = report.params.apply(doc.physics)
    print("n_onts,qber,skr_bps,back_refl_dbm  (fitted)")
    for row in obs.rows:
        ev = model.evaluate(doc.active(row.n_onts), ph)
        br = ev.back_reflection_dbm
        print(f"{row.n_onts},{ev.qber_percent:.3f},{ev.skr_bps:.1f},{'' if not math.isfinite(br) else f'{br:.2f}'}")
    out = _out_dir(args)
    _write(out / "physics.json", json.dumps(report.params.to_physics_fragment(), indent=2) + "\n")
    return 0


def cmd_report(args) -> int:
    doc = load(args)
    model = LinkModel(doc)
    counts = [int(x) for x in args.onts.split(",")] if args.onts else [len(doc.active())]
    print("n_onts,qber,skr_bps,back_refl_dbm,Y0,raman_fwd,raman_bwd,reflection,dark")
    for n in counts:
        ev = model.evaluate(doc.active(n))
        nb = ev.noise
        br = "" if not math.isfinite(nb.back_reflection_dbm) else f"{nb.back_reflection_dbm:.3f}"
        print(
            f"{n},{ev.qber_percent:.4f},{ev.skr_bps:.3f},{br},{nb.Y0:.4e},"
            f"{nb.raman_forward:.4e},{nb.raman_backward:.4e},{nb.reflection_leakage:.4e},{nb.dark:.4e}"
        )
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gponqkd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def doc_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("document", help="scenario JSON path, or builtin:fig1 / builtin:bench")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a document field")
        p.add_argument("--physics", metavar="JSON", help="physics fragment merged over the document")
        return p

    doc_cmd("validate", "check a scenario document").set_defaults(func=cmd_validate)

    p = doc_cmd("budget", "element-by-element loss between two nodes")
    p.add_argument("--from", help="start node (default: Alice)")
    p.add_argument("--to", help="end node (default: Bob)")
    p.add_argument("--wavelength", type=float, default=1310.0)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.set_defaults(func=cmd_budget)

    p = doc_cmd("simulate", "seeded per-block time series")
    p.add_argument("--duration", type=float, help="seconds")
    p.add_argument("--block", type=float, help="seconds per block")
    p.add_argument("--seed", type=int)
    p.add_argument("--onts", type=int, help="number of active ONTs")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = doc_cmd("sweep", "one summary row per active-ONT count")
    p.add_argument("--onts", default="0,1,5,9")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = doc_cmd("calibrate", "fit unpublished parameters to observations")
    p.add_argument("--observations", required=True, help="CSV n_onts,qber,skr_bps,back_refl_dbm")
    p.add_argument("--budget", type=int, default=20000, help="max objective evaluations")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0, help="restart seed")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = doc_cmd("report", "analytic noise budget and key rate")
    p.add_argument("--onts", help="comma-separated ONT counts (default: scenario)")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except (DocumentError, TopologyError, UnknownNodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
