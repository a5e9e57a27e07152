"""Command-line experiment runner.

Settings come from three layers, highest first: command-line flags, a flat
``key=value`` config file (``--config``), built-in defaults. Config keys use
the long flag names with dashes or underscores (``cx_db=-30``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Any, Sequence

import numpy as np

from . import BUNDLED, bundled_topology
from .engine import (
    Allocation, EngineMode, SbppEngine, run_dynamic, verify_no_qot_failures,
)
from .metrics import RunReport, bbp, reports_to_csv, shareability, total_slots_used
from .pli import MF_TABLE, PliParameters
from .sorting import congestion_profile, sort_mcw_lcbf, sort_mdf
from .spectrum import SpectrumGrid
from .topology import FAILURE_MODELS, LINK, SRLG, Topology, candidate_pairs
from .traffic import (
    Request, generate_dynamic, generate_static, load_requests, rate_for_load,
)

log = logging.getLogger("sbppia")


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "topology": "fourteen",
    "params": None,
    "requests": None,
    "slots": 350,
    "k": 3,
    "k_b": 3,
    "sort": "mcw-lcbf",
    "failure_model": LINK,
    "impairment_unaware": False,
    "cx_db": None,
    "seed": 1,
    "count": 100,
    "rho_min": 10,
    "rho_max": 700,
    "load_tbps": 20.0,
    "mean_holding": 1.0,
    "events": 10000,
    "warmup": 0.1,
    "samples": 50,
    "m_max": 4,
    "loads": "10,20,30",
    "cx_list": "-30",
    "seeds": 30,
    "sweep_mode": "static",
    "node_limit": 2_000_000,
    "out": None,
    "allocation_out": None,
    "allocation": None,
}

_TYPES = {
    "slots": int, "k": int, "k_b": int, "seed": int, "count": int, "rho_min": int,
    "rho_max": int, "events": int, "samples": int, "m_max": int, "seeds": int,
    "node_limit": int, "load_tbps": float, "mean_holding": float, "warmup": float,
    "cx_db": float,
}


def _coerce(key: str, value: str) -> Any:
    if key == "impairment_unaware":
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    conv = _TYPES.get(key)
    try:
        return conv(value) if conv else value.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def load_config(text: str) -> dict[str, Any]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected key=value")
        if key not in DEFAULTS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, the config file and explicit flags."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            cfg.update(load_config(FilePath(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            cfg[key] = value
    if cfg["failure_model"] not in FAILURE_MODELS:
        raise ConfigError(f"unknown failure model {cfg['failure_model']!r}")
    if cfg["sort"] not in ("mcw-lcbf", "mdf", "given"):
        raise ConfigError(f"unknown sort {cfg['sort']!r}")
    return cfg


# ---- building blocks --------------------------------------------------------------------


def load_topology(name_or_path: str) -> Topology:
    if name_or_path in BUNDLED:
        return bundled_topology(name_or_path)
    return Topology.load(name_or_path)


def load_params(cfg: dict[str, Any]) -> PliParameters:
    params = PliParameters.load(cfg["params"]) if cfg["params"] else PliParameters()
    if cfg["cx_db"] is not None:
        params = params.with_cx_db(cfg["cx_db"])
    return params


def make_engine(cfg: dict[str, Any], topo: Topology, params: PliParameters) -> SbppEngine:
    mode = EngineMode(cfg["failure_model"], qot_checks=not cfg["impairment_unaware"])
    return SbppEngine(topo, cfg["slots"], params, mode, cfg["k"], cfg["k_b"])


def static_order(engine: SbppEngine, requests: Sequence[Request], how: str) -> list[int]:
    if how == "mdf":
        return sort_mdf(requests)
    if how == "given":
        return [r.id for r in requests]
    cands = {}
    for r in requests:
        try:
            cands[r.id] = engine.candidates(r.source, r.destination)
        except LookupError:
            cands[r.id] = []
    profiles = congestion_profile(requests, cands, engine.grid.n_slots, engine.k, engine.k_b)
    return sort_mcw_lcbf(profiles)


def static_report(cfg: dict[str, Any], requests: Sequence[Request] | None = None):
    topo = load_topology(cfg["topology"])
    params = load_params(cfg)
    if requests is None:
        if cfg["requests"]:
            requests = load_requests(cfg["requests"])
        else:
            requests = generate_static(
                topo, cfg["count"], (cfg["rho_min"], cfg["rho_max"]), cfg["seed"]
            )
    engine = make_engine(cfg, topo, params)
    order = static_order(engine, requests, cfg["sort"])
    admitted, blocked = engine.run_static(requests, order)
    qot = verify_no_qot_failures(engine.grid, params, engine.table)
    report = RunReport(
        load_tbps=sum(r.rho for r in requests) / 1000.0,
        cx_db=params.c_x_db,
        bbp=bbp([b.request for b in blocked], requests),
        fragmentation=engine.grid.network_fragmentation(),
        shareability=shareability(engine.grid),
        total_slots=total_slots_used(engine.grid),
        qot_failed_pct_max=qot.max_failed_pct,
        qot_failed_pct_min=qot.min_failed_pct,
        seed=cfg["seed"],
        admitted=len(admitted),
        blocked=len(blocked),
    )
    return report, engine


def dynamic_report(cfg: dict[str, Any]):
    topo = load_topology(cfg["topology"])
    params = load_params(cfg)
    rho_range = (cfg["rho_min"], cfg["rho_max"])
    rate = rate_for_load(cfg["load_tbps"], cfg["mean_holding"], rho_range)
    requests = generate_dynamic(
        topo, rate, cfg["mean_holding"], max(cfg["events"] // 2, 1), rho_range, cfg["seed"]
    )
    engine = make_engine(cfg, topo, params)
    res = run_dynamic(engine, requests, cfg["warmup"], cfg["samples"], verify=True)
    snaps, qots = res.snapshots, res.qot
    report = RunReport(
        load_tbps=cfg["load_tbps"],
        cx_db=params.c_x_db,
        bbp=bbp(res.blocked, res.offered),
        fragmentation=float(np.mean([s.fragmentation for s in snaps])) if snaps else 0.0,
        shareability=float(np.mean([s.shareability for s in snaps])) if snaps else 0.0,
        total_slots=int(round(np.mean([s.total_slots for s in snaps]))) if snaps else 0,
        qot_failed_pct_max=float(np.mean([q.max_failed_pct for q in qots])) if qots else 0.0,
        qot_failed_pct_min=float(np.mean([q.min_failed_pct for q in qots])) if qots else 0.0,
        seed=cfg["seed"],
        admitted=len(res.offered) - len(res.blocked),
        blocked=len(res.blocked),
    )
    return report, engine


# ---- allocation files ------------------------------------------------------------------


def dumps_allocation(engine: SbppEngine) -> str:
    grid = engine.grid
    doc = {
        "topology": engine.topology.dumps(),
        "params": engine.params.dumps(),
        "slots": grid.n_slots,
        "failure_model": grid.failure_model,
        "requests": [
            {
                "id": rid,
                "working": list(rec.working.nodes),
                "working_slots": {str(f): m for f, m in sorted(rec.working_slots.items())},
                "backup": list(rec.backup.nodes) if rec.backup else None,
                "backup_slots": {str(f): m for f, m in sorted(rec.backup_slots.items())},
            }
            for rid, rec in sorted(grid.records.items())
        ],
    }
    return json.dumps(doc, indent=1)


def loads_allocation(text: str) -> tuple[SpectrumGrid, PliParameters]:
    doc = json.loads(text)
    topo = Topology.loads(doc["topology"])
    params = PliParameters.loads(doc["params"])
    grid = SpectrumGrid(topo, int(doc["slots"]), doc["failure_model"])
    for item in doc["requests"]:
        working = topo.make_path(item["working"])
        grid.commit_working(item["id"], working, {int(f): m for f, m in item["working_slots"].items()})
        if item["backup"]:
            backup = topo.make_path(item["backup"])
            grid.commit_backup(
                item["id"], working, backup, {int(f): m for f, m in item["backup_slots"].items()}
            )
    return grid, params


# ---- commands ------------------------------------------------------------------------------


def _emit(text: str, out: str | None) -> None:
    if out:
        FilePath(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_static(cfg: dict[str, Any]) -> int:
    report, engine = static_report(cfg)
    _emit(report.to_json(), cfg["out"])
    if cfg["allocation_out"]:
        FilePath(cfg["allocation_out"]).write_text(dumps_allocation(engine))
    return 0


def cmd_dynamic(cfg: dict[str, Any]) -> int:
    report, engine = dynamic_report(cfg)
    _emit(report.to_json(), cfg["out"])
    if cfg["allocation_out"]:
        FilePath(cfg["allocation_out"]).write_text(dumps_allocation(engine))
    return 0


def _milp_instance(cfg: dict[str, Any]):
    topo = load_topology(cfg["topology"])
    if cfg["failure_model"] == SRLG and not any(g.node is not None for g in topo.srlgs.values()):
        topo = topo.with_node_srlgs()
    params = load_params(cfg)
    if cfg["requests"]:
        requests = load_requests(cfg["requests"])
    else:
        requests = generate_static(topo, cfg["count"], (cfg["rho_min"], cfg["rho_max"]), cfg["seed"])
    cands = {
        r.id: candidate_pairs(topo, r.source, r.destination, cfg["k"], cfg["k_b"], cfg["failure_model"])
        for r in requests
    }
    return topo, params, requests, cands


def cmd_milp_export(cfg: dict[str, Any]) -> int:
    from .milp import build_model, dumps_lp

    topo, params, requests, cands = _milp_instance(cfg)
    model = build_model(
        topo, requests, cands, params, cfg["slots"], cfg["m_max"], cfg["failure_model"]
    )
    _emit(dumps_lp(model), cfg["out"])
    log.info("%d variables, %d constraints", len(model.vars), len(model.constraints))
    return 0


def engine_table(m_max: int):
    return MF_TABLE[:m_max]


def cmd_oracle(cfg: dict[str, Any]) -> int:
    from .milp import exhaustive_optimize
    from .metrics import optimality_gap

    topo, params, requests, cands = _milp_instance(cfg)
    mode = EngineMode(cfg["failure_model"], qot_checks=True)
    engine = SbppEngine(topo, cfg["slots"], params, mode, cfg["k"], cfg["k_b"],
                        engine_table(cfg["m_max"]))
    admitted, blocked = [], []
    for rid in static_order(engine, requests, cfg["sort"]):
        r = next(q for q in requests if q.id == rid)
        out = engine.place(r, cands[rid])
        (admitted if isinstance(out, Allocation) else blocked).append(out)
    heuristic = engine.grid.objective() if not blocked else None
    result = exhaustive_optimize(
        topo, requests, cands, params, cfg["slots"], cfg["m_max"], cfg["failure_model"],
        upper_bound=heuristic, node_limit=cfg["node_limit"],
    )
    doc = {
        "optimum": result.objective,
        "heuristic": heuristic,
        "heuristic_blocked": len(blocked),
        "search_nodes": result.nodes,
        "gap_pct": (
            optimality_gap(result.objective, heuristic)
            if heuristic is not None and result.objective else None
        ),
    }
    _emit(json.dumps(doc, indent=2), cfg["out"])
    return 0


def cmd_verify(cfg: dict[str, Any]) -> int:
    if not cfg["allocation"]:
        raise ConfigError("verify needs --allocation")
    grid, params = loads_allocation(FilePath(cfg["allocation"]).read_text())
    report = verify_no_qot_failures(grid, params)
    doc = {
        "requests": report.requests,
        "max_failed": report.max_failed,
        "max_failed_pct": report.max_failed_pct,
        "per_scenario": {str(k): v for k, v in report.per_scenario.items()},
    }
    _emit(json.dumps(doc, indent=2), cfg["out"])
    return 0 if report.max_failed == 0 else 1


@dataclass(frozen=True)
class _Cell:
    cfg: tuple
    mode: str
    load: float


def _run_cell(cell: _Cell) -> RunReport:
    cfg = dict(cell.cfg)
    report = dynamic_report(cfg)[0] if cell.mode == "dynamic" else static_report(cfg)[0]
    report.load_tbps = cell.load
    return report


def worker_count() -> int:
    cap = os.environ.get("SBPP_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(int(cap), 1))
        except ValueError as exc:
            raise ConfigError(f"SBPP_THREADS must be an integer, got {cap!r}") from exc
    return n


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


def cmd_sweep(cfg: dict[str, Any]) -> int:
    cells = []
    for load in _floats(cfg["loads"]):
        for cx in _floats(cfg["cx_list"]):
            for seed in range(cfg["seed"], cfg["seed"] + cfg["seeds"]):
                c = dict(cfg, cx_db=cx, seed=seed)
                if cfg["sweep_mode"] == "static":
                    # static load is the summed demand: pick the request count
                    mean_rho = (cfg["rho_min"] + cfg["rho_max"]) / 2.0
                    c["count"] = max(int(round(load * 1000.0 / mean_rho)), 1)
                else:
                    c["load_tbps"] = load
                cells.append(_Cell(tuple(sorted(c.items())), cfg["sweep_mode"], load))
    workers = worker_count()
    if workers == 1:
        reports = [_run_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_cell, cells))
    _emit(reports_to_csv(reports), cfg["out"])
    return 0


COMMANDS = {
    "static": cmd_static,
    "dynamic": cmd_dynamic,
    "milp-export": cmd_milp_export,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbppia", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--topology", help="topology file, or a bundled name: " + ", ".join(BUNDLED))
    p.add_argument("--params", help="physical-layer parameter file")
    p.add_argument("--requests", help="traffic CSV (id,src,dst,rho_gbps[,arrival_s,holding_s])")
    p.add_argument("--slots", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--k-b", dest="k_b", type=int)
    p.add_argument("--sort", choices=["mcw-lcbf", "mdf", "given"])
    p.add_argument("--failure-model", dest="failure_model", choices=list(FAILURE_MODELS))
    p.add_argument("--impairment-unaware", dest="impairment_unaware", action="store_true",
                   help="skip every QoT check (baseline)")
    p.add_argument("--cx-db", dest="cx_db", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, help="generated static requests")
    p.add_argument("--rho-min", dest="rho_min", type=int)
    p.add_argument("--rho-max", dest="rho_max", type=int)
    p.add_argument("--load-tbps", dest="load_tbps", type=float)
    p.add_argument("--mean-holding", dest="mean_holding", type=float)
    p.add_argument("--events", type=int)
    p.add_argument("--warmup", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--loads", help="comma-separated offered loads (Tbps) for sweep")
    p.add_argument("--cx-list", dest="cx_list", help="comma-separated C_x values (dB) for sweep")
    p.add_argument("--seeds", type=int, help="repetitions per sweep point")
    p.add_argument("--sweep-mode", dest="sweep_mode", choices=["static", "dynamic"])
    p.add_argument("--node-limit", dest="node_limit", type=int)
    p.add_argument("--out")
    p.add_argument("--allocation-out", dest="allocation_out")
    p.add_argument("--allocation", help="allocation JSON to verify")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, OSError, ValueError, KeyError, LookupError) as exc:
        print(f"sbppia: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
