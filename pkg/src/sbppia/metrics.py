"""Run-level figures of merit and their serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .spectrum import SpectrumGrid
from .traffic import Request


def bbp(blocked: Iterable[Request], offered: Iterable[Request]) -> float:
    """Blocked bandwidth over offered bandwidth."""
    total = sum(r.rho for r in offered)
    if total <= 0:
        raise ValueError("no offered bandwidth")
    return sum(r.rho for r in blocked) / total


def shareability(grid: SpectrumGrid) -> float:
    """Percentage of extra holders on backup cells, relative to the number of backup cells."""
    counts = grid.backup_count
    n_backup = int((counts > 0).sum())
    if n_backup == 0:
        return 0.0
    return 100.0 * float((counts[counts > 0] - 1).sum()) / n_backup


def total_slots_used(grid: SpectrumGrid) -> int:
    return int(grid.used_mask().sum())


def optimality_gap(milp_obj: float, heuristic_obj: float) -> float:
    if milp_obj == 0:
        raise ZeroDivisionError("optimum is zero; gap undefined")
    return 100.0 * (heuristic_obj - milp_obj) / milp_obj


@dataclass
class Snapshot:
    fragmentation: float
    shareability: float
    total_slots: int


def snapshot(grid: SpectrumGrid) -> Snapshot:
    return Snapshot(grid.network_fragmentation(), shareability(grid), total_slots_used(grid))


def mean_snapshot(snaps: Sequence[Snapshot]) -> Snapshot:
    if not snaps:
        return Snapshot(0.0, 0.0, 0)
    return Snapshot(
        float(np.mean([s.fragmentation for s in snaps])),
        float(np.mean([s.shareability for s in snaps])),
        int(round(np.mean([s.total_slots for s in snaps]))),
    )


SWEEP_COLUMNS = [
    "load_tbps", "cx_db", "bbp", "fragmentation", "shareability", "total_slots",
    "qot_failed_pct_max", "qot_failed_pct_min", "seed",
]


@dataclass
class RunReport:
    load_tbps: float
    cx_db: float
    bbp: float
    fragmentation: float
    shareability: float
    total_slots: int
    qot_failed_pct_max: float
    qot_failed_pct_min: float
    seed: int
    admitted: int = 0
    blocked: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def reports_to_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(asdict(r))
    return buf.getvalue()
