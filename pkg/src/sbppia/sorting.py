"""Static request ordering: congestion-ratio ranking (MCW-LCBF) and demand-first (MDF).

Every other request is assumed to pick one of its K working paths uniformly
and then one of that path's K_b backups uniformly. A link's congestion is the
expected number of foreign paths crossing it, weighted by their BPSK slot
count over N. Requests whose working paths are congested and whose backups
are quiet go first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .topology import Path, PathPair
from .traffic import Request, bpsk_slots

RATIO_FLOOR = 1e-9


def link_weights(pairs: Sequence[PathPair], k: int, k_b: int) -> dict[int, float]:
    """Per-link probability mass a request's candidate set puts on each link."""
    weights: dict[int, float] = {}
    for pair in pairs:
        for l in pair.working.links:
            weights[l] = weights.get(l, 0.0) + 1.0 / k
        for b in pair.backups:
            for l in b.links:
                weights[l] = weights.get(l, 0.0) + 1.0 / (k * k_b)
    return weights


def pairwise_link_congestion(link: int, other: Sequence[PathPair], k: int, k_b: int) -> float:
    """Probability-weighted count of the other request's paths that cross ``link``."""
    total = 0.0
    for pair in other:
        on_working = 1.0 / k if link in pair.working.link_set else 0.0
        d = sum(1 for b in pair.backups if link in b.link_set)
        total += on_working + d / (k * k_b)
    return total


@dataclass
class CongestionProfile:
    request: int
    rho: int
    working: list[float]  # one per working path
    backup: list[list[float]]  # [working][backup]
    ratios: list[list[float]]
    con: float


def _path_congestion(path: Path, csl: Mapping[int, float], own_slots: int) -> float:
    return sum(csl.get(l, 0.0) for l in path.links) * own_slots


def congestion_profile(
    requests: Sequence[Request],
    candidates: Mapping[int, Sequence[PathPair]],
    n_slots: int,
    k: int,
    k_b: int,
) -> list[CongestionProfile]:
    weights = {r.id: link_weights(candidates[r.id], k, k_b) for r in requests}
    scaled = {r.id: bpsk_slots(r.rho) / n_slots for r in requests}

    profiles = []
    for r in requests:
        csl: dict[int, float] = {}
        for other in requests:
            if other.id == r.id:
                continue
            for l, w in weights[other.id].items():
                csl[l] = csl.get(l, 0.0) + w * scaled[other.id]
        slots = bpsk_slots(r.rho)
        working, backup, ratios = [], [], []
        for pair in candidates[r.id]:
            cw = _path_congestion(pair.working, csl, slots)
            cb = [_path_congestion(b, csl, slots) for b in pair.backups]
            working.append(cw)
            backup.append(cb)
            ratios.append([cw / max(c, RATIO_FLOOR) for c in cb])
        flat = [x for row in ratios for x in row]
        con = sum(flat) / len(flat) if flat else 0.0
        profiles.append(CongestionProfile(r.id, r.rho, working, backup, ratios, con))
    return profiles


def sort_mcw_lcbf(profiles: Sequence[CongestionProfile]) -> list[int]:
    """Request ids by congestion ratio descending, then demand descending, then id."""
    return [p.request for p in sorted(profiles, key=lambda p: (-p.con, -p.rho, p.request))]


def sort_mdf(requests: Sequence[Request]) -> list[int]:
    return [r.id for r in sorted(requests, key=lambda r: (-r.rho, r.id))]


def dumps_profiles(profiles: Sequence[CongestionProfile]) -> str:
    rows = ["request,working_idx,backup_idx,con_working,con_backup,ratio"]
    for p in profiles:
        for i, (cw, cbs) in enumerate(zip(p.working, p.backup)):
            for j, cb in enumerate(cbs):
                rows.append(f"{p.request},{i},{j},{cw!r},{cb!r},{p.ratios[i][j]!r}")
    return "\n".join(rows) + "\n"
