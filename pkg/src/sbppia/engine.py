"""Impairment-aware shared-backup allocator.

For every candidate (working, backup) pair the engine walks First-Fit slot
windows, assigns the highest modulation format whose worst-case SINR clears
its threshold, and makes sure no already admitted request loses its QoT
under any single failure. The pair with the smallest sum of per-link
highest occupied slots wins.

Interference is tracked as integer signal counts per failure scenario (see
:mod:`sbppia.spectrum`). Admitted requests keep a cached ``[scenario, slot]``
count matrix for each of their paths, updated whenever a neighbour arrives
or leaves, so rechecking them costs one vector comparison per slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import pli
from .pli import BACKUP, MF_TABLE, WORKING, ModulationFormat, PliParameters
from .spectrum import SpectrumGrid
from .topology import LINK, SRLG, Path, PathPair, Topology, candidate_pairs
from .traffic import ARRIVAL, BASE_RATE_GBPS, Request, event_stream


class PathExhausted(RuntimeError):
    """No First-Fit window yields a complete allocation on the path."""


@dataclass(frozen=True)
class EngineMode:
    failure_model: str = LINK
    qot_checks: bool = True


@dataclass(frozen=True)
class Allocation:
    request: Request
    working: Path
    backup: Path
    working_slots: dict[int, int]
    backup_slots: dict[int, int]
    objective: int
    working_index: int = 0
    backup_index: int = 0


@dataclass(frozen=True)
class Blocked:
    request: Request
    reason: str


def min_slots(rho: float, m: int) -> int:
    """Fewest slots that can carry ``rho`` Gbps at format index ``m``."""
    if rho <= 0 or m < 1:
        raise ValueError("rho and m must be positive")
    return math.ceil(rho / (BASE_RATE_GBPS * m))


def demand_units(rho: float) -> int:
    return math.ceil(rho / BASE_RATE_GBPS)


def greedy_walk(
    cfs: Iterable[int],
    free: np.ndarray,
    best_mf: np.ndarray,
    units: int,
    existing_ok: Callable[[int], bool] | None = None,
) -> dict[int, int] | None:
    """First-Fit bitloading walk.

    ``free`` and ``best_mf`` are indexed by 1-based slot (index 0 unused);
    ``best_mf[f]`` is the highest admissible format at ``f`` (0 for none).
    Each window start is tried with a fresh demand; a slot takes the
    highest admissible format, backed off so the demand is met exactly.
    The walk restarts at the next start when a slot is taken, has no
    admissible format, or would break an admitted request.
    """
    n = len(free) - 1
    for start in cfs:
        need = units
        chosen: dict[int, int] = {}
        f = start
        while True:
            m = int(best_mf[f])
            if m == 0 or (existing_ok is not None and not existing_ok(f)):
                break
            m = min(m, need)
            chosen[f] = m
            need -= m
            if need == 0:
                return chosen
            f += 1
            if f > n or not free[f]:
                break
    return None


@dataclass
class _Tracked:
    """An admitted path's interference bookkeeping."""

    path: Path
    start: int
    counts: np.ndarray  # [scenario, slot - start]
    allowed: np.ndarray  # scenarios in which the path carries traffic
    caps: np.ndarray  # tolerated interferer count per slot
    slack: list[int] = field(default_factory=list)  # caps minus current worst count

    def refresh(self, col: int) -> None:
        if self.allowed.any():
            self.slack[col] = int(self.caps[col] - self.counts[self.allowed, col].max())
        else:
            self.slack[col] = 1 << 30


class SbppEngine:
    """Sequential admission of requests onto one spectrum grid."""

    def __init__(
        self,
        topology: Topology,
        n_slots: int,
        params: PliParameters | None = None,
        mode: EngineMode = EngineMode(),
        k: int = 3,
        k_b: int = 3,
        table: Sequence[ModulationFormat] = MF_TABLE,
    ) -> None:
        if mode.failure_model == SRLG and not any(g.node is not None for g in topology.srlgs.values()):
            topology = topology.with_node_srlgs()
        self.topology = topology
        self.mode = mode
        self.params = params if params is not None else PliParameters()
        self.table = tuple(table)
        self.m_max = len(self.table)
        self.k, self.k_b = k, k_b
        self.grid = SpectrumGrid(topology, n_slots, mode.failure_model)
        self.allocations: dict[int, Allocation] = {}
        self._pairs: dict[tuple[int, int], list[PathPair]] = {}
        self._caps: dict[Path, np.ndarray] = {}
        self._tracked: dict[tuple[int, str], _Tracked] = {}
        self._users: dict[tuple[int, int], set[tuple[int, str]]] = {}

    # ---- helpers -----------------------------------------------------------------

    def candidates(self, source: int, destination: int) -> list[PathPair]:
        key = (source, destination)
        if key not in self._pairs:
            self._pairs[key] = candidate_pairs(
                self.topology, source, destination, self.k, self.k_b, self.mode.failure_model
            )
        return self._pairs[key]

    def path_caps(self, path: Path) -> np.ndarray:
        """Interferer count each format tolerates on ``path`` (index 0 unused)."""
        caps = self._caps.get(path)
        if caps is None:
            sigma = pli.path_ase_variance(self.params, self.topology, path)
            caps = pli.interferer_caps(self.params, sigma, self.table)
            self._caps[path] = caps
        return caps

    def _scenario_mask(self, role: str, failset: Iterable[int]) -> np.ndarray:
        return pli.scenario_mask(self.grid, role, failset)

    def _best_mf(self, path: Path, role: str, failset: frozenset[int]) -> np.ndarray:
        """Highest admissible format per slot (1-based, index 0 unused)."""
        n = self.grid.n_slots
        out = np.zeros(n + 1, dtype=np.int64)
        if not self.mode.qot_checks:
            out[1:] = self.m_max
            return out
        mask = self._scenario_mask(role, failset)
        if mask.any():
            worst = self.grid.scenario_counts_all(path.heads)[mask].max(axis=0)
        else:
            worst = np.zeros(n, dtype=np.int64)
        caps = self.path_caps(path)
        best = np.zeros(n, dtype=np.int64)
        for m in range(self.m_max, 0, -1):
            best = np.where((best == 0) & (worst <= caps[m]), m, best)
        out[1:] = best
        return out

    def _free(self, path: Path, role: str, failset: frozenset[int]) -> np.ndarray:
        free = np.zeros(self.grid.n_slots + 1, dtype=bool)
        free[1:] = self.grid.allocatable(path, role, failset)
        return free

    def _existing_ok(self, f: int, contributions: Sequence[tuple[Path, np.ndarray]]) -> bool:
        """Would admitted requests keep their QoT if these paths also lit slot ``f``?"""
        adds: dict[tuple[int, str], list] = {}
        for path, mask in contributions:
            for node in path.tails:
                for key in self._users.get((node, f), ()):
                    entry = adds.setdefault(key, [0, 0])
                    entry[0] = entry[0] + mask
                    entry[1] += 1
        for key, (add, hits) in adds.items():
            t = self._tracked[key]
            col = f - t.start
            if t.slack[col] >= hits:
                continue  # even a signal in every scenario fits
            if (t.counts[:, col] + add)[t.allowed].max() > t.caps[col]:
                return False
        return True

    # ---- path allocation ---------------------------------------------------------

    def allocate_path(
        self,
        rho: float,
        path: Path,
        role: str,
        working_failset: frozenset[int],
        cfs: Sequence[int] | None = None,
        tentative: tuple[Path, dict[int, int]] | None = None,
    ) -> dict[int, int]:
        """Slot-to-format map for one path, or :class:`PathExhausted`.

        ``tentative`` is the same request's not-yet-committed working
        allocation; it is counted when admitted requests are rechecked
        during the backup walk.
        """
        result = self._walk(rho, path, role, working_failset, cfs, tentative)
        if result is None:
            raise PathExhausted(f"no feasible window on path {path.nodes}")
        return result

    def _walk(self, rho, path, role, failset, cfs=None, tentative=None):
        if cfs is None:
            cfs = self.grid.find_contiguous_starts(
                path, min_slots(rho, self.m_max), role, failset
            )
        if not cfs:
            return None
        free = self._free(path, role, failset)
        best = self._best_mf(path, role, failset)
        check = None
        if self.mode.qot_checks and self._users:
            mask = self._scenario_mask(role, failset).astype(np.int64)
            contributions = [(path, mask)]
            tent_slots: dict[int, int] = {}
            if tentative is not None:
                tent_slots = tentative[1]
                tent_mask = self._scenario_mask(WORKING, failset).astype(np.int64)
            memo: dict[int, bool] = {}

            def check(f: int) -> bool:
                if f not in memo:
                    contrib = contributions
                    if f in tent_slots:
                        contrib = contributions + [(tentative[0], tent_mask)]
                    memo[f] = self._existing_ok(f, contrib)
                return memo[f]

        return greedy_walk(cfs, free, best, demand_units(rho), check)

    # ---- placement ------------------------------------------------------------------

    def evaluate(self, request: Request, pairs: Sequence[PathPair] | None = None) -> list[Allocation]:
        """Every (working, backup) combination that completes, without committing."""
        if pairs is None:
            pairs = self.candidates(request.source, request.destination)
        highest = self.grid.highest_slots()
        found = []
        for wi, pair in enumerate(pairs):
            if not pair.backups:
                continue
            fs = self.grid.failset(pair.working)
            w_slots = self._walk(request.rho, pair.working, WORKING, fs)
            if w_slots is None:
                continue
            w_top = max(w_slots)
            for bi, backup in enumerate(pair.backups):
                b_slots = self._walk(
                    request.rho, backup, BACKUP, fs, tentative=(pair.working, w_slots)
                )
                if b_slots is None:
                    continue
                tops = highest.copy()
                wl = self.grid.link_index(pair.working.links)
                bl = self.grid.link_index(backup.links)
                tops[wl] = np.maximum(tops[wl], w_top)
                tops[bl] = np.maximum(tops[bl], max(b_slots))
                found.append(
                    Allocation(
                        request, pair.working, backup, w_slots, b_slots, int(tops.sum()), wi, bi
                    )
                )
        return found

    def place(self, request: Request, pairs: Sequence[PathPair] | None = None) -> Allocation | Blocked:
        if request.id in self.allocations:
            raise ValueError(f"request {request.id} already admitted")
        if pairs is None:
            try:
                pairs = self.candidates(request.source, request.destination)
            except LookupError:
                return Blocked(request, "unreachable")
        if not any(p.backups for p in pairs):
            return Blocked(request, "no disjoint backup")
        options = self.evaluate(request, pairs)
        if not options:
            return Blocked(request, "no spectrum")
        best = min(
            options,
            key=lambda a: (a.objective, a.working.distance_km, a.working_index, a.backup_index),
        )
        self.commit(best)
        return best

    def commit(self, alloc: Allocation) -> None:
        rid = alloc.request.id
        fs = self.grid.failset(alloc.working)
        on = self._scenario_mask(BACKUP, fs)
        roles = ((WORKING, alloc.working, alloc.working_slots, ~on),
                 (BACKUP, alloc.backup, alloc.backup_slots, on))
        if self.mode.qot_checks:
            for role, path, slots, allowed in roles:
                start = min(slots)
                cols = np.asarray(sorted(slots)) - 1
                counts = self.grid.scenario_counts_all(path.heads)[:, cols].astype(np.int64)
                caps = self.path_caps(path)
                t = _Tracked(
                    path, start, counts, allowed.copy(),
                    np.asarray([caps[slots[f]] for f in sorted(slots)]), [0] * len(slots),
                )
                for col in range(len(slots)):
                    t.refresh(col)
                self._tracked[(rid, role)] = t
            for role, path, slots, allowed in roles:
                self._spread(path, slots, allowed.astype(np.int64), +1)
            for role, path, slots, _ in roles:
                for node in path.heads:
                    for f in slots:
                        self._users.setdefault((node, f), set()).add((rid, role))
        self.grid.commit_working(rid, alloc.working, alloc.working_slots)
        self.grid.commit_backup(rid, alloc.working, alloc.backup, alloc.backup_slots)
        self.allocations[rid] = alloc

    def release(self, request_id: int) -> Allocation:
        """Depart a request. No recheck is needed: removing signals only lowers interference."""
        alloc = self.allocations.pop(request_id)
        self.grid.release(request_id)
        if self.mode.qot_checks:
            for role, path, slots in ((WORKING, alloc.working, alloc.working_slots),
                                      (BACKUP, alloc.backup, alloc.backup_slots)):
                t = self._tracked.pop((request_id, role))
                for node in path.heads:
                    for f in slots:
                        users = self._users[(node, f)]
                        users.discard((request_id, role))
                        if not users:
                            del self._users[(node, f)]
                self._spread(path, slots, t.allowed.astype(np.int64), -1)
        return alloc

    def _spread(self, path: Path, slots: Iterable[int], mask: np.ndarray, sign: int) -> None:
        """Add (or remove) a path's signals to the cached counts of admitted neighbours."""
        for f in slots:
            for node in path.tails:
                for key in self._users.get((node, f), ()):
                    t = self._tracked[key]
                    t.counts[:, f - t.start] += sign * mask
                    t.refresh(f - t.start)

    def tracked_counts(self, request_id: int, role: str) -> np.ndarray:
        return self._tracked[(request_id, role)].counts.copy()

    def run_static(self, requests: Sequence[Request], order: Sequence[int] | None = None):
        """Admit requests one by one; returns (allocations, blocked)."""
        by_id = {r.id: r for r in requests}
        order = order if order is not None else [r.id for r in requests]
        admitted, blocked = [], []
        for rid in order:
            out = self.place(by_id[rid])
            (admitted if isinstance(out, Allocation) else blocked).append(out)
        return admitted, blocked


@dataclass
class DynamicResult:
    offered: list[Request]
    blocked: list[Request]
    snapshots: list = field(default_factory=list)  # metrics.Snapshot
    qot: list["QotReport"] = field(default_factory=list)
    events: int = 0


def run_dynamic(
    engine: SbppEngine,
    requests: Sequence[Request],
    warmup: float = 0.1,
    samples: int = 50,
    verify: bool = False,
) -> DynamicResult:
    """Replay arrivals and departures; sample the grid at departures after warm-up.

    With ``verify`` every sample also recounts QoT from scratch.
    """
    from .metrics import snapshot

    events = list(event_stream(requests))
    first = int(len(events) * warmup)
    departures = sum(1 for e in events[first:] if e.kind != ARRIVAL)
    step = max(departures // max(samples, 1), 1)
    result = DynamicResult([], [], events=len(events))
    seen = 0
    for k, ev in enumerate(events):
        r = ev.request
        if ev.kind == ARRIVAL:
            result.offered.append(r)
            out = engine.place(r)
            if isinstance(out, Blocked):
                result.blocked.append(r)
            continue
        if r.id not in engine.allocations:
            continue  # was blocked
        engine.release(r.id)
        if k < first:
            continue
        seen += 1
        if seen % step == 0 and len(result.snapshots) < samples:
            result.snapshots.append(snapshot(engine.grid))
            if verify:
                result.qot.append(verify_no_qot_failures(engine.grid, engine.params, engine.table))
    return result


# ---- independent verification ---------------------------------------------------------


@dataclass
class QotReport:
    max_failed: int
    per_scenario: dict[int | None, int]
    requests: int

    @property
    def max_failed_pct(self) -> float:
        return 100.0 * self.max_failed / self.requests if self.requests else 0.0

    @property
    def min_failed_pct(self) -> float:
        if not self.requests or not self.per_scenario:
            return 0.0
        return 100.0 * min(self.per_scenario.values()) / self.requests


def verify_no_qot_failures(
    grid: SpectrumGrid,
    params: PliParameters,
    table: Sequence[ModulationFormat] = MF_TABLE,
) -> QotReport:
    """Recount interference from scratch in every scenario and test every allocated slot.

    Works only from the grid's records, so it is independent of the
    engine's incremental caches.
    """
    topo = grid.topology
    n_nodes = len(grid.node_ids)
    nidx = {n: i for i, n in enumerate(grid.node_ids)}
    p_ch = pli.received_channel_power(params)
    unit = pli.crosstalk_unit(params)

    prepared = {}
    for rid, rec in grid.records.items():
        for role in (WORKING, BACKUP):
            if role == BACKUP and rec.backup is None:
                continue
            slots = rec.slots(role)
            if not slots:
                continue
            path = rec.path(role)
            order = sorted(slots)
            prepared[(rid, role)] = (
                np.asarray([nidx[n] for n in path.heads]),
                np.asarray([nidx[n] for n in path.tails]),
                np.asarray(order) - 1,
                [slots[f] for f in order],
                pli.path_ase_variance(params, topo, path),
                len(path.intermediate),
            )

    per_scenario: dict[int | None, int] = {}
    for failure in grid.scenarios:
        active = pli.scenario_active_set(grid, failure)
        entering = np.zeros((n_nodes, grid.n_slots), dtype=np.int64)
        live = [(rid, role) for rid, role in active if (rid, role) in prepared]
        for key in live:
            _, tails, cols, *_ = prepared[key]
            entering[np.ix_(tails, cols)] += 1
        failed = 0
        for key in live:
            heads, _, cols, mfs, sigma, own = prepared[key]
            # a path's own signal enters each of its intermediate nodes
            counts = entering[np.ix_(heads, cols)].sum(axis=0) - own
            for count, mf in zip(counts, mfs):
                budget = pli.SinrBudget(p_ch, sigma, int(count) * unit, params.p_r)
                if not pli.qot_admissible(budget, mf, table):
                    failed += 1
                    break
        per_scenario[failure] = failed
    return QotReport(max(per_scenario.values(), default=0), per_scenario, len(grid.records))
