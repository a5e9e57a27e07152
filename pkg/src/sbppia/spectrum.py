"""Per-link frequency-slot occupancy.

Slots are numbered 1..N in the public API and stored 0-based in numpy
arrays. Working cells are exclusive. Backup cells hold a set of requests
whose working paths never fail together, so at most one of them is active
in any single-failure scenario.

Besides the occupancy the grid maintains ``active_in[s, v, f]``: how many
signals on slot ``f`` enter node ``v`` when scenario ``s`` is in force
(scenario 0 is "no failure"). In-band crosstalk on a path is a sum of these
counts over its launching nodes, so this table is what makes the robust
interference checks cheap.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .topology import LINK, Path, Topology

FREE = "free"
WORKING_STATE = "working"
BACKUP_STATE = "backup"


class Occupied(RuntimeError):
    """Target cell is not available; the caller skipped a feasibility check."""


class ShareConflict(RuntimeError):
    """A backup co-holder's working path can fail together with ours."""


class UnknownRequest(KeyError):
    pass


@dataclass(frozen=True)
class SlotCell:
    state: str
    owner: int | None = None
    mf: int | None = None
    holders: Mapping[int, int] = field(default_factory=dict)


@dataclass
class RequestRecord:
    request: int
    working: Path
    failset: frozenset[int]
    working_slots: dict[int, int] = field(default_factory=dict)
    backup: Path | None = None
    backup_slots: dict[int, int] = field(default_factory=dict)

    def path(self, role: str) -> Path:
        if role == WORKING_STATE:
            return self.working
        if self.backup is None:
            raise ValueError(f"request {self.request} has no backup")
        return self.backup

    def slots(self, role: str) -> dict[int, int]:
        return self.working_slots if role == WORKING_STATE else self.backup_slots


def _check_range(slots: Iterable[int], n_slots: int) -> list[int]:
    ordered = sorted(slots)
    if not ordered:
        raise ValueError("empty slot map")
    if ordered[0] < 1 or ordered[-1] > n_slots:
        raise ValueError(f"slots outside 1..{n_slots}")
    if ordered[-1] - ordered[0] + 1 != len(ordered):
        raise ValueError("slot set is not contiguous")
    return ordered


def contiguous_starts(free: np.ndarray, n_s: int) -> list[int]:
    """1-based starts of every window of ``n_s`` consecutive true cells."""
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    n = len(free)
    if n_s > n:
        return []
    csum = np.concatenate(([0], np.cumsum(free, dtype=np.int64)))
    window = csum[n_s:] - csum[:-n_s]
    return (np.flatnonzero(window == n_s) + 1).tolist()


class SpectrumGrid:
    def __init__(self, topology: Topology, n_slots: int, failure_model: str = LINK) -> None:
        if n_slots < 1:
            raise ValueError("need at least one slot")
        self.topology = topology
        self.n_slots = n_slots
        self.failure_model = failure_model
        self.link_ids = list(topology.links)
        self._lidx = {lid: k for k, lid in enumerate(self.link_ids)}
        self.node_ids = sorted(topology.nodes)
        self._nidx = {nid: k for k, nid in enumerate(self.node_ids)}
        self.elements = topology.failure_elements(failure_model)
        self.scenarios: list[int | None] = [None, *self.elements]
        self._sidx = {e: k + 1 for k, e in enumerate(self.elements)}

        n_links, n_scen = len(self.link_ids), len(self.scenarios)
        self.owner = np.full((n_links, n_slots), -1, dtype=np.int64)
        self.owner_mf = np.zeros((n_links, n_slots), dtype=np.int8)
        self.backup_count = np.zeros((n_links, n_slots), dtype=np.int32)
        # conflict[s, l, f]: backup holders of (l, f) whose working fails under scenario s
        self.conflict = np.zeros((n_scen, n_links, n_slots), dtype=np.int32)
        self.active_in = np.zeros((n_scen, len(self.node_ids), n_slots), dtype=np.int32)
        self._holders: dict[tuple[int, int], dict[int, int]] = {}
        self.records: dict[int, RequestRecord] = {}

    # ---- index helpers ---------------------------------------------------------

    def link_index(self, links: Iterable[int]) -> np.ndarray:
        return np.fromiter((self._lidx[l] for l in links), dtype=np.int64)

    def node_index(self, nodes: Iterable[int]) -> np.ndarray:
        return np.fromiter((self._nidx[n] for n in nodes), dtype=np.int64)

    def scenario_indices(self, elements: Iterable[int]) -> np.ndarray:
        return np.fromiter((self._sidx[e] for e in elements if e in self._sidx), dtype=np.int64)

    def scenario_index(self, failure: int | None) -> int:
        return 0 if failure is None else self._sidx[failure]

    def failset(self, path: Path) -> frozenset[int]:
        return self.topology.failset(path, self.failure_model)

    # ---- availability ------------------------------------------------------------

    def allocatable(
        self, path: Path, role: str, working_failset: Iterable[int] | None = None
    ) -> np.ndarray:
        """Per-slot mask of cells usable on every link of ``path``.

        A backup may land on cells already held by backups whose working
        paths are disjoint from (cannot fail with) ours.
        """
        lidx = self.link_index(path.links)
        blocked = self.owner[lidx] >= 0
        if role == WORKING_STATE:
            blocked |= self.backup_count[lidx] > 0
        else:
            if working_failset is None:
                raise ValueError("backup role needs the working path's failure set")
            sidx = self.scenario_indices(working_failset)
            if len(sidx):
                blocked |= self.conflict[np.ix_(sidx, lidx)].sum(axis=0) > 0
        return ~blocked.any(axis=0)

    def find_contiguous_starts(
        self,
        path: Path,
        n_s: int,
        role: str = WORKING_STATE,
        working_failset: Iterable[int] | None = None,
    ) -> list[int]:
        return contiguous_starts(self.allocatable(path, role, working_failset), n_s)

    # ---- mutation --------------------------------------------------------------

    def commit_working(self, request: int, path: Path, slot_mf: Mapping[int, int]) -> None:
        rec = self.records.get(request)
        if rec is not None and rec.working_slots:
            raise Occupied(f"request {request} already holds working spectrum")
        slots = _check_range(slot_mf, self.n_slots)
        lidx = self.link_index(path.links)
        cols = np.asarray(slots) - 1
        cells = np.ix_(lidx, cols)
        if (self.owner[cells] >= 0).any() or (self.backup_count[cells] > 0).any():
            raise Occupied(f"request {request}: working cells not free")
        self.owner[cells] = request
        self.owner_mf[cells] = np.asarray([slot_mf[f] for f in slots], dtype=np.int8)
        if rec is None:
            rec = RequestRecord(request, path, self.failset(path))
            self.records[request] = rec
        elif rec.working != path:
            raise ValueError("working path differs from the recorded one")
        rec.working_slots = {f: slot_mf[f] for f in slots}
        self._add_active(path, cols, ~self._on_mask(rec.failset), +1)

    def commit_backup(
        self, request: int, working_path: Path, backup_path: Path, slot_mf: Mapping[int, int]
    ) -> None:
        rec = self.records.get(request)
        if rec is not None:
            if rec.working != working_path:
                raise ValueError("working path differs from the recorded one")
            if rec.backup is not None:
                raise Occupied(f"request {request} already holds backup spectrum")
        failset = self.failset(working_path)
        slots = _check_range(slot_mf, self.n_slots)
        lidx = self.link_index(backup_path.links)
        cols = np.asarray(slots) - 1
        cells = np.ix_(lidx, cols)
        if (self.owner[cells] >= 0).any():
            raise Occupied(f"request {request}: backup overlaps working cells")
        sidx = self.scenario_indices(failset)
        if len(sidx) and (self.conflict[np.ix_(sidx, lidx, cols)] > 0).any():
            raise ShareConflict(f"request {request}: co-holder working paths intersect")
        if rec is None:
            rec = RequestRecord(request, working_path, failset)
            self.records[request] = rec
        rec.backup = backup_path
        rec.backup_slots = {f: slot_mf[f] for f in slots}
        for l in lidx:
            for f in slots:
                self._holders.setdefault((int(l), f - 1), {})[request] = slot_mf[f]
        self.backup_count[cells] += 1
        if len(sidx):
            self.conflict[np.ix_(sidx, lidx, cols)] += 1
        self._add_active(backup_path, cols, self._on_mask(failset), +1)

    def release(self, request: int) -> RequestRecord:
        """Free working cells and drop the request from its backup holder sets."""
        rec = self.records.pop(request, None)
        if rec is None:
            raise UnknownRequest(request)
        if rec.working_slots:
            lidx = self.link_index(rec.working.links)
            cols = np.asarray(sorted(rec.working_slots)) - 1
            cells = np.ix_(lidx, cols)
            self.owner[cells] = -1
            self.owner_mf[cells] = 0
            self._add_active(rec.working, cols, ~self._on_mask(rec.failset), -1)
        if rec.backup is not None and rec.backup_slots:
            lidx = self.link_index(rec.backup.links)
            cols = np.asarray(sorted(rec.backup_slots)) - 1
            for l in lidx:
                for c in cols:
                    key = (int(l), int(c))
                    holders = self._holders[key]
                    del holders[request]
                    if not holders:
                        del self._holders[key]
            self.backup_count[np.ix_(lidx, cols)] -= 1
            sidx = self.scenario_indices(rec.failset)
            if len(sidx):
                self.conflict[np.ix_(sidx, lidx, cols)] -= 1
            self._add_active(rec.backup, cols, self._on_mask(rec.failset), -1)
        return rec

    def _on_mask(self, failset: Iterable[int]) -> np.ndarray:
        mask = np.zeros(len(self.scenarios), dtype=bool)
        mask[self.scenario_indices(failset)] = True
        return mask

    def _add_active(self, path: Path, cols: np.ndarray, scen_mask: np.ndarray, sign: int) -> None:
        sidx = np.flatnonzero(scen_mask)
        if len(sidx) == 0:
            return
        self.active_in[np.ix_(sidx, self.node_index(path.tails), cols)] += sign

    # ---- interference counts ------------------------------------------------------

    def scenario_counts_all(self, heads: Iterable[int]) -> np.ndarray:
        """``[scenario, slot]`` count of signals entering the given launch nodes."""
        return self.active_in[:, self.node_index(heads), :].sum(axis=1)

    def scenario_counts(self, heads: Iterable[int], slot: int, exclude: int | None = None) -> np.ndarray:
        """Per-scenario entering-signal count at one slot, minus the ``exclude`` request's own."""
        heads = tuple(heads)
        counts = self.active_in[:, self.node_index(heads), slot - 1].sum(axis=1).astype(np.int64)
        rec = self.records.get(exclude) if exclude is not None else None
        if rec is not None:
            head_set = set(heads)
            on = self._on_mask(rec.failset)
            if slot in rec.working_slots:
                counts -= sum(1 for n in rec.working.tails if n in head_set) * (~on)
            if rec.backup is not None and slot in rec.backup_slots:
                counts -= sum(1 for n in rec.backup.tails if n in head_set) * on
        return counts

    # ---- inspection ----------------------------------------------------------------

    def cell(self, link: int, slot: int) -> SlotCell:
        l, c = self._lidx[link], slot - 1
        if self.owner[l, c] >= 0:
            return SlotCell(WORKING_STATE, int(self.owner[l, c]), int(self.owner_mf[l, c]))
        holders = self._holders.get((l, c))
        if holders:
            return SlotCell(BACKUP_STATE, holders=dict(holders))
        return SlotCell(FREE)

    def holders(self, link: int, slot: int) -> dict[int, int]:
        return dict(self._holders.get((self._lidx[link], slot - 1), {}))

    def used_mask(self) -> np.ndarray:
        """``[link, slot]`` true where a cell is not free."""
        return (self.owner >= 0) | (self.backup_count > 0)

    def highest_indexed_slot(self, link: int) -> int:
        used = np.flatnonzero(self.used_mask()[self._lidx[link]])
        return int(used[-1]) + 1 if len(used) else 0

    def highest_slots(self) -> np.ndarray:
        used = self.used_mask()
        idx = np.arange(1, self.n_slots + 1)
        return (used * idx).max(axis=1)

    def objective(self) -> int:
        """Sum over links of the highest occupied slot index."""
        return int(self.highest_slots().sum())

    def fragmentation(self, link: int) -> float:
        return link_fragmentation(~self.used_mask()[self._lidx[link]])

    def network_fragmentation(self) -> float:
        free = ~self.used_mask()
        return float(np.mean([link_fragmentation(row) for row in free])) if len(free) else 0.0

    def backup_holder_counts(self) -> np.ndarray:
        return self.backup_count.copy()

    def dump_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link_id", "slot", "state", "holders", "mfs"])
        for lid in self.link_ids:
            for f in range(1, self.n_slots + 1):
                c = self.cell(lid, f)
                if c.state == WORKING_STATE:
                    w.writerow([lid, f, c.state, c.owner, c.mf])
                elif c.state == BACKUP_STATE:
                    ids = sorted(c.holders)
                    w.writerow(
                        [lid, f, c.state, ";".join(map(str, ids)),
                         ";".join(str(c.holders[i]) for i in ids)]
                    )
                else:
                    w.writerow([lid, f, c.state, "", ""])
        return buf.getvalue()


def link_fragmentation(free: np.ndarray) -> float:
    """1 - largest free run / free cells; 0 when nothing or everything is free."""
    free = np.asarray(free, dtype=bool)
    total = int(free.sum())
    if total == 0 or total == len(free):
        return 0.0
    padded = np.concatenate(([False], free, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    longest = int((edges[1::2] - edges[::2]).max())
    return 1.0 - longest / total
