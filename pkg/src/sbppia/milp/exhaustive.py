"""Exact optimum of tiny instances by branch and bound.

A request's option is (candidate pair, backup, working slot range, backup
slot range). Formats are not branched on: crosstalk depends only on which
slots are lit, so a path with ``u`` slots carrying ``k`` demand units is
loadable iff ``u <= k <= sum(per-slot format caps)``. Adding signals can
only lower caps, so a partial placement that fails QoT is pruned, and the
objective only grows, so any partial objective at or above the incumbent
is pruned too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .. import pli
from ..pli import MF_TABLE, ModulationFormat, PliParameters
from ..topology import LINK, Path, PathPair, Topology
from ..traffic import BASE_RATE_GBPS, Request
from .build import RequestChoice


class SearchSpaceExceeded(RuntimeError):
    pass


@dataclass
class ExhaustiveResult:
    objective: int | None  # None when infeasible
    choice: dict[int, RequestChoice] = field(default_factory=dict)
    nodes: int = 0

    @property
    def feasible(self) -> bool:
        return self.objective is not None


@dataclass(frozen=True)
class _PathInfo:
    path: Path
    links: np.ndarray
    heads: np.ndarray
    tails: np.ndarray
    own: int  # the path's own signal entering its intermediate nodes
    caps: np.ndarray  # tolerated count per format, index 0 unused


@dataclass(frozen=True)
class _Option:
    pair: int
    backup: int
    w_start: int
    w_len: int
    b_start: int
    b_len: int


@dataclass
class _Placed:
    rid: int
    units: int
    failset: frozenset[int]
    working: _PathInfo
    backup: _PathInfo
    opt: _Option
    w_mask: np.ndarray  # scenarios in which the working path carries traffic


def _units(rho: float) -> int:
    return math.ceil(rho / BASE_RATE_GBPS)


def _best_format(caps: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Highest format whose cap covers each count (0 when none)."""
    out = np.zeros(len(counts), dtype=np.int64)
    for m in range(1, len(caps)):
        out[caps[m] >= counts] = m
    return out


class _Search:
    def __init__(self, topology, requests, candidates, params, n_slots, m_max,
                 failure_model, table, node_limit):
        self.topo = topology
        self.requests = list(requests)
        self.n_slots = n_slots
        self.m_max = m_max
        self.node_limit = node_limit
        self.nodes = 0
        self.links = {lid: k for k, lid in enumerate(topology.links)}
        self.node_ids = {nid: k for k, nid in enumerate(sorted(topology.nodes))}
        elements = topology.failure_elements(failure_model)
        self.scen = {e: k + 1 for k, e in enumerate(elements)}
        n_scen = len(elements) + 1
        self.failure_model = failure_model
        # active[s, v, f]: signals on slot f entering node v under scenario s
        self.active = np.zeros((n_scen, len(self.node_ids), n_slots), dtype=np.int64)
        self.work_use = np.zeros((len(self.links), n_slots), dtype=np.int64)
        # backup holders per cell, as request ids
        self.backup_use: dict[tuple[int, int], list[int]] = {}
        self.tops = np.zeros(len(self.links), dtype=np.int64)
        self.placed: list[_Placed] = []

        table = tuple(table)[:m_max]
        self.info: dict[Path, _PathInfo] = {}
        self.options: dict[int, list[_Option]] = {}
        self.failsets: dict[tuple[int, int], frozenset[int]] = {}
        for r in self.requests:
            units = _units(r.rho)
            opts = []
            for pi, pair in enumerate(candidates[r.id]):
                fs = topology.failset(pair.working, failure_model)
                self.failsets[(r.id, pi)] = fs
                wi = self._path_info(pair.working, params, table)
                for bi, b in enumerate(pair.backups):
                    bi_info = self._path_info(b, params, table)
                    for ws, wl in self._ranges(wi, units):
                        for bs, bl in self._ranges(bi_info, units):
                            opts.append(_Option(pi, bi, ws, wl, bs, bl))
            self.options[r.id] = opts
        self.candidates = candidates
        # per option, the highest slot it would put on each link (0 where unused)
        self.top_rows: dict[int, np.ndarray] = {}
        for r in self.requests:
            rows = np.zeros((len(self.options[r.id]), len(self.links)), dtype=np.int64)
            for k, opt in enumerate(self.options[r.id]):
                pair = candidates[r.id][opt.pair]
                w = self.info[pair.working]
                b = self.info[pair.backups[opt.backup]]
                rows[k, w.links] = opt.w_start + opt.w_len - 1
                rows[k, b.links] = np.maximum(rows[k, b.links], opt.b_start + opt.b_len - 1)
            self.top_rows[r.id] = rows

    def _path_info(self, path: Path, params: PliParameters, table) -> _PathInfo:
        if path not in self.info:
            sigma = pli.path_ase_variance(params, self.topo, path)
            self.info[path] = _PathInfo(
                path,
                np.array([self.links[l] for l in path.links]),
                np.array([self.node_ids[n] for n in path.heads]),
                np.array([self.node_ids[n] for n in path.tails]),
                len(path.intermediate),
                pli.interferer_caps(params, sigma, table),
            )
        return self.info[path]

    def _ranges(self, info: _PathInfo, units: int):
        best = int(_best_format(info.caps, np.zeros(1, dtype=np.int64))[0])
        if best == 0:
            return
        for length in range(math.ceil(units / best), units + 1):
            for start in range(1, self.n_slots - length + 2):
                yield start, length

    def _scenario_masks(self, failset: frozenset[int]) -> tuple[np.ndarray, np.ndarray]:
        on = np.zeros(self.active.shape[0], dtype=bool)
        for e in failset:
            if e in self.scen:
                on[self.scen[e]] = True
        return ~on, on

    # ---- state -------------------------------------------------------------------

    def _fits(self, rid: int, opt: _Option, fs: frozenset[int], w: _PathInfo, b: _PathInfo) -> bool:
        wcols = slice(opt.w_start - 1, opt.w_start - 1 + opt.w_len)
        bcols = slice(opt.b_start - 1, opt.b_start - 1 + opt.b_len)
        if self.work_use[w.links, wcols].any() or self.work_use[b.links, bcols].any():
            return False
        for l in w.links:
            for f in range(opt.w_start, opt.w_start + opt.w_len):
                if (l, f) in self.backup_use:
                    return False
        for l in b.links:
            for f in range(opt.b_start, opt.b_start + opt.b_len):
                for other in self.backup_use.get((l, f), ()):
                    p = self._by_rid[other]
                    if p.failset & fs:
                        return False
        return True

    def _apply(self, p: _Placed, sign: int) -> None:
        o = p.opt
        w_on, b_on = p.w_mask, ~p.w_mask
        wcols = slice(o.w_start - 1, o.w_start - 1 + o.w_len)
        bcols = slice(o.b_start - 1, o.b_start - 1 + o.b_len)
        for v in p.working.tails:
            self.active[w_on, v, wcols] += sign
        for v in p.backup.tails:
            self.active[b_on, v, bcols] += sign
        self.work_use[p.working.links, wcols] += sign
        for l in p.backup.links:
            for f in range(o.b_start, o.b_start + o.b_len):
                holders = self.backup_use.setdefault((l, f), [])
                if sign > 0:
                    holders.append(p.rid)
                else:
                    holders.remove(p.rid)
                    if not holders:
                        del self.backup_use[(l, f)]

    def _path_loadable(self, info: _PathInfo, start: int, length: int, allowed: np.ndarray,
                       units: int) -> bool:
        if not allowed.any():
            return True  # never lit, and the range already respects the static caps
        cols = slice(start - 1, start - 1 + length)
        counts = self.active[:, info.heads, cols].sum(axis=1)[allowed].max(axis=0) - info.own
        best = _best_format(info.caps, counts)
        return bool((best >= 1).all() and best.sum() >= units)

    def _qot_ok(self) -> bool:
        for p in self.placed:
            o = p.opt
            if not self._path_loadable(p.working, o.w_start, o.w_len, p.w_mask, p.units):
                return False
            if not self._path_loadable(p.backup, o.b_start, o.b_len, ~p.w_mask, p.units):
                return False
        return True

    def _bitloading(self, info: _PathInfo, start: int, length: int, allowed: np.ndarray,
                    units: int) -> dict[int, int]:
        cols = slice(start - 1, start - 1 + length)
        if allowed.any():
            counts = self.active[:, info.heads, cols].sum(axis=1)[allowed].max(axis=0) - info.own
        else:
            counts = np.zeros(length, dtype=np.int64)
        best = _best_format(info.caps, counts)
        # every slot takes one unit, the rest is spread greedily from the low end
        load = np.ones(length, dtype=np.int64)
        extra = units - length
        for k in range(length):
            add = min(int(best[k]) - 1, extra)
            load[k] += add
            extra -= add
        return {start + k: int(m) for k, m in enumerate(load)}

    # ---- search ---------------------------------------------------------------------

    def run(self, bound: float) -> ExhaustiveResult:
        self.best = bound
        self.best_choice: dict[int, RequestChoice] | None = None
        self._by_rid: dict[int, _Placed] = {}
        self._dfs(0, 0)
        if self.best_choice is None:
            return ExhaustiveResult(None, {}, self.nodes)
        return ExhaustiveResult(int(self.best), self.best_choice, self.nodes)

    def _dfs(self, depth: int, objective: int) -> None:
        if depth == len(self.requests):
            self.best = objective
            self.best_choice = {
                p.rid: RequestChoice(
                    p.opt.pair, p.opt.backup,
                    self._bitloading(p.working, p.opt.w_start, p.opt.w_len, p.w_mask, p.units),
                    self._bitloading(p.backup, p.opt.b_start, p.opt.b_len, ~p.w_mask, p.units),
                )
                for p in self.placed
            }
            return
        # every remaining request still has to go somewhere: its cheapest
        # option against the current tops bounds the final objective
        for later in self.requests[depth + 1:]:
            floor = int(np.maximum(self.tops, self.top_rows[later.id]).sum(axis=1).min())
            if floor >= self.best:
                return
        r = self.requests[depth]
        pairs = self.candidates[r.id]
        merged = np.maximum(self.tops, self.top_rows[r.id])
        objs = merged.sum(axis=1)
        for k in np.argsort(objs, kind="stable"):
            new_obj = int(objs[k])
            if new_obj >= self.best:
                break
            opt = self.options[r.id][k]
            pair = pairs[opt.pair]
            w = self.info[pair.working]
            b = self.info[pair.backups[opt.backup]]
            tops = merged[k]
            fs = self.failsets[(r.id, opt.pair)]
            if not self._fits(r.id, opt, fs, w, b):
                continue
            self.nodes += 1
            if self.nodes > self.node_limit:
                raise SearchSpaceExceeded(f"more than {self.node_limit} search nodes")
            w_mask, _ = self._scenario_masks(fs)
            p = _Placed(r.id, _units(r.rho), fs, w, b, opt, w_mask)
            self._apply(p, +1)
            self.placed.append(p)
            self._by_rid[r.id] = p
            saved = self.tops
            if self._qot_ok():
                self.tops = tops
                self._dfs(depth + 1, new_obj)
                self.tops = saved
            self.placed.pop()
            del self._by_rid[r.id]
            self._apply(p, -1)


def exhaustive_optimize(
    topology: Topology,
    requests: Sequence[Request],
    candidates: Mapping[int, Sequence[PathPair]],
    params: PliParameters,
    n_slots: int,
    m_max: int,
    failure_model: str = LINK,
    table: Sequence[ModulationFormat] = MF_TABLE,
    upper_bound: int | None = None,
    node_limit: int = 2_000_000,
) -> ExhaustiveResult:
    """Minimum sum of per-link highest slots over all feasible allocations.

    ``upper_bound`` (e.g. a heuristic objective) seeds the incumbent; a
    solution matching it is still returned.
    """
    search = _Search(topology, requests, candidates, params, n_slots, m_max,
                     failure_model, table, node_limit)
    bound = math.inf if upper_bound is None else upper_bound + 1
    return search.run(bound)
