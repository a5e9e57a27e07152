"""Robust survivable RSA as a mixed-integer linear model.

Crosstalk is written per failure scenario: for a fixed failed element the
set of active paths is a constant function of the path-selection binaries,
so every scenario's crosstalk is a plain weighted sum of slot binaries.
Worst cases over scenarios use selector binaries (one per scenario) and a
common big-M. Crosstalk quantities are in units of the received power P_r.

Constraint families (labels used by the validator):

=====================  ==============================================
highest_slot           marks the top occupied slot of every link
path_choice            one working path per request
backup_choice          one backup for the chosen working path
demand_working/backup  carried rate equals the demand
one_mf_working/backup  at most one format per slot and request
contiguity             occupied slots of a path form one range
link_working/backup    per-link copies of the path slot variables
backup_flag            cell holds at least one backup
non_overlap            working cells exclusive, never mixed with backups
working_overlap_flag   two requests' working paths can fail together
backup_sharing         backups share only if their workings cannot
single_failure         exactly one element fails
failure_on_path        failure indicator restricted to a working path
crosstalk_working/b..  crosstalk of a slot under one scenario
max_working/backup     worst case over the scenarios of the role
qot_working/backup     worst-case SINR clears the format's threshold
and, max_select        linearization helpers
=====================  ==============================================
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .. import pli
from ..pli import MF_TABLE, ModulationFormat, PliParameters
from ..topology import LINK, Path, PathPair, Topology
from ..traffic import BASE_RATE_GBPS, Request
from .model import BINARY, CONTINUOUS, Model

TOL = 1e-6


@dataclass
class MilpInstance:
    topology: Topology
    requests: list[Request]
    candidates: dict[int, list[PathPair]]
    params: PliParameters
    n_slots: int
    m_max: int
    failure_model: str = LINK
    table: tuple[ModulationFormat, ...] = MF_TABLE

    def __post_init__(self) -> None:
        if self.m_max > len(self.table):
            raise ValueError("m_max exceeds the modulation table")
        self.elements = self.topology.failure_elements(self.failure_model)
        self.failsets = {
            (r.id, pi): self.topology.failset(pair.working, self.failure_model)
            for r in self.requests
            for pi, pair in enumerate(self.candidates[r.id])
        }

    @property
    def slots(self) -> range:
        return range(1, self.n_slots + 1)

    @property
    def formats(self) -> range:
        return range(1, self.m_max + 1)

    def pairs(self, rid: int) -> list[PathPair]:
        return self.candidates[rid]

    def inverse_snr(self, path: Path) -> float:
        sigma = pli.path_ase_variance(self.params, self.topology, path)
        return sigma / pli.received_channel_power(self.params)

    def working_scenarios(self, rid: int, pi: int) -> list[int]:
        fs = self.failsets[(rid, pi)]
        return [e for e in self.elements if e not in fs]

    def backup_scenarios(self, rid: int, pi: int) -> list[int]:
        fs = self.failsets[(rid, pi)]
        return [e for e in self.elements if e in fs]

    def crosstalk_terms(
        self, rid: int, target: Path, f: int, failure: int | None
    ) -> list[tuple[str, float]]:
        """(variable, coefficient) pairs of the scenario crosstalk sum at slot ``f``."""
        heads = set(target.heads)
        cx = self.params.c_x
        terms = []
        for other in self.requests:
            if other.id == rid:
                continue
            for pi, pair in enumerate(self.candidates[other.id]):
                fails = failure is not None and failure in self.failsets[(other.id, pi)]
                if not fails:
                    n = len(heads.intersection(pair.working.tails))
                    if n:
                        terms += [(n_wm(other.id, pi, m, f), n * cx) for m in self.formats]
                else:
                    for bi, b in enumerate(pair.backups):
                        n = len(heads.intersection(b.tails))
                        if n:
                            terms += [(n_bm(other.id, pi, bi, m, f), n * cx) for m in self.formats]
        return terms

    def crosstalk_bound(self) -> float:
        """Upper bound on any scenario crosstalk (units of P_r)."""
        topo = self.topology
        n_d = topo.max_nodal_degree()
        appendix = math.ceil((n_d - 2) / 2) * len(topo.nodes) * self.params.c_x
        structural = 0.0
        for r in self.requests:
            for pair in self.candidates[r.id]:
                for target in (pair.working, *pair.backups):
                    for failure in (None, *self.elements):
                        s = sum(c for _, c in self.crosstalk_terms(r.id, target, 1, failure))
                        structural = max(structural, s)
        return max(appendix, structural)


# ---- variable names --------------------------------------------------------------


def n_h(f, l): return f"H_f{f}_l{l}"
def n_x(f, l): return f"X_f{f}_l{l}"
def n_w(r, p): return f"W_r{r}_p{p}"
def n_b(r, p, b): return f"B_r{r}_p{p}_b{b}"
def n_wm(r, p, m, f): return f"Wm_r{r}_p{p}_m{m}_f{f}"
def n_bm(r, p, b, m, f): return f"Bm_r{r}_p{p}_b{b}_m{m}_f{f}"
def n_wl(r, m, f, l): return f"Wl_r{r}_m{m}_f{f}_l{l}"
def n_bl(r, m, f, l): return f"Bl_r{r}_m{m}_f{f}_l{l}"
def n_bf(f, l): return f"Bf_f{f}_l{l}"
def n_t(r, r2): return f"t_r{r}_r{r2}"
def n_zt(r, p, r2, p2): return f"Zt_r{r}_p{p}_r{r2}_p{p2}"
def n_zx(r, r2, f, l): return f"Zx_r{r}_r{r2}_f{f}_l{l}"
def n_fe(e): return f"F_e{e}"
def n_fep(r, p, e): return f"Fp_r{r}_p{p}_e{e}"
def _tag(e): return "nf" if e is None else f"e{e}"
def n_pw(r, p, f, e): return f"Pw_r{r}_p{p}_f{f}_{_tag(e)}"
def n_pb(r, p, b, f, e): return f"Pb_r{r}_p{p}_b{b}_f{f}_{_tag(e)}"
def n_ywe(r, p, f): return f"Ywe_r{r}_p{p}_f{f}"
def n_yw(r, p, f): return f"Yw_r{r}_p{p}_f{f}"
def n_yb(r, p, b, f): return f"Yb_r{r}_p{p}_b{b}_f{f}"
def n_dwe(r, p, f, e): return f"Dwe_r{r}_p{p}_f{f}_{_tag(e)}"
def n_dw(r, p, f, which): return f"Dw_r{r}_p{p}_f{f}_{which}"
def n_db(r, p, b, f, e): return f"Db_r{r}_p{p}_b{b}_f{f}_{_tag(e)}"


@dataclass
class RobustModel(Model):
    instance: MilpInstance | None = None
    big_n: float = 0.0  # LN
    u_max: float = 0.0
    decision_vars: list[str] = field(default_factory=list)


def _big_number(instance: MilpInstance, u_max: float) -> float:
    ist_m = instance.table[instance.m_max - 1].inverse_threshold
    need = 10.0 * max(ist_m, u_max)
    return 10.0 ** math.ceil(math.log10(need))


def _add_and(model: Model, z: str, a: str, b: str) -> None:
    model.add_constr("and", {z: 1, a: -1}, "<=", 0)
    model.add_constr("and", {z: 1, b: -1}, "<=", 0)
    model.add_constr("and", {z: 1, a: -1, b: -1}, ">=", -1)


def _add_max(model: Model, y: str, xs: Sequence[str], ds: Sequence[str], u_max: float) -> None:
    for x, d in zip(xs, ds):
        model.add_constr("max_select", {y: 1, x: -1}, ">=", 0)
        model.add_constr("max_select", {y: 1, x: -1, d: u_max}, "<=", u_max)
    model.add_constr("max_select", {d: 1 for d in ds}, "=", 1)


def _contiguity(model: Model, family: str, usage: Mapping[int, list[str]], n: int) -> None:
    # a slot between two used slots is used: U_g >= U_f + U_h - 1
    for f, g, h in itertools.combinations(range(1, n + 1), 3):
        terms: dict[str, float] = {}
        for v in usage[g]:
            terms[v] = terms.get(v, 0) + 1
        for v in usage[f] + usage[h]:
            terms[v] = terms.get(v, 0) - 1
        model.add_constr(family, terms, ">=", -1)


def build_model(
    topology: Topology,
    requests: Sequence[Request],
    candidates: Mapping[int, Sequence[PathPair]],
    params: PliParameters,
    n_slots: int,
    m_max: int,
    failure_model: str = LINK,
    table: Sequence[ModulationFormat] = MF_TABLE,
    max_vars: int | None = 500_000,
) -> RobustModel:
    inst = MilpInstance(
        topology, list(requests), {r.id: list(candidates[r.id]) for r in requests},
        params, n_slots, m_max, failure_model, tuple(table),
    )
    model = RobustModel(name="robust_sbpp_rsa", max_vars=max_vars, instance=inst)
    slots, formats = inst.slots, inst.formats
    links = list(topology.links)
    gamma = BASE_RATE_GBPS

    # occupancy and objective
    for l in links:
        for f in slots:
            model.add_var(n_x(f, l), BINARY)
            model.add_var(n_h(f, l), BINARY)
            model.objective[n_h(f, l)] = float(f)
    for l in links:
        for fp in slots:
            if fp < n_slots:
                terms = {n_h(fp, l): 1.0}
                terms.update({n_x(f, l): 1.0 / n_slots for f in range(fp + 1, n_slots + 1)})
                model.add_constr("highest_slot", terms, "<=", 1)
            model.add_constr("highest_slot", {n_h(fp, l): 1, n_x(fp, l): -1}, "<=", 0)
        terms = {n_h(f, l): 1.0 for f in slots}
        terms.update({n_x(f, l): -1.0 / n_slots for f in slots})
        model.add_constr("highest_slot", terms, ">=", 0)

    # path selection and slot/format variables
    for r in inst.requests:
        for pi, pair in enumerate(inst.pairs(r.id)):
            model.add_var(n_w(r.id, pi), BINARY)
            model.decision_vars.append(n_w(r.id, pi))
            for bi, _ in enumerate(pair.backups):
                model.add_var(n_b(r.id, pi, bi), BINARY)
                model.decision_vars.append(n_b(r.id, pi, bi))
            for m in formats:
                for f in slots:
                    model.add_var(n_wm(r.id, pi, m, f), BINARY)
                    model.decision_vars.append(n_wm(r.id, pi, m, f))
            for bi, _ in enumerate(pair.backups):
                for m in formats:
                    for f in slots:
                        model.add_var(n_bm(r.id, pi, bi, m, f), BINARY)
                        model.decision_vars.append(n_bm(r.id, pi, bi, m, f))

    for r in inst.requests:
        pairs = inst.pairs(r.id)
        model.add_constr("path_choice", {n_w(r.id, pi): 1 for pi in range(len(pairs))}, "=", 1)
        for pi, pair in enumerate(pairs):
            terms = {n_b(r.id, pi, bi): 1.0 for bi in range(len(pair.backups))}
            terms[n_w(r.id, pi)] = -1.0
            model.add_constr("backup_choice", terms, "=", 0)
            terms = {n_w(r.id, pi): float(r.rho)}
            for m in formats:
                for f in slots:
                    terms[n_wm(r.id, pi, m, f)] = -float(m * gamma)
            model.add_constr("demand_working", terms, "=", 0)
            for bi in range(len(pair.backups)):
                terms = {n_b(r.id, pi, bi): float(r.rho)}
                for m in formats:
                    for f in slots:
                        terms[n_bm(r.id, pi, bi, m, f)] = -float(m * gamma)
                model.add_constr("demand_backup", terms, "=", 0)
        for f in slots:
            model.add_constr(
                "one_mf_working",
                {n_wm(r.id, pi, m, f): 1 for pi in range(len(pairs)) for m in formats}, "<=", 1,
            )
            terms = {
                n_bm(r.id, pi, bi, m, f): 1
                for pi, pair in enumerate(pairs)
                for bi in range(len(pair.backups))
                for m in formats
            }
            if terms:
                model.add_constr("one_mf_backup", terms, "<=", 1)
        for pi, pair in enumerate(pairs):
            usage = {f: [n_wm(r.id, pi, m, f) for m in formats] for f in slots}
            _contiguity(model, "contiguity", usage, n_slots)
            for bi in range(len(pair.backups)):
                usage = {f: [n_bm(r.id, pi, bi, m, f) for m in formats] for f in slots}
                _contiguity(model, "contiguity", usage, n_slots)

    # per-link copies
    w_links: dict[int, set[int]] = {}
    b_links: dict[int, set[int]] = {}
    for r in inst.requests:
        w_links[r.id] = {l for pair in inst.pairs(r.id) for l in pair.working.links}
        b_links[r.id] = {l for pair in inst.pairs(r.id) for b in pair.backups for l in b.links}
        for l in sorted(w_links[r.id]):
            for m in formats:
                for f in slots:
                    v = model.add_var(n_wl(r.id, m, f, l), BINARY)
                    terms = {v: -1.0}
                    for pi, pair in enumerate(inst.pairs(r.id)):
                        if l in pair.working.link_set:
                            terms[n_wm(r.id, pi, m, f)] = 1.0
                    model.add_constr("link_working", terms, "=", 0)
        for l in sorted(b_links[r.id]):
            for m in formats:
                for f in slots:
                    v = model.add_var(n_bl(r.id, m, f, l), BINARY)
                    terms = {v: -1.0}
                    for pi, pair in enumerate(inst.pairs(r.id)):
                        for bi, b in enumerate(pair.backups):
                            if l in b.link_set:
                                terms[n_bm(r.id, pi, bi, m, f)] = 1.0
                    model.add_constr("link_backup", terms, "=", 0)

    divisor = float(max(n_slots, len(inst.requests)))
    for l in links:
        holders = [r.id for r in inst.requests if l in b_links[r.id]]
        users = [r.id for r in inst.requests if l in w_links[r.id]]
        for f in slots:
            terms = {}
            if holders:
                bf = model.add_var(n_bf(f, l), BINARY)
                flag = {bf: -1.0}
                for rid in holders:
                    for m in formats:
                        flag[n_bl(rid, m, f, l)] = 1.0 / divisor
                model.add_constr("backup_flag", flag, "<=", 0)
                terms[bf] = 1.0
            for rid in users:
                for m in formats:
                    terms[n_wl(rid, m, f, l)] = 1.0
            if terms:
                terms[n_x(f, l)] = -1.0
                model.add_constr("non_overlap", terms, "<=", 0)

    # backup sharing needs failure-disjoint workings
    for ra, rb in itertools.combinations(inst.requests, 2):
        t = model.add_var(n_t(ra.id, rb.id), BINARY)
        zs = []
        for pa, pair_a in enumerate(inst.pairs(ra.id)):
            for pb, pair_b in enumerate(inst.pairs(rb.id)):
                if inst.failsets[(ra.id, pa)] & inst.failsets[(rb.id, pb)]:
                    z = model.add_var(n_zt(ra.id, pa, rb.id, pb), BINARY)
                    _add_and(model, z, n_w(ra.id, pa), n_w(rb.id, pb))
                    model.add_constr("working_overlap_flag", {t: 1, z: -1}, ">=", 0)
                    zs.append(z)
        terms = {t: 1.0}
        terms.update({z: -1.0 for z in zs})
        model.add_constr("working_overlap_flag", terms, "<=", 0)
        for l in sorted(b_links[ra.id] & b_links[rb.id]):
            for f in slots:
                zx = model.add_var(n_zx(ra.id, rb.id, f, l), BINARY)
                _add_and(model, zx, t, n_x(f, l))
                terms = {n_bl(ra.id, m, f, l): 1.0 for m in formats}
                terms.update({n_bl(rb.id, m, f, l): 1.0 for m in formats})
                terms[n_x(f, l)] = -2.0
                terms[zx] = 1.0
                model.add_constr("backup_sharing", terms, "<=", 0)

    # single failure indicators (meaningless without requests)
    if inst.elements and inst.requests:
        for e in inst.elements:
            model.add_var(n_fe(e), BINARY)
        model.add_constr("single_failure", {n_fe(e): 1 for e in inst.elements}, "=", 1)
        for r in inst.requests:
            for pi in range(len(inst.pairs(r.id))):
                for e in sorted(inst.failsets[(r.id, pi)]):
                    v = model.add_var(n_fep(r.id, pi, e), BINARY)
                    model.add_constr("failure_on_path", {v: 1, n_fe(e): -1}, "=", 0)

    # scenario crosstalk and worst cases
    u_max = inst.crosstalk_bound()
    big_n = _big_number(inst, u_max)
    model.u_max, model.big_n = u_max, big_n
    for r in inst.requests:
        for pi, pair in enumerate(inst.pairs(r.id)):
            w_scen = inst.working_scenarios(r.id, pi)
            b_scen = inst.backup_scenarios(r.id, pi)
            inv_snr_w = inst.inverse_snr(pair.working)
            for f in slots:
                for e in (None, *w_scen):
                    v = model.add_var(n_pw(r.id, pi, f, e), CONTINUOUS, 0.0, u_max)
                    terms = [(v, -1.0), *inst.crosstalk_terms(r.id, pair.working, f, e)]
                    model.add_constr("crosstalk_working", terms, "=", 0)
                yw = model.add_var(n_yw(r.id, pi, f), CONTINUOUS, 0.0, u_max)
                if w_scen:
                    ywe = model.add_var(n_ywe(r.id, pi, f), CONTINUOUS, 0.0, u_max)
                    ds = [model.add_var(n_dwe(r.id, pi, f, e), BINARY) for e in w_scen]
                    _add_max(model, ywe, [n_pw(r.id, pi, f, e) for e in w_scen], ds, u_max)
                    ds = [model.add_var(n_dw(r.id, pi, f, k), BINARY) for k in ("e", "nf")]
                    _add_max(model, yw, [ywe, n_pw(r.id, pi, f, None)], ds, u_max)
                else:
                    ds = [model.add_var(n_dw(r.id, pi, f, "nf"), BINARY)]
                    _add_max(model, yw, [n_pw(r.id, pi, f, None)], ds, u_max)
                for m in formats:
                    ist = inst.table[m - 1].inverse_threshold
                    model.add_constr(
                        "qot_working",
                        {yw: 1.0, n_wm(r.id, pi, m, f): inv_snr_w + big_n}, "<=", big_n + ist,
                    )
            for bi, b in enumerate(pair.backups):
                inv_snr_b = inst.inverse_snr(b)
                for f in slots:
                    yb = model.add_var(n_yb(r.id, pi, bi, f), CONTINUOUS, 0.0, u_max)
                    if b_scen:
                        for e in b_scen:
                            v = model.add_var(n_pb(r.id, pi, bi, f, e), CONTINUOUS, 0.0, u_max)
                            terms = [(v, -1.0), *inst.crosstalk_terms(r.id, b, f, e)]
                            model.add_constr("crosstalk_backup", terms, "=", 0)
                        ds = [model.add_var(n_db(r.id, pi, bi, f, e), BINARY) for e in b_scen]
                        _add_max(model, yb, [n_pb(r.id, pi, bi, f, e) for e in b_scen], ds, u_max)
                    else:
                        # the backup never carries traffic; nothing can interfere with it
                        model.add_constr("max_backup", {yb: 1}, "=", 0)
                    for m in formats:
                        ist = inst.table[m - 1].inverse_threshold
                        model.add_constr(
                            "qot_backup",
                            {yb: 1.0, n_bm(r.id, pi, bi, m, f): inv_snr_b + big_n}, "<=",
                            big_n + ist,
                        )
    return model


# ---- encoding a concrete allocation ----------------------------------------------------


@dataclass(frozen=True)
class RequestChoice:
    working_index: int
    backup_index: int
    working_slots: Mapping[int, int]  # slot -> format
    backup_slots: Mapping[int, int]


def _active_cells(inst: MilpInstance, choice: Mapping[int, RequestChoice]):
    """Per (path role) cell sets of the chosen allocation."""
    work, back = {}, {}
    for r in inst.requests:
        c = choice[r.id]
        pair = inst.pairs(r.id)[c.working_index]
        work[r.id] = (pair.working, c.working_slots)
        back[r.id] = (pair.backups[c.backup_index], c.backup_slots)
    return work, back


def scenario_crosstalk(
    inst: MilpInstance, choice: Mapping[int, RequestChoice], rid: int, target: Path, f: int,
    failure: int | None,
) -> float:
    """Crosstalk (units of P_r) on ``target`` at slot ``f`` when ``failure`` occurs."""
    heads = set(target.heads)
    total = 0.0
    for other in inst.requests:
        if other.id == rid:
            continue
        c = choice[other.id]
        pair = inst.pairs(other.id)[c.working_index]
        if failure is not None and failure in inst.failsets[(other.id, c.working_index)]:
            path, slots = pair.backups[c.backup_index], c.backup_slots
        else:
            path, slots = pair.working, c.working_slots
        if f in slots:
            total += len(heads.intersection(path.tails)) * inst.params.c_x
    return total


def _argmax(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def solution_assignment(model: RobustModel, choice: Mapping[int, RequestChoice]) -> dict[str, float]:
    """Every model variable's value for a concrete allocation (auxiliaries included)."""
    inst = model.instance
    vals = {name: 0.0 for name in model.vars}
    slots = inst.slots

    for r in inst.requests:
        c = choice[r.id]
        pi, bi = c.working_index, c.backup_index
        pair = inst.pairs(r.id)[pi]
        vals[n_w(r.id, pi)] = 1.0
        vals[n_b(r.id, pi, bi)] = 1.0
        for f, m in c.working_slots.items():
            vals[n_wm(r.id, pi, m, f)] = 1.0
            for l in pair.working.links:
                vals[n_wl(r.id, m, f, l)] = 1.0
                vals[n_x(f, l)] = 1.0
        backup = pair.backups[bi]
        for f, m in c.backup_slots.items():
            vals[n_bm(r.id, pi, bi, m, f)] = 1.0
            for l in backup.links:
                vals[n_bl(r.id, m, f, l)] = 1.0
                vals[n_bf(f, l)] = 1.0
                vals[n_x(f, l)] = 1.0
    for l in inst.topology.links:
        used = [f for f in slots if vals[n_x(f, l)] > 0.5]
        if used:
            vals[n_h(max(used), l)] = 1.0

    for ra, rb in itertools.combinations(inst.requests, 2):
        pa, pb = choice[ra.id].working_index, choice[rb.id].working_index
        z = n_zt(ra.id, pa, rb.id, pb)
        if z in vals:
            vals[z] = 1.0
            vals[n_t(ra.id, rb.id)] = 1.0
        if vals[n_t(ra.id, rb.id)] > 0.5:
            for name in model.vars:
                if name.startswith(f"Zx_r{ra.id}_r{rb.id}_"):
                    f, l = (int(x[1:]) for x in name.split("_")[3:5])
                    vals[name] = vals[n_x(f, l)]

    if inst.elements and inst.requests:
        e0 = inst.elements[0]
        vals[n_fe(e0)] = 1.0
        for r in inst.requests:
            for pi in range(len(inst.pairs(r.id))):
                if e0 in inst.failsets[(r.id, pi)]:
                    vals[n_fep(r.id, pi, e0)] = 1.0

    for r in inst.requests:
        for pi, pair in enumerate(inst.pairs(r.id)):
            w_scen = inst.working_scenarios(r.id, pi)
            b_scen = inst.backup_scenarios(r.id, pi)
            for f in slots:
                xs = {}
                for e in (None, *w_scen):
                    xs[e] = scenario_crosstalk(inst, choice, r.id, pair.working, f, e)
                    vals[n_pw(r.id, pi, f, e)] = xs[e]
                nf = xs[None]
                if w_scen:
                    per = [xs[e] for e in w_scen]
                    k = _argmax(per)
                    vals[n_ywe(r.id, pi, f)] = per[k]
                    vals[n_dwe(r.id, pi, f, w_scen[k])] = 1.0
                    if per[k] >= nf:
                        vals[n_dw(r.id, pi, f, "e")] = 1.0
                    else:
                        vals[n_dw(r.id, pi, f, "nf")] = 1.0
                    vals[n_yw(r.id, pi, f)] = max(per[k], nf)
                else:
                    vals[n_dw(r.id, pi, f, "nf")] = 1.0
                    vals[n_yw(r.id, pi, f)] = nf
            for bi, b in enumerate(pair.backups):
                for f in slots:
                    if not b_scen:
                        continue
                    per = [scenario_crosstalk(inst, choice, r.id, b, f, e) for e in b_scen]
                    for e, x in zip(b_scen, per):
                        vals[n_pb(r.id, pi, bi, f, e)] = x
                    k = _argmax(per)
                    vals[n_yb(r.id, pi, bi, f)] = per[k]
                    vals[n_db(r.id, pi, bi, f, b_scen[k])] = 1.0
    return vals


def decode_choice(model: RobustModel, values: Mapping[str, float]) -> dict[int, RequestChoice] | None:
    """Read the allocation back out of a (decision) assignment; None if not one-hot."""
    inst = model.instance
    out = {}
    for r in inst.requests:
        ws = [pi for pi in range(len(inst.pairs(r.id))) if values.get(n_w(r.id, pi), 0) > 0.5]
        if len(ws) != 1:
            return None
        pi = ws[0]
        pair = inst.pairs(r.id)[pi]
        bs = [bi for bi in range(len(pair.backups)) if values.get(n_b(r.id, pi, bi), 0) > 0.5]
        if len(bs) != 1:
            return None
        bi = bs[0]
        w_slots, b_slots = {}, {}
        for f in inst.slots:
            for m in inst.formats:
                if values.get(n_wm(r.id, pi, m, f), 0) > 0.5:
                    w_slots[f] = m
                if values.get(n_bm(r.id, pi, bi, m, f), 0) > 0.5:
                    b_slots[f] = m
        out[r.id] = RequestChoice(pi, bi, w_slots, b_slots)
    return out


def choice_objective(inst: MilpInstance, choice: Mapping[int, RequestChoice]) -> int:
    top: dict[int, int] = {}
    for r in inst.requests:
        c = choice[r.id]
        pair = inst.pairs(r.id)[c.working_index]
        for path, slots in ((pair.working, c.working_slots),
                            (pair.backups[c.backup_index], c.backup_slots)):
            if slots:
                for l in path.links:
                    top[l] = max(top.get(l, 0), max(slots))
    return sum(top.values())


# ---- validation against the unlinearized constraints ------------------------------------


@dataclass(frozen=True)
class Violation:
    family: str
    detail: str


_LINEAR_FAMILIES = {
    "highest_slot", "path_choice", "backup_choice", "demand_working", "demand_backup",
    "one_mf_working", "one_mf_backup", "link_working", "link_backup", "backup_flag",
    "non_overlap", "single_failure", "failure_on_path", "crosstalk_working",
    "crosstalk_backup", "qot_working", "qot_backup",
}


def _is_range(slots: Sequence[int]) -> bool:
    return not slots or max(slots) - min(slots) + 1 == len(slots)


def validate_solution(
    model: RobustModel, values: Mapping[str, float], tol: float = TOL
) -> list[Violation]:
    """Check an assignment against the original constraints.

    Linear families are evaluated as written. Products of binaries, the
    contiguity rule and the worst-case maxima are evaluated in their
    nonlinear form; linearization helpers are ignored.
    """
    inst = model.instance
    out: list[Violation] = []
    for name, var in model.vars.items():
        x = values.get(name, 0.0)
        if var.kind == BINARY and min(abs(x), abs(x - 1)) > tol:
            out.append(Violation("domain", f"{name}={x} is not binary"))
        elif x < var.lb - tol or x > var.ub + tol:
            out.append(Violation("domain", f"{name}={x} outside bounds"))
    for con in model.constraints:
        if con.family in _LINEAR_FAMILIES and con.violation(values) > tol:
            out.append(Violation(con.family, con.name))

    def val(name: str) -> float:
        return values.get(name, 0.0)

    slots, formats = inst.slots, inst.formats
    for r in inst.requests:
        for pi, pair in enumerate(inst.pairs(r.id)):
            used = [f for f in slots if sum(val(n_wm(r.id, pi, m, f)) for m in formats) > 0.5]
            if not _is_range(used):
                out.append(Violation("contiguity", f"working r{r.id} p{pi}: {used}"))
            for bi in range(len(pair.backups)):
                used = [
                    f for f in slots if sum(val(n_bm(r.id, pi, bi, m, f)) for m in formats) > 0.5
                ]
                if not _is_range(used):
                    out.append(Violation("contiguity", f"backup r{r.id} p{pi} b{bi}: {used}"))

    for ra, rb in itertools.combinations(inst.requests, 2):
        overlap = 0.0
        for pa in range(len(inst.pairs(ra.id))):
            for pb in range(len(inst.pairs(rb.id))):
                if inst.failsets[(ra.id, pa)] & inst.failsets[(rb.id, pb)]:
                    overlap = max(overlap, val(n_w(ra.id, pa)) * val(n_w(rb.id, pb)))
        t = val(n_t(ra.id, rb.id))
        if abs(t - overlap) > tol:
            out.append(Violation("working_overlap_flag", f"t r{ra.id},r{rb.id}={t}, expected {overlap}"))
        for l in inst.topology.links:
            for f in slots:
                a = sum(val(n_bl(ra.id, m, f, l)) for m in formats)
                b = sum(val(n_bl(rb.id, m, f, l)) for m in formats)
                if a + b > (2 - t) * val(n_x(f, l)) + tol:
                    out.append(Violation("backup_sharing", f"r{ra.id},r{rb.id} f{f} l{l}"))

    for r in inst.requests:
        for pi, pair in enumerate(inst.pairs(r.id)):
            w_scen = inst.working_scenarios(r.id, pi)
            b_scen = inst.backup_scenarios(r.id, pi)
            for f in slots:
                worst = max(val(n_pw(r.id, pi, f, e)) for e in (None, *w_scen))
                if abs(val(n_yw(r.id, pi, f)) - worst) > tol:
                    out.append(Violation("max_working", f"r{r.id} p{pi} f{f}"))
                if w_scen:
                    worst_e = max(val(n_pw(r.id, pi, f, e)) for e in w_scen)
                    if abs(val(n_ywe(r.id, pi, f)) - worst_e) > tol:
                        out.append(Violation("max_working", f"r{r.id} p{pi} f{f} failures"))
            for bi in range(len(pair.backups)):
                for f in slots:
                    worst = max((val(n_pb(r.id, pi, bi, f, e)) for e in b_scen), default=0.0)
                    if abs(val(n_yb(r.id, pi, bi, f)) - worst) > tol:
                        out.append(Violation("max_backup", f"r{r.id} p{pi} b{bi} f{f}"))
    return out


def decision_projection(model: RobustModel, values: Mapping[str, float]) -> tuple[int, ...]:
    return tuple(int(round(values.get(v, 0.0))) for v in model.decision_vars)
