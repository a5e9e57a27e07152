from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from oracles import grid_state, same_state, structural_violations
from sbppia import bundled_topology
from sbppia.engine import Allocation, EngineMode, SbppEngine
from sbppia.spectrum import SpectrumGrid
from sbppia.topology import LINK, SRLG, candidate_pairs
from sbppia.traffic import Request

SIX = bundled_topology("six")
NODES = sorted(SIX.nodes)


class AllocatorMachine(RuleBasedStateMachine):
    failure_model = LINK

    def __init__(self):
        super().__init__()
        self.engine = SbppEngine(SIX, 14, mode=EngineMode(self.failure_model), k=2, k_b=2)
        self.demand = {}
        self.next_id = 1

    def _request(self, src, dst, units):
        dst = dst if dst != src else NODES[(NODES.index(src) + 1) % len(NODES)]
        r = Request(self.next_id, src, dst, 10 * units)
        self.next_id += 1
        return r

    @rule(src=st.sampled_from(NODES), dst=st.sampled_from(NODES), units=st.integers(1, 8))
    def place(self, src, dst, units):
        r = self._request(src, dst, units)
        if isinstance(self.engine.place(r), Allocation):
            self.demand[r.id] = r.rho

    @rule(src=st.sampled_from(NODES), dst=st.sampled_from(NODES), units=st.integers(1, 8))
    def place_then_release(self, src, dst, units):
        before = grid_state(self.engine.grid)
        r = self._request(src, dst, units)
        if isinstance(self.engine.place(r), Allocation):
            self.engine.release(r.id)
        assert same_state(grid_state(self.engine.grid), before)

    @precondition(lambda self: self.demand)
    @rule(data=st.data())
    def release(self, data):
        rid = data.draw(st.sampled_from(sorted(self.demand)))
        self.engine.release(rid)
        del self.demand[rid]

    @invariant()
    def grid_is_consistent(self):
        assert structural_violations(self.engine.grid, self.demand) == []
        assert set(self.engine.grid.records) == set(self.demand)


class SrlgAllocatorMachine(AllocatorMachine):
    failure_model = SRLG


run_settings = settings(max_examples=25, stateful_step_count=25, deadline=None)
TestAllocatorLink = AllocatorMachine.TestCase
TestAllocatorLink.settings = run_settings
TestAllocatorSrlg = SrlgAllocatorMachine.TestCase
TestAllocatorSrlg.settings = run_settings


def loaded_six():
    eng = SbppEngine(SIX, 14, k=2, k_b=2)
    demand = {}
    for rid, (s, d, rho) in enumerate([(1, 4, 40), (2, 5, 30), (3, 6, 20)], 1):
        assert isinstance(eng.place(Request(rid, s, d, rho)), Allocation)
        demand[rid] = rho
    assert structural_violations(eng.grid, demand) == []
    return eng, demand


def test_checker_sees_format_mismatch():
    eng, demand = loaded_six()
    rec = eng.grid.records[1]
    lidx = eng.grid.link_index(rec.working.links[-1:])[0]
    f = min(rec.working_slots)
    eng.grid.owner_mf[lidx, f - 1] += 1
    kinds = {k for k, _ in structural_violations(eng.grid, demand)}
    assert "continuity" in kinds


def test_checker_sees_stale_cell():
    eng, demand = loaded_six()
    eng.grid.owner[0, eng.grid.n_slots - 1] = 99
    kinds = {k for k, _ in structural_violations(eng.grid, demand)}
    assert "stale" in kinds


def test_checker_sees_range_and_demand_errors():
    eng, demand = loaded_six()
    rec = eng.grid.records[2]
    top = max(rec.working_slots)
    rec.working_slots[top + 2] = rec.working_slots.pop(top)
    assert "contiguity" in {k for k, _ in structural_violations(eng.grid, demand)}
    demand[3] += 10
    assert "demand" in {k for k, _ in structural_violations(eng.grid, demand)}


def test_checker_sees_illegal_sharing():
    pair = candidate_pairs(SIX, 1, 4, 1, 1)[0]
    w, b = pair.working, pair.backups[0]
    grid = SpectrumGrid(SIX, 4)
    grid.commit_working(1, w, {1: 1})
    grid.commit_backup(1, w, b, {2: 1})
    grid.commit_working(2, w, {3: 1})
    grid.commit_backup(2, w, b, {4: 1})
    demand = {1: 10, 2: 10}
    assert structural_violations(grid, demand) == []
    # slide request 2's backup onto request 1's cells, bypassing the share rule
    for l in grid.link_index(b.links):
        grid._holders[(l, 1)][2] = grid._holders[(l, 3)].pop(2)
    grid.records[2].backup_slots = {2: 1}
    assert {k for k, _ in structural_violations(grid, demand)} == {"sharing"}
