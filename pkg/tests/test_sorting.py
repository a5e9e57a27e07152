import itertools

import pytest
from hypothesis import given, strategies as st

from oracles import spreadsheet_congestion
from sbppia.sorting import (
    CongestionProfile, congestion_profile, dumps_profiles, link_weights,
    pairwise_link_congestion, sort_mcw_lcbf, sort_mdf,
)
from sbppia.topology import Path, PathPair, candidate_pairs
from sbppia.traffic import Request, generate_static


def fake_path(links):
    return Path(tuple(range(len(links) + 1)), tuple(links), 100.0 * len(links))


def test_link_on_one_working_path():
    other = [
        PathPair(fake_path([1, 2]), ()),
        PathPair(fake_path([3]), ()),
        PathPair(fake_path([4, 5]), ()),
    ]
    assert pairwise_link_congestion(1, other, 3, 3) == pytest.approx(1 / 3)


def test_link_on_two_backups():
    other = [
        PathPair(fake_path([1]), (fake_path([7, 8]), fake_path([7]), fake_path([9]))),
        PathPair(fake_path([2]), ()),
        PathPair(fake_path([3]), ()),
    ]
    assert pairwise_link_congestion(7, other, 3, 3) == pytest.approx(2 / 9)


def test_link_absent():
    other = [PathPair(fake_path([1]), (fake_path([2]),))]
    assert pairwise_link_congestion(42, other, 3, 3) == 0.0


def test_link_weights_agree_with_pairwise():
    pairs = [
        PathPair(fake_path([1, 2]), (fake_path([3, 4]), fake_path([5]))),
        PathPair(fake_path([3]), (fake_path([1, 6]),)),
    ]
    w = link_weights(pairs, 2, 2)
    for l in range(1, 8):
        assert w.get(l, 0.0) == pytest.approx(pairwise_link_congestion(l, pairs, 2, 2))


def candidates_for(topo, requests, k, k_b):
    return {r.id: candidate_pairs(topo, r.source, r.destination, k, k_b) for r in requests}


@pytest.mark.parametrize("seed", range(5))
def test_profile_matches_spreadsheet(six, seed):
    reqs = generate_static(six, 3, (10, 70), seed)
    cands = candidates_for(six, reqs, 2, 2)
    got = {p.request: p.con for p in congestion_profile(reqs, cands, 30, 2, 2)}
    want = spreadsheet_congestion(reqs, cands, 30, 2, 2)
    for rid in want:
        assert got[rid] == pytest.approx(want[rid], rel=1e-12, abs=1e-15)


def test_disjoint_candidates_give_zero():
    a = Request(1, 1, 2, 40)
    b = Request(2, 3, 4, 40)
    cands = {
        1: [PathPair(fake_path([1]), (fake_path([2]),))],
        2: [PathPair(fake_path([3]), (fake_path([4]),))],
    }
    prof = congestion_profile([a, b], cands, 10, 1, 1)
    assert [p.con for p in prof] == [0.0, 0.0]


def test_symmetric_requests_tie(six):
    reqs = [Request(1, 1, 4, 50), Request(2, 1, 4, 50)]
    cands = candidates_for(six, reqs, 3, 3)
    a, b = congestion_profile(reqs, cands, 30, 3, 3)
    assert a.con == b.con
    assert a.working == b.working


def test_demand_scales_congestion(six):
    base = [Request(1, 1, 4, 40), Request(2, 2, 5, 60), Request(3, 3, 6, 30)]
    bigger = [Request(1, 1, 4, 80), *base[1:]]
    cands = candidates_for(six, base, 2, 2)
    p0 = congestion_profile(base, cands, 30, 2, 2)[0]
    p1 = congestion_profile(bigger, cands, 30, 2, 2)[0]
    for x, y in zip(p0.working, p1.working):
        assert y == pytest.approx(2 * x)
    assert p1.con == pytest.approx(p0.con)


def test_profile_entries_non_negative(fourteen):
    reqs = generate_static(fourteen, 12, (10, 700), 3)
    cands = candidates_for(fourteen, reqs, 3, 3)
    for p in congestion_profile(reqs, cands, 350, 3, 3):
        assert p.con >= 0
        assert all(x >= 0 for x in p.working)
        assert all(x >= 0 for row in p.backup for x in row)


def profile(rid, con, rho=10):
    return CongestionProfile(rid, rho, [], [], [], con)


def test_mcw_lcbf_order():
    profs = [profile(1, 0.5), profile(2, 2.0), profile(3, 1.1)]
    assert sort_mcw_lcbf(profs) == [2, 3, 1]


def test_mcw_lcbf_ties():
    profs = [profile(1, 1.0, 40), profile(2, 1.0, 70), profile(3, 1.0, 70)]
    assert sort_mcw_lcbf(profs) == [2, 3, 1]


@given(st.lists(st.tuples(st.floats(0, 5), st.integers(10, 700)), min_size=1, max_size=8))
def test_mcw_lcbf_permutation_invariant(items):
    profs = [profile(i + 1, c, r) for i, (c, r) in enumerate(items)]
    order = sort_mcw_lcbf(profs)
    assert sorted(order) == [p.request for p in profs]
    for perm in itertools.islice(itertools.permutations(profs), 6):
        assert sort_mcw_lcbf(list(perm)) == order


def test_mdf():
    reqs = [Request(1, 1, 2, 100), Request(2, 1, 2, 700), Request(3, 1, 2, 400)]
    assert sort_mdf(reqs) == [2, 3, 1]
    assert sort_mdf(reqs[::-1]) == [2, 3, 1]
    same = [Request(3, 1, 2, 50), Request(1, 1, 2, 50), Request(2, 1, 2, 50)]
    assert sort_mdf(same) == [1, 2, 3]


def test_profiles_dump(six):
    reqs = generate_static(six, 2, (10, 70), 1)
    text = dumps_profiles(congestion_profile(reqs, candidates_for(six, reqs, 2, 2), 30, 2, 2))
    lines = text.splitlines()
    assert lines[0].startswith("request,working_idx")
    assert len(lines) > 1
