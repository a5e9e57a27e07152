import math

import numpy as np
import pytest

from sbppia.traffic import (
    ARRIVAL, DEPARTURE, Request, bpsk_slots, dumps_requests, event_stream, generate_dynamic,
    generate_static, loads_requests, offered_load_tbps, rate_for_load,
)


def test_static_is_deterministic(fourteen):
    a = dumps_requests(generate_static(fourteen, 50, (10, 700), 3))
    b = dumps_requests(generate_static(fourteen, 50, (10, 700), 3))
    assert a == b
    assert a != dumps_requests(generate_static(fourteen, 50, (10, 700), 4))


def test_static_mean_demand(fourteen):
    reqs = generate_static(fourteen, 1000, (10, 700), 0)
    mean = np.mean([r.rho for r in reqs])
    assert abs(mean - 355) / 355 < 0.05
    assert all(10 <= r.rho <= 700 and r.rho % 10 == 0 for r in reqs)
    assert all(r.source != r.destination for r in reqs)
    assert [r.id for r in reqs] == list(range(1, 1001))


def test_fixed_demand(six):
    assert {r.rho for r in generate_static(six, 40, (10, 10), 2)} == {10}


def test_pairs_cover_all_ordered_pairs(six):
    reqs = generate_static(six, 3000, (10, 10), 1)
    assert len({(r.source, r.destination) for r in reqs}) == 30


@pytest.mark.parametrize("bad", [(0, 10), (50, 10)])
def test_bad_demand_range(six, bad):
    with pytest.raises(ValueError):
        generate_static(six, 5, bad, 0)


def test_dynamic_statistics(fourteen):
    reqs = generate_dynamic(fourteen, 4.0, 2.5, 100_000, (10, 700), 11)
    gaps = np.diff([0.0] + [r.arrival for r in reqs])
    assert abs(gaps.mean() - 0.25) / 0.25 < 0.02
    holding = np.mean([r.holding for r in reqs])
    assert abs(holding - 2.5) / 2.5 < 0.02


def test_event_stream_sorted(six):
    reqs = generate_dynamic(six, 3.0, 1.0, 500, (10, 70), 5)
    events = list(event_stream(reqs))
    assert len(events) == 1000
    times = [e.time for e in events]
    assert times == sorted(times)
    first_seen = {}
    for e in events:
        if e.kind == ARRIVAL:
            first_seen[e.request.id] = True
        else:
            assert e.kind == DEPARTURE and first_seen.get(e.request.id)
            assert e.time == e.request.arrival + e.request.holding


def test_arrival_sorts_before_departure_at_same_time():
    a = Request(1, 1, 2, 10, 0.0, 1.0)
    b = Request(2, 1, 2, 10, 1.0, 1.0)
    kinds = [(e.request.id, e.kind) for e in event_stream([a, b])]
    assert kinds == [(1, ARRIVAL), (2, ARRIVAL), (1, DEPARTURE), (2, DEPARTURE)]


def test_static_requests_never_depart():
    assert [e.kind for e in event_stream([Request(1, 1, 2, 10)])] == [ARRIVAL]


def test_load_rate_inverse():
    rate = rate_for_load(40.0, 2.0, (10, 700))
    assert offered_load_tbps(rate, 2.0, (10, 700)) == pytest.approx(40.0)


def test_csv_round_trip(fourteen):
    for reqs in (
        generate_static(fourteen, 20, (10, 700), 1),
        generate_dynamic(fourteen, 2.0, 1.0, 20, (10, 700), 1),
    ):
        assert loads_requests(dumps_requests(reqs)) == reqs


def test_csv_without_header_and_comments():
    text = "# replayed\n1,2,3,40\n2,3,1,70,0.5,2.0\n"
    reqs = loads_requests(text)
    assert reqs[0] == Request(1, 2, 3, 40)
    assert reqs[1].holding == 2.0 and reqs[1].arrival == 0.5


def test_csv_bad_row():
    with pytest.raises(ValueError):
        loads_requests("1,2,x,40\n")


def test_request_invariants():
    with pytest.raises(ValueError):
        Request(1, 2, 2, 10)
    with pytest.raises(ValueError):
        Request(1, 1, 2, 0)
    assert math.isinf(Request(1, 1, 2, 10).departure)


def test_bpsk_slots():
    assert bpsk_slots(10) == 1
    assert bpsk_slots(15) == 2
    assert bpsk_slots(700) == 70
