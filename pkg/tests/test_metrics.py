import csv
import io
import json

import pytest

from sbppia.metrics import (
    SWEEP_COLUMNS, RunReport, Snapshot, bbp, mean_snapshot, optimality_gap, reports_to_csv,
    shareability, snapshot, total_slots_used,
)
from sbppia.spectrum import SpectrumGrid
from sbppia.topology import Topology
from sbppia.traffic import Request


@pytest.fixture
def square():
    return Topology.from_edges([(1, 2, 100), (2, 3, 100), (3, 4, 100), (4, 1, 100), (2, 4, 100)])


def reqs(*rhos):
    return [Request(i + 1, 1, 2, r) for i, r in enumerate(rhos)]


def test_bbp_examples():
    offered = reqs(40, 40)
    assert bbp([], offered) == 0.0
    assert bbp(offered, offered) == 1.0
    assert bbp(offered[:1], offered) == 0.5
    assert bbp(reqs(10), reqs(10, 30)) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        bbp([], [])


def shared_grid(square):
    grid = SpectrumGrid(square, 4)
    p = square.make_path
    grid.commit_working(1, p([1, 2]), {1: 1})
    grid.commit_working(2, p([4, 3]), {1: 1})
    grid.commit_backup(1, p([1, 2]), p([1, 4, 2]), {2: 1})
    grid.commit_backup(2, p([4, 3]), p([4, 2, 3]), {2: 1})
    return grid


def test_shareability_none(square):
    grid = SpectrumGrid(square, 4)
    assert shareability(grid) == 0.0
    p = square.make_path
    grid.commit_working(1, p([1, 2]), {1: 1})
    grid.commit_backup(1, p([1, 2]), p([1, 4, 2]), {2: 1})
    assert shareability(grid) == 0.0


def test_shareability_formula(square):
    # backup cells: 1->4, 4->2 (shared), 2->3; extra holders: one
    grid = shared_grid(square)
    assert shareability(grid) == pytest.approx(100.0 / 3)


def test_shareability_four_cells_two_shared():
    topo = Topology.from_edges(
        [(1, 2, 100), (1, 3, 100), (3, 2, 100), (1, 5, 100), (5, 2, 100),
         (3, 4, 100), (3, 6, 100), (6, 4, 100)]
    )
    p = topo.make_path
    grid = SpectrumGrid(topo, 2)
    grid.commit_working(1, p([1, 2]), {1: 1})
    grid.commit_backup(1, p([1, 2]), p([1, 5, 2]), {1: 1})
    grid.commit_working(2, p([1, 3, 2]), {1: 1})
    grid.commit_backup(2, p([1, 3, 2]), p([1, 5, 2]), {1: 1})
    grid.commit_working(3, p([3, 4]), {1: 1})
    grid.commit_backup(3, p([3, 4]), p([3, 6, 4]), {1: 1})
    assert int((grid.backup_count > 0).sum()) == 4
    assert shareability(grid) == pytest.approx(50.0)


def test_adding_compatible_holder_raises_shareability(square):
    grid = SpectrumGrid(square, 4)
    p = square.make_path
    grid.commit_working(1, p([1, 2]), {1: 1})
    grid.commit_backup(1, p([1, 2]), p([1, 4, 2]), {2: 1})
    grid.commit_working(2, p([4, 3]), {1: 1})
    before = float((grid.backup_count[grid.backup_count > 0] - 1).sum())
    grid.commit_backup(2, p([4, 3]), p([4, 2, 3]), {2: 1})
    after = float((grid.backup_count[grid.backup_count > 0] - 1).sum())
    assert after > before


def test_total_slots(square):
    grid = SpectrumGrid(square, 6)
    assert total_slots_used(grid) == 0
    p = square.make_path
    grid.commit_working(1, p([1, 2, 3]), {1: 1, 2: 1, 3: 1})
    assert total_slots_used(grid) == 6
    grid.commit_backup(1, p([1, 2, 3]), p([1, 4, 3]), {4: 1, 5: 1, 6: 1})
    assert total_slots_used(grid) == 12


def test_sharing_uses_fewer_slots(square):
    shared = shared_grid(square)
    apart = SpectrumGrid(square, 4)
    p = square.make_path
    apart.commit_working(1, p([1, 2]), {1: 1})
    apart.commit_working(2, p([4, 3]), {1: 1})
    apart.commit_backup(1, p([1, 2]), p([1, 4, 2]), {2: 1})
    apart.commit_backup(2, p([4, 3]), p([4, 2, 3]), {3: 1})
    assert total_slots_used(shared) < total_slots_used(apart)


def test_optimality_gap():
    assert optimality_gap(100, 100) == 0.0
    assert optimality_gap(100, 110) == pytest.approx(10.0)
    with pytest.raises(ZeroDivisionError):
        optimality_gap(0, 5)


def test_snapshot_is_pure(square):
    a, b = shared_grid(square), shared_grid(square)
    assert snapshot(a) == snapshot(b)
    s = snapshot(a)
    assert 0 <= s.fragmentation <= 1 and 0 <= s.shareability <= 100


def test_mean_snapshot():
    snaps = [Snapshot(0.2, 10.0, 4), Snapshot(0.4, 20.0, 7)]
    m = mean_snapshot(snaps)
    assert m.fragmentation == pytest.approx(0.3)
    assert m.shareability == pytest.approx(15.0)
    assert m.total_slots == 6
    assert mean_snapshot([]) == Snapshot(0.0, 0.0, 0)


def test_report_serialization():
    r = RunReport(40.0, -30.0, 0.1, 0.2, 5.0, 120, 0.0, 0.0, 7, admitted=9, blocked=1)
    doc = json.loads(r.to_json())
    assert doc["seed"] == 7 and doc["admitted"] == 9
    rows = list(csv.DictReader(io.StringIO(reports_to_csv([r, r]))))
    assert len(rows) == 2
    assert list(rows[0]) == SWEEP_COLUMNS
    assert float(rows[0]["cx_db"]) == -30.0
