"""Static request sets and Poisson arrival/departure streams."""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Iterable, Iterator, Sequence

import numpy as np

from .topology import Topology

BASE_RATE_GBPS = 10  # one slot at BPSK


@dataclass(frozen=True)
class Request:
    id: int
    source: int
    destination: int
    rho: int  # Gbps
    arrival: float = 0.0
    holding: float = math.inf

    def __post_init__(self) -> None:
        if self.source == self.destination:
            raise ValueError(f"request {self.id}: source equals destination")
        if self.rho <= 0:
            raise ValueError(f"request {self.id}: demand must be positive")

    @property
    def departure(self) -> float:
        return self.arrival + self.holding


def bpsk_slots(rho: float) -> int:
    """Slots needed when every slot runs at the base BPSK rate."""
    return math.ceil(rho / BASE_RATE_GBPS)


ARRIVAL = 0
DEPARTURE = 1


@dataclass(frozen=True, order=True)
class Event:
    time: float
    kind: int  # arrivals sort before departures at equal times
    request: Request


def _demands(rng: np.random.Generator, count: int, rho_range: tuple[int, int]) -> np.ndarray:
    lo, hi = rho_range
    if lo > hi or lo < BASE_RATE_GBPS:
        raise ValueError(f"bad demand range {rho_range}")
    # demands are whole multiples of the base rate
    steps = rng.integers(lo // BASE_RATE_GBPS, hi // BASE_RATE_GBPS + 1, size=count)
    return steps * BASE_RATE_GBPS


def _pairs(rng: np.random.Generator, nodes: Sequence[int], count: int) -> list[tuple[int, int]]:
    n = len(nodes)
    if n < 2:
        raise ValueError("need at least two nodes")
    src = rng.integers(0, n, size=count)
    # uniform over ordered pairs: pick destination among the other n-1 nodes
    off = rng.integers(1, n, size=count)
    dst = (src + off) % n
    return [(nodes[s], nodes[d]) for s, d in zip(src, dst)]


def generate_static(
    topology: Topology, count: int, rho_range: tuple[int, int] = (10, 700), seed: int = 0
) -> list[Request]:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    nodes = sorted(topology.nodes)
    pairs = _pairs(rng, nodes, count)
    rhos = _demands(rng, count, rho_range)
    return [Request(i + 1, s, d, int(r)) for i, ((s, d), r) in enumerate(zip(pairs, rhos))]


def generate_dynamic(
    topology: Topology,
    arrival_rate: float,
    mean_holding: float,
    count: int,
    rho_range: tuple[int, int] = (10, 700),
    seed: int = 0,
) -> list[Request]:
    """``count`` requests with exponential inter-arrival and holding times."""
    if arrival_rate <= 0 or mean_holding <= 0:
        raise ValueError("rates must be positive")
    rng = np.random.default_rng(seed)
    nodes = sorted(topology.nodes)
    arrivals = np.cumsum(rng.exponential(1.0 / arrival_rate, size=count))
    holdings = rng.exponential(mean_holding, size=count)
    pairs = _pairs(rng, nodes, count)
    rhos = _demands(rng, count, rho_range)
    return [
        Request(i + 1, s, d, int(r), float(t), float(h))
        for i, ((s, d), r, t, h) in enumerate(zip(pairs, rhos, arrivals, holdings))
    ]


def event_stream(requests: Iterable[Request]) -> Iterator[Event]:
    """Time-ordered arrivals and departures."""
    heap: list[Event] = []
    for r in requests:
        heapq.heappush(heap, Event(r.arrival, ARRIVAL, r))
        if math.isfinite(r.holding):
            heapq.heappush(heap, Event(r.departure, DEPARTURE, r))
    while heap:
        yield heapq.heappop(heap)


def rate_for_load(load_tbps: float, mean_holding: float, rho_range: tuple[int, int]) -> float:
    """Arrival rate giving an offered load of ``load_tbps`` (mean demand times Erlangs)."""
    mean_rho = (rho_range[0] + rho_range[1]) / 2.0
    return load_tbps * 1000.0 / (mean_holding * mean_rho)


def offered_load_tbps(arrival_rate: float, mean_holding: float, rho_range: tuple[int, int]) -> float:
    return arrival_rate * mean_holding * (rho_range[0] + rho_range[1]) / 2.0 / 1000.0


# ---- CSV -------------------------------------------------------------------------


def dumps_requests(requests: Iterable[Request]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "src", "dst", "rho_gbps", "arrival_s", "holding_s"])
    for r in requests:
        row = [r.id, r.source, r.destination, r.rho]
        if r.arrival or math.isfinite(r.holding):
            row += [repr(r.arrival), repr(r.holding)]
        w.writerow(row)
    return buf.getvalue()


def loads_requests(text: str) -> list[Request]:
    out = []
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, 1):
        if not row or row[0].strip().startswith("#"):
            continue
        if row[0].strip() == "id":
            continue
        try:
            rid, s, d, rho = (int(float(x)) for x in row[:4])
            if len(row) >= 6 and row[4].strip():
                out.append(Request(rid, s, d, rho, float(row[4]), float(row[5])))
            else:
                out.append(Request(rid, s, d, rho))
        except ValueError as exc:
            raise ValueError(f"traffic line {lineno}: {exc}") from exc
    return out


def load_requests(path: str | FilePath) -> list[Request]:
    return loads_requests(FilePath(path).read_text())
