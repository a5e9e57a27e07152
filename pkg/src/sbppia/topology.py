"""Network graph, SRLG groups and candidate path computation.

Links are directed. A bidirectional fiber is two directed links that carry
the same SRLG ids. Paths are computed with networkx's simple-path generator
(Yen's algorithm seeded by Dijkstra) and re-ranked so that equal-length
paths come out in lexicographic node order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Iterable, Iterator, Sequence

import networkx as nx

LINK = "link"
SRLG = "srlg"
FAILURE_MODELS = (LINK, SRLG)


class TopologyError(ValueError):
    """Malformed topology data."""


class NoPath(LookupError):
    """Source and destination are disconnected."""


@dataclass(frozen=True)
class Node:
    id: int
    fiber_degree: int
    gout_db: float

    @classmethod
    def from_architecture(cls, id: int, fiber_degree: int, l_wss_db: float = 2.0) -> "Node":
        """Output EDFA gain that compensates the broadcast-and-select switch loss."""
        gout = 3 * math.ceil(math.log2(fiber_degree)) + l_wss_db if fiber_degree > 1 else l_wss_db
        return cls(id, fiber_degree, gout)

    @property
    def gout_linear(self) -> float:
        return 10 ** (self.gout_db / 10)


@dataclass(frozen=True)
class Link:
    id: int
    head: int
    tail: int
    distance_km: float
    srlgs: frozenset[int] = frozenset()


@dataclass(frozen=True)
class SrlGroup:
    id: int
    members: frozenset[int]
    node: int | None = None  # set when the group models a node failure


@dataclass(frozen=True)
class Path:
    """A simple directed path, stored both as node and link sequences."""

    nodes: tuple[int, ...]
    links: tuple[int, ...]
    distance_km: float

    @property
    def source(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]

    @property
    def heads(self) -> tuple[int, ...]:
        # node whose cross-connect launches the signal onto each link
        return self.nodes[:-1]

    @property
    def tails(self) -> tuple[int, ...]:
        return self.nodes[1:]

    @property
    def intermediate(self) -> tuple[int, ...]:
        return self.nodes[1:-1]

    @property
    def link_set(self) -> frozenset[int]:
        return frozenset(self.links)

    def __len__(self) -> int:
        return len(self.links)


@dataclass(frozen=True)
class PathPair:
    """A working path with its protection candidates."""

    working: Path
    backups: tuple[Path, ...]
    working_failset: frozenset[int] = field(default=frozenset())
    backup_failsets: tuple[frozenset[int], ...] = ()


class Topology:
    """Immutable network description.

    >>> topo = Topology.line([1, 2, 3], distance_km=100)
    >>> [p.nodes for p in k_shortest_working_paths(topo, 1, 3, 3)]
    [(1, 2, 3)]
    """

    def __init__(
        self,
        nodes: Iterable[Node],
        links: Iterable[Link],
        srlgs: Iterable[SrlGroup] = (),
    ) -> None:
        self.nodes: dict[int, Node] = {n.id: n for n in nodes}
        self.links: dict[int, Link] = {l.id: l for l in sorted(links, key=lambda l: l.id)}
        self._by_ends: dict[tuple[int, int], Link] = {}
        for link in self.links.values():
            if link.head == link.tail:
                raise TopologyError(f"link {link.id} is a self loop")
            if link.distance_km <= 0:
                raise TopologyError(f"link {link.id} has non-positive distance")
            for end in (link.head, link.tail):
                if end not in self.nodes:
                    raise TopologyError(f"link {link.id} references unknown node {end}")
            key = (link.head, link.tail)
            if key in self._by_ends:
                raise TopologyError(f"parallel links between {key} are not supported")
            self._by_ends[key] = link
        for node in self.nodes.values():
            if node.fiber_degree < 1:
                raise TopologyError(f"node {node.id} has fiber degree < 1")

        groups: dict[int, SrlGroup] = {g.id: g for g in srlgs}
        # groups declared only through link tags
        tagged: dict[int, set[int]] = {}
        for link in self.links.values():
            for g in link.srlgs:
                tagged.setdefault(g, set()).add(link.id)
        for gid, members in tagged.items():
            if gid in groups:
                if not members <= groups[gid].members:
                    groups[gid] = SrlGroup(gid, groups[gid].members | members, groups[gid].node)
            else:
                groups[gid] = SrlGroup(gid, frozenset(members))
        for g in groups.values():
            if not g.members:
                raise TopologyError(f"SRLG {g.id} has no member links")
        self.srlgs: dict[int, SrlGroup] = dict(sorted(groups.items()))
        self._node_srlg = {g.node: g.id for g in self.srlgs.values() if g.node is not None}
        self._link_srlgs: dict[int, frozenset[int]] = {lid: frozenset() for lid in self.links}
        for g in self.srlgs.values():
            for lid in g.members:
                self._link_srlgs[lid] = self._link_srlgs[lid] | {g.id}

        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(sorted(self.nodes))
        for link in self.links.values():
            self.graph.add_edge(link.head, link.tail, weight=link.distance_km, link=link.id)

    # ---- construction helpers -------------------------------------------------

    @classmethod
    def from_edges(
        cls,
        edges: Sequence[tuple[int, int, float]],
        gout_db: dict[int, float] | None = None,
        l_wss_db: float = 2.0,
        bidirectional: bool = True,
    ) -> "Topology":
        """Build from undirected ``(u, v, km)`` edges; fiber degree is the neighbour count."""
        neighbours: dict[int, set[int]] = {}
        for u, v, _ in edges:
            neighbours.setdefault(u, set()).add(v)
            neighbours.setdefault(v, set()).add(u)
        nodes = []
        for nid in sorted(neighbours):
            node = Node.from_architecture(nid, len(neighbours[nid]), l_wss_db)
            if gout_db and nid in gout_db:
                node = Node(nid, node.fiber_degree, gout_db[nid])
            nodes.append(node)
        links = []
        for k, (u, v, km) in enumerate(edges):
            if bidirectional:
                fiber = frozenset({k + 1})
                links.append(Link(2 * k, u, v, km, fiber))
                links.append(Link(2 * k + 1, v, u, km, fiber))
            else:
                links.append(Link(k, u, v, km, frozenset({k + 1})))
        return cls(nodes, links)

    @classmethod
    def line(cls, node_ids: Sequence[int], distance_km: float = 100.0) -> "Topology":
        edges = [(a, b, distance_km) for a, b in zip(node_ids, node_ids[1:])]
        return cls.from_edges(edges)

    def with_node_srlgs(self) -> "Topology":
        """Copy whose SRLGs are the nodes: each group holds every link touching that node."""
        base = max(self.srlgs, default=0) + 1
        groups = []
        for k, nid in enumerate(sorted(self.nodes)):
            members = frozenset(l.id for l in self.links.values() if nid in (l.head, l.tail))
            if members:
                groups.append(SrlGroup(base + k, members, node=nid))
        links = [Link(l.id, l.head, l.tail, l.distance_km, frozenset()) for l in self.links.values()]
        return Topology(self.nodes.values(), links, groups)

    # ---- queries -------------------------------------------------------------

    def link_between(self, u: int, v: int) -> Link:
        return self._by_ends[(u, v)]

    def link_srlgs(self, link_id: int) -> frozenset[int]:
        return self._link_srlgs[link_id]

    def max_nodal_degree(self) -> int:
        return max(n.fiber_degree for n in self.nodes.values())

    def make_path(self, nodes: Sequence[int]) -> Path:
        links = tuple(self._by_ends[(u, v)].id for u, v in zip(nodes, nodes[1:]))
        distance = sum(self.links[l].distance_km for l in links)
        return Path(tuple(nodes), links, distance)

    def failure_elements(self, model: str) -> list[int]:
        """Ids of the single failure events: links, or SRLGs."""
        if model == LINK:
            return list(self.links)
        if model == SRLG:
            return list(self.srlgs)
        raise ValueError(f"unknown failure model {model!r}")

    def failset(self, path: Path, model: str) -> frozenset[int]:
        """Failure elements whose occurrence takes ``path`` down.

        In SRLG mode the node groups of the path's own endpoints are left out:
        no backup can survive them, so they are not protectable events for it.
        """
        if model == LINK:
            return path.link_set
        if model != SRLG:
            raise ValueError(f"unknown failure model {model!r}")
        groups: set[int] = set()
        for lid in path.links:
            groups |= self._link_srlgs[lid]
        for end in (path.source, path.destination):
            gid = self._node_srlg.get(end)
            if gid is not None:
                groups.discard(gid)
        return frozenset(groups)

    def gout_linear(self, node_ids: Iterable[int]) -> list[float]:
        return [self.nodes[n].gout_linear for n in node_ids]

    # ---- file format ---------------------------------------------------------

    @classmethod
    def loads(cls, text: str) -> "Topology":
        declared = None
        nodes: list[Node] = []
        links: list[Link] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "nodes":
                    declared = int(parts[1])
                elif parts[0] == "node":
                    nodes.append(Node(int(parts[1]), int(parts[2]), float(parts[3])))
                elif parts[0] == "link":
                    srlgs: frozenset[int] = frozenset()
                    if len(parts) > 5:
                        tag = parts[5]
                        if not tag.startswith("srlg:"):
                            raise TopologyError(f"line {lineno}: expected srlg:<ids>")
                        srlgs = frozenset(int(x) for x in tag[5:].split(",") if x)
                    links.append(
                        Link(int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4]), srlgs)
                    )
                else:
                    raise TopologyError(f"line {lineno}: unknown record {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                if isinstance(exc, TopologyError):
                    raise
                raise TopologyError(f"line {lineno}: {exc}") from exc
        if declared is not None and declared != len(nodes):
            raise TopologyError(f"header declares {declared} nodes, found {len(nodes)}")
        return cls(nodes, links)

    @classmethod
    def load(cls, path: str | FilePath) -> "Topology":
        return cls.loads(FilePath(path).read_text())

    def dumps(self) -> str:
        out = [f"nodes {len(self.nodes)}"]
        for n in self.nodes.values():
            out.append(f"node {n.id} {n.fiber_degree} {n.gout_db:g}")
        for l in self.links.values():
            line = f"link {l.id} {l.head} {l.tail} {l.distance_km:g}"
            if l.srlgs:
                line += " srlg:" + ",".join(str(g) for g in sorted(l.srlgs))
            out.append(line)
        return "\n".join(out) + "\n"


def _ranked_paths(graph: nx.DiGraph, topo: Topology, source: int, target: int, k: int) -> list[Path]:
    gen: Iterator[list[int]] = nx.shortest_simple_paths(graph, source, target, weight="weight")
    found: list[Path] = []
    for nodes in gen:
        path = topo.make_path(nodes)
        # the generator yields non-decreasing lengths; keep the whole tie class at the cut
        if len(found) >= k and path.distance_km > found[-1].distance_km + 1e-9:
            break
        found.append(path)
    found.sort(key=lambda p: (round(p.distance_km, 9), p.nodes))
    return found[:k]


def k_shortest_working_paths(topo: Topology, source: int, destination: int, k: int) -> list[Path]:
    """Up to ``k`` loopless paths by ascending distance, ties in node order."""
    if source == destination:
        raise ValueError("source and destination must differ")
    if k < 1:
        raise ValueError("k must be >= 1")
    try:
        return _ranked_paths(topo.graph, topo, source, destination, k)
    except nx.NetworkXNoPath as exc:
        raise NoPath(f"no path {source} -> {destination}") from exc


def disjoint_backup_paths(topo: Topology, working: Path, k_b: int, mode: str = LINK) -> list[Path]:
    """Up to ``k_b`` shortest paths sharing no link (or no SRLG) with ``working``."""
    if mode == LINK:
        banned = working.link_set
    else:
        fs = topo.failset(working, mode)
        banned = frozenset(lid for lid in topo.links if topo.link_srlgs(lid) & fs)
        banned |= working.link_set
    residual = nx.DiGraph()
    residual.add_nodes_from(topo.graph.nodes)
    residual.add_edges_from(
        (u, v, d) for u, v, d in topo.graph.edges(data=True) if d["link"] not in banned
    )
    try:
        return _ranked_paths(residual, topo, working.source, working.destination, k_b)
    except nx.NetworkXNoPath:
        return []


def candidate_pairs(
    topo: Topology, source: int, destination: int, k: int, k_b: int, mode: str = LINK
) -> list[PathPair]:
    pairs = []
    for w in k_shortest_working_paths(topo, source, destination, k):
        backups = tuple(disjoint_backup_paths(topo, w, k_b, mode))
        pairs.append(
            PathPair(
                w,
                backups,
                topo.failset(w, mode),
                tuple(topo.failset(b, mode) for b in backups),
            )
        )
    return pairs


def edfa_count(path: Path | Sequence[float], e_s_km: float) -> int:
    """Inline amplifiers on a path: distance over spacing, rounded up."""
    if e_s_km <= 0:
        raise ValueError("EDFA spacing must be positive")
    total = path.distance_km if isinstance(path, Path) else float(sum(path))
    q = total / e_s_km
    n = round(q)
    return int(n) if math.isclose(q, n, rel_tol=0, abs_tol=1e-9) else math.ceil(q)
