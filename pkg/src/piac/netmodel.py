"""Static network description: buses, lines, areas and the communication graph.

Everything here is immutable once built.  Arrays derived from a network are
cached on first access and indexed in ascending node-id order.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np


class NetworkError(ValueError):
    """Raised when a network or partition cannot be used as requested."""


class NodeKind(str, Enum):
    MACHINE = "machine"
    FREQ_DEPENDENT = "freq_dependent"
    PASSIVE = "passive"

    @property
    def controlled(self) -> bool:
        return self is not NodeKind.PASSIVE


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    inertia: float = 0.0
    damping: float = 0.0
    injection: float = 0.0
    price: float | None = None


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    susceptance: float


@dataclass(frozen=True)
class PowerNetwork:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    f_nominal: float = 60.0
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "edges", tuple(self.edges))

    # -- index bookkeeping -------------------------------------------------
    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([n.id for n in self.nodes], dtype=int)

    @cached_property
    def index(self) -> dict[int, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    @property
    def n(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> Node:
        return self.nodes[self.index[node_id]]

    def _select(self, *kinds: NodeKind) -> np.ndarray:
        return np.array([k for k, n in enumerate(self.nodes) if n.kind in kinds], dtype=int)

    @cached_property
    def machine_idx(self) -> np.ndarray:
        return self._select(NodeKind.MACHINE)

    @cached_property
    def freq_idx(self) -> np.ndarray:
        return self._select(NodeKind.FREQ_DEPENDENT)

    @cached_property
    def passive_idx(self) -> np.ndarray:
        return self._select(NodeKind.PASSIVE)

    @cached_property
    def controlled_idx(self) -> np.ndarray:
        """Positions of V_K = V_M ∪ V_F, ascending id."""
        return self._select(NodeKind.MACHINE, NodeKind.FREQ_DEPENDENT)

    @cached_property
    def controlled_ids(self) -> np.ndarray:
        return self.ids[self.controlled_idx]

    @cached_property
    def reference_idx(self) -> int:
        """Lowest-id machine; its angle anchors the relative coordinates."""
        if len(self.machine_idx) == 0:
            raise NetworkError("network has no machine node to use as angle reference")
        return int(self.machine_idx[0])

    # -- parameter vectors ---------------------------------------------------
    @cached_property
    def inertia(self) -> np.ndarray:
        return np.array([n.inertia for n in self.nodes], dtype=float)

    @cached_property
    def damping(self) -> np.ndarray:
        return np.array([n.damping for n in self.nodes], dtype=float)

    @cached_property
    def injection(self) -> np.ndarray:
        return np.array([n.injection for n in self.nodes], dtype=float)

    @cached_property
    def price(self) -> np.ndarray:
        """Prices of the controlled nodes (NaN where missing)."""
        return np.array(
            [np.nan if self.nodes[k].price is None else self.nodes[k].price for k in self.controlled_idx],
            dtype=float,
        )

    @cached_property
    def edge_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ei = np.array([self.index[e.i] for e in self.edges], dtype=int)
        ej = np.array([self.index[e.j] for e in self.edges], dtype=int)
        b = np.array([e.susceptance for e in self.edges], dtype=float)
        return ei, ej, b

    @cached_property
    def susceptance_matrix(self) -> np.ndarray:
        ei, ej, b = self.edge_index
        B = np.zeros((self.n, self.n))
        np.add.at(B, (ei, ej), b)
        np.add.at(B, (ej, ei), b)
        return B

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            adj[e.i].append(e.j)
            adj[e.j].append(e.i)
        return {k: sorted(v) for k, v in adj.items()}

    # -- derived copies ------------------------------------------------------
    def with_injections(self, injection: Mapping[int, float] | Sequence[float]) -> "PowerNetwork":
        if isinstance(injection, Mapping):
            new = [replace(n, injection=float(injection.get(n.id, n.injection))) for n in self.nodes]
        else:
            new = [replace(n, injection=float(p)) for n, p in zip(self.nodes, injection)]
        return replace(self, nodes=tuple(new))

    def with_prices(self, prices: Mapping[int, float]) -> "PowerNetwork":
        new = [replace(n, price=float(prices[n.id])) if n.id in prices else n for n in self.nodes]
        return replace(self, nodes=tuple(new))


def _freeze(mapping) -> MappingProxyType:
    return MappingProxyType(dict(mapping))


@dataclass(frozen=True)
class Partition:
    """Disjoint area assignment plus symmetric communication weights between areas.

    ``comm_weights`` is keyed by unordered area pairs, stored as ``(min, max)``.
    """

    areas: Mapping[int, int]
    comm_weights: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "areas", _freeze({int(k): int(v) for k, v in self.areas.items()}))
        weights: dict[tuple[int, int], float] = {}
        for (r, q), w in dict(self.comm_weights).items():
            if r == q:
                continue
            key = (min(r, q), max(r, q))
            if key in weights and weights[key] != float(w):
                raise NetworkError(f"asymmetric communication weight for areas {key}")
            weights[key] = float(w)
        object.__setattr__(self, "comm_weights", _freeze(weights))

    @cached_property
    def area_ids(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.areas.values())))

    @property
    def m(self) -> int:
        return len(self.area_ids)

    def members(self, r: int) -> list[int]:
        return sorted(i for i, a in self.areas.items() if a == r)

    def weight(self, r: int, q: int) -> float:
        return self.comm_weights.get((min(r, q), max(r, q)), 0.0)


# -- partition constructors ------------------------------------------------------

def single_area(net: PowerNetwork) -> Partition:
    return Partition({n.id: 1 for n in net.nodes})


def _attach_passive(net: PowerNetwork, areas: dict[int, int]) -> dict[int, int]:
    """Give every passive node the area of its nearest controlled node (BFS, lowest id on ties)."""
    adj = net.neighbors()
    out = dict(areas)
    for node in net.nodes:
        if node.id in out:
            continue
        seen = {node.id}
        frontier = deque([node.id])
        found = None
        while frontier and found is None:
            for nb in sorted(frontier.popleft() for _ in range(len(frontier))):
                for k in adj[nb]:
                    if k in areas:
                        found = k if found is None else min(found, k)
                    if k not in seen:
                        seen.add(k)
                        frontier.append(k)
        if found is None:
            raise NetworkError(f"node {node.id} is not connected to any controlled node")
        out[node.id] = areas[found]
    return out


def contracted_adjacency(net: PowerNetwork) -> dict[int, set[int]]:
    """Adjacency between controlled nodes after contracting through passive buses."""
    adj = net.neighbors()
    controlled = set(int(i) for i in net.controlled_ids)
    out: dict[int, set[int]] = {i: set() for i in controlled}
    for i in controlled:
        seen = {i}
        stack = list(adj[i])
        while stack:
            k = stack.pop()
            if k in seen:
                continue
            seen.add(k)
            if k in controlled:
                out[i].add(k)
            else:
                stack.extend(adj[k])
    return out


def spanning_tree(net: PowerNetwork) -> list[tuple[int, int]]:
    """BFS spanning tree over the controlled nodes, rooted at the lowest id."""
    adj = contracted_adjacency(net)
    root = min(adj)
    seen = {root}
    queue = deque([root])
    tree = []
    while queue:
        i = queue.popleft()
        for k in sorted(adj[i]):
            if k not in seen:
                seen.add(k)
                tree.append((i, k))
                queue.append(k)
    return tree


def per_node(net: PowerNetwork, comm_edges: Iterable[tuple[int, int]] | None = None,
             weight: float = 1.0) -> Partition:
    """One area per controlled node (the distributed special case).

    Area ids follow ascending node id.  Communication defaults to the BFS spanning
    tree of the contracted physical graph.
    """
    area_of = {int(i): r + 1 for r, i in enumerate(net.controlled_ids)}
    if comm_edges is None:
        comm_edges = spanning_tree(net)
    weights = {(area_of[i], area_of[j]): weight for i, j in comm_edges}
    return Partition(_attach_passive(net, area_of), weights)


def from_area_lists(net: PowerNetwork, area_nodes: Mapping[int, Iterable[int]],
                    comm_weights: Mapping[tuple[int, int], float]) -> Partition:
    areas = {int(i): int(r) for r, members in area_nodes.items() for i in members}
    if len(areas) < net.n:
        areas = _attach_passive(net, areas)
    return Partition(areas, comm_weights)


# -- operations ------------------------------------------------------------------

def _connected(vertices: Iterable[int], edges: Iterable[tuple[int, int]]) -> bool:
    vertices = list(vertices)
    if not vertices:
        return True
    adj: dict[int, set[int]] = {v: set() for v in vertices}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    seen = {vertices[0]}
    stack = [vertices[0]]
    while stack:
        for k in adj[stack.pop()]:
            if k not in seen:
                seen.add(k)
                stack.append(k)
    return len(seen) == len(vertices)


def validate_network(net: PowerNetwork, part: Partition | None = None) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""
    problems: list[str] = []
    ids = [n.id for n in net.nodes]
    if len(set(ids)) != len(ids):
        problems.append("duplicate node ids")
    if sorted(ids) != list(range(1, len(ids) + 1)):
        problems.append("node ids are not contiguous from 1")
    if not any(n.kind is NodeKind.MACHINE for n in net.nodes):
        problems.append("no machine node")
    for n in net.nodes:
        if n.kind is NodeKind.MACHINE and not n.inertia > 0:
            problems.append(f"node {n.id}: machine inertia must be positive")
        if n.kind is not NodeKind.MACHINE and n.inertia != 0:
            problems.append(f"node {n.id}: only machines carry inertia")
        if n.kind.controlled and not n.damping > 0:
            problems.append(f"node {n.id}: droop must be positive")
        if n.kind is NodeKind.PASSIVE and n.damping != 0:
            problems.append(f"node {n.id}: passive node has a droop term")
        if n.kind.controlled and not (n.price is not None and n.price > 0):
            problems.append(f"node {n.id}: price must be positive for a controlled node")
    idset = set(ids)
    for e in net.edges:
        if e.i == e.j:
            problems.append(f"edge ({e.i}, {e.j}) is a self-loop")
        if e.i not in idset or e.j not in idset:
            problems.append(f"edge ({e.i}, {e.j}) references an unknown node")
        if not e.susceptance > 0:
            problems.append(f"edge ({e.i}, {e.j}): susceptance must be positive")
    if not _connected(ids, [(e.i, e.j) for e in net.edges]):
        problems.append("network graph disconnected")

    if part is None:
        return problems
    missing = idset - set(part.areas)
    extra = set(part.areas) - idset
    if missing:
        problems.append(f"nodes without area: {sorted(missing)}")
    if extra:
        problems.append(f"area assignment for unknown nodes: {sorted(extra)}")
    for r in part.area_ids:
        if not any(net.node(i).kind.controlled for i in part.members(r) if i in idset):
            problems.append(f"area {r}: area without controlled node")
    for (r, q), w in part.comm_weights.items():
        if r not in part.area_ids or q not in part.area_ids:
            problems.append(f"communication weight for unknown area pair ({r}, {q})")
        if w < 0:
            problems.append(f"communication weight ({r}, {q}) is negative")
    if not _connected(part.area_ids, [k for k, w in part.comm_weights.items() if w > 0]):
        problems.append("comm graph disconnected")
    return problems


def comm_laplacian(part: Partition) -> np.ndarray:
    """Weighted Laplacian of the area communication graph, rows in ascending area id."""
    pos = {r: k for k, r in enumerate(part.area_ids)}
    L = np.zeros((part.m, part.m))
    for (r, q), w in part.comm_weights.items():
        a, b = pos[r], pos[q]
        L[a, b] -= w
        L[b, a] -= w
        L[a, a] += w
        L[b, b] += w
    return L


def harmonic_price(prices: Sequence[float]) -> float:
    """1 / sum(1/alpha_i).  A single price is returned unchanged."""
    prices = np.asarray(prices, dtype=float)
    if prices.size == 0:
        raise NetworkError("undefined area price: no controlled node")
    if prices.size == 1:
        return float(prices[0])
    return float(1.0 / np.sum(1.0 / prices))


def area_price(part: Partition, net: PowerNetwork, r: int) -> float:
    prices = [net.node(i).price for i in part.members(r) if net.node(i).kind.controlled]
    if not prices:
        raise NetworkError(f"undefined area price: area {r} has no controlled node")
    return harmonic_price(prices)


def area_prices(part: Partition, net: PowerNetwork) -> np.ndarray:
    return np.array([area_price(part, net, r) for r in part.area_ids])


def membership(part: Partition, net: PowerNetwork) -> np.ndarray:
    """Area position (0-based, ascending area id) of each controlled node."""
    pos = {r: k for k, r in enumerate(part.area_ids)}
    return np.array([pos[part.areas[int(i)]] for i in net.controlled_ids], dtype=int)


def power_imbalance(net: PowerNetwork) -> float:
    return float(np.sum(net.injection))
