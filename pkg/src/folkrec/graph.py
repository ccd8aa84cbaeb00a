"""User proximity graph built from co-tagged items.

Edge weights are Dice coefficients over the users' item sets. Proximity
between non-adjacent users is the depth-bounded maximum over paths of the
product of edge weights, which keeps every value in [0, 1] and makes a
direct edge the length-1 special case.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .corpus import Folksonomy


@dataclass(frozen=True)
class ProximityMode:
    """Either direct-edge lookup or bounded multiplicative path search."""

    kind: str = "direct"
    max_depth: int = 1

    def __post_init__(self):
        if self.kind not in ("direct", "path"):
            raise ValueError(f"kind must be 'direct' or 'path', got {self.kind!r}")
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")

    @classmethod
    def direct(cls) -> "ProximityMode":
        return cls("direct", 1)

    @classmethod
    def path(cls, max_depth: int = 2) -> "ProximityMode":
        return cls("path", max_depth)


class SocialGraph:
    """Undirected weighted user graph; weights in (0, 1], no self loops."""

    def __init__(self, vertices: set[int], weights: dict[tuple[int, int], float]):
        self.vertices = frozenset(vertices)
        self.weights: dict[tuple[int, int], float] = {}
        adj: dict[int, list[tuple[int, float]]] = defaultdict(list)
        for (u, v), w in weights.items():
            if u == v:
                raise ValueError(f"self loop on user {u}")
            if not (0.0 < w <= 1.0):
                raise ValueError(f"proximity must be in (0, 1], got {w} for ({u}, {v})")
            key = (u, v) if u < v else (v, u)
            if key in self.weights:
                continue
            self.weights[key] = w
            adj[u].append((v, w))
            adj[v].append((u, w))
        for u in adj:
            adj[u].sort()
        self.adjacency: dict[int, list[tuple[int, float]]] = dict(adj)

    def edge(self, u: int, v: int) -> float:
        if u == v:
            return 0.0
        key = (u, v) if u < v else (v, u)
        return self.weights.get(key, 0.0)

    def neighbors(self, u: int) -> list[tuple[int, float]]:
        return self.adjacency.get(u, [])

    def __contains__(self, u: int) -> bool:
        return u in self.vertices

    def edge_count(self) -> int:
        return len(self.weights)

    def iter_edges(self) -> Iterator[tuple[int, int, float]]:
        for (u, v) in sorted(self.weights):
            yield u, v, self.weights[(u, v)]


def build_dice_graph(train: Folksonomy, min_proximity: float = 0.0) -> SocialGraph:
    """Connect users who tagged at least one common item.

    The edge weight is the Dice coefficient 2|Iu & Iv| / (|Iu| + |Iv|)
    over the users' tagged-item sets; edges below ``min_proximity`` are
    omitted.
    """
    if not (0.0 <= min_proximity <= 1.0):
        raise ValueError(f"min_proximity must be in [0, 1], got {min_proximity}")
    item_users: dict[int, list[int]] = defaultdict(list)
    for (u, i) in train.posts:
        item_users[i].append(u)
    common: dict[tuple[int, int], int] = defaultdict(int)
    for users in item_users.values():
        users.sort()
        for a in range(len(users)):
            for b in range(a + 1, len(users)):
                common[(users[a], users[b])] += 1
    weights: dict[tuple[int, int], float] = {}
    for (u, v), shared in common.items():
        sigma = 2.0 * shared / (len(train.items_of_user[u]) + len(train.items_of_user[v]))
        if sigma >= min_proximity and sigma > 0.0:
            weights[(u, v)] = sigma
    return SocialGraph(set(train.users), weights)


def proximities_from(g: SocialGraph, u: int, mode: ProximityMode) -> dict[int, float]:
    """Best proximity from ``u`` to every reachable user under ``mode``.

    Path mode runs a hop-bounded best-product search. Because weights are
    <= 1, dropping a cycle never lowers a product, so the walk optimum
    equals the maximum over simple paths of length <= max_depth.
    """
    if mode.kind == "direct":
        return {v: w for v, w in g.neighbors(u)}
    best: dict[int, float] = {}
    frontier: dict[int, float] = {u: 1.0}
    for _ in range(mode.max_depth):
        nxt: dict[int, float] = {}
        for w, pw in frontier.items():
            for x, sigma in g.neighbors(w):
                cand = pw * sigma
                if cand > nxt.get(x, 0.0):
                    nxt[x] = cand
        for x, px in nxt.items():
            if x != u and px > best.get(x, 0.0):
                best[x] = px
        frontier = nxt
    return best


def proximity(g: SocialGraph, u: int, v: int, mode: ProximityMode = ProximityMode.direct()) -> float:
    """Proximity between two distinct users; 0 for unknown or unreachable."""
    if u == v:
        raise ValueError("proximity is defined between distinct users")
    if u not in g.vertices or v not in g.vertices:
        return 0.0
    if mode.kind == "direct":
        return g.edge(u, v)
    return proximities_from(g, u, mode).get(v, 0.0)


def edge_list_text(g: SocialGraph, names: list[str] | None = None,
                   delimiter: str = "\t") -> str:
    """The edge list as (user, user, proximity) rows."""
    rows = []
    for u, v, w in g.iter_edges():
        a = names[u] if names else str(u)
        b = names[v] if names else str(v)
        rows.append(f"{a}{delimiter}{b}{delimiter}{w:.6f}")
    return "\n".join(rows) + ("\n" if rows else "")


def export_edges(g: SocialGraph, path: str | Path, names: list[str] | None = None,
                 delimiter: str = "\t") -> int:
    """Write the edge list to a file; returns the edge count."""
    Path(path).write_text(edge_list_text(g, names, delimiter), encoding="utf-8")
    return g.edge_count()
