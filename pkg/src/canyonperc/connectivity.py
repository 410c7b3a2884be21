"""Connectivity graph, union-find components and window-crossing detection.

Under canyon shadowing two agents are linked iff they share a street and are
at most ``r`` apart.  On one straight street the agents are sorted by
arclength, and linking consecutive agents whose gap is ``<= r`` produces the
same components as checking every pair: any agent between two linked agents
is closer to both of them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .errors import IntegrityError, ParameterError
from .geometry import Tessellation, Window
from .pointprocess import AgentSet


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _union_pairs(parent, rank, a, b):
    merged = 0
    for k in range(a.shape[0]):
        ra = _find(parent, a[k])
        rb = _find(parent, b[k])
        if ra == rb:
            continue
        if rank[ra] < rank[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        if rank[ra] == rank[rb]:
            rank[ra] += 1
        merged += 1
    return merged


@njit(cache=True)
def _all_roots(parent):
    out = np.empty(parent.shape[0], dtype=np.int64)
    for i in range(parent.shape[0]):
        out[i] = _find(parent, i)
    return out


class Components:
    """Disjoint sets over agent ids ``0 .. n - 1`` (union by rank, path compression)."""

    def __init__(self, n: int):
        if n < 0:
            raise ValueError("size must be non-negative")
        self.parent = np.arange(n, dtype=np.int64)
        self.rank = np.zeros(n, dtype=np.int64)
        self.n_unions = 0

    def __len__(self):
        return len(self.parent)

    def find(self, x: int) -> int:
        return int(_find(self.parent, np.int64(x)))

    def union(self, a: int, b: int) -> bool:
        merged = self.union_many(np.array([a]), np.array([b]))
        return merged == 1

    def union_many(self, a: np.ndarray, b: np.ndarray) -> int:
        a = np.ascontiguousarray(a, dtype=np.int64)
        b = np.ascontiguousarray(b, dtype=np.int64)
        merged = int(_union_pairs(self.parent, self.rank, a, b))
        self.n_unions += merged
        return merged

    def labels(self) -> np.ndarray:
        """Canonical root of every element."""
        return _all_roots(self.parent)

    @property
    def n_components(self) -> int:
        return len(self.parent) - self.n_unions

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent_id", "component_id"])
            for i, root in enumerate(self.labels()):
                w.writerow([i, int(root)])


@dataclass(frozen=True, eq=False)
class EdgeOccupancy:
    """Agents per edge sorted by arclength.

    Entries of edge ``e`` are ``t[ptr[e]:ptr[e + 1]]`` / ``agent[ptr[e]:ptr[e + 1]]``.
    """

    ptr: np.ndarray
    t: np.ndarray
    agent: np.ndarray
    edge: np.ndarray

    def on_edge(self, e: int) -> list[tuple[float, int]]:
        s = slice(self.ptr[e], self.ptr[e + 1])
        return list(zip(self.t[s].tolist(), self.agent[s].tolist()))


@dataclass(frozen=True)
class CrossingResult:
    left_right: bool
    top_bottom: bool

    @property
    def percolates(self) -> bool:
        return self.left_right or self.top_bottom


def index_agents(tess: Tessellation, agents: AgentSet) -> EdgeOccupancy:
    users = agents.users
    if len(users) and (users.edge.min() < 0 or users.edge.max() >= tess.n_edges):
        raise IntegrityError("user on unknown edge")
    rv = agents.relay_vertex
    if len(rv) and (rv.min() < 0 or rv.max() >= tess.n_vertices):
        raise IntegrityError("relay on unknown vertex")

    deg = np.diff(tess.incidence_ptr)[rv]
    starts = tess.incidence_ptr[rv]
    offsets = np.arange(deg.sum()) - np.repeat(np.cumsum(deg) - deg, deg)
    r_edge = tess.incidence_idx[np.repeat(starts, deg) + offsets]
    r_vertex = np.repeat(rv, deg)
    r_agent = np.repeat(agents.relay_ids, deg)
    at_a = tess.edge_ends[r_edge, 0] == r_vertex
    r_t = np.where(at_a, 0.0, tess.edge_length[r_edge])

    edge = np.concatenate([users.edge, r_edge]).astype(np.int64)
    t = np.concatenate([users.t, r_t])
    agent = np.concatenate([np.arange(len(users)), r_agent]).astype(np.int64)
    order = np.lexsort((agent, t, edge))
    edge, t, agent = edge[order], t[order], agent[order]
    ptr = np.zeros(tess.n_edges + 1, dtype=np.int64)
    np.cumsum(np.bincount(edge, minlength=tess.n_edges), out=ptr[1:])
    return EdgeOccupancy(ptr, t, agent, edge)


def build_components_canyon(occ: EdgeOccupancy, r: float, n_agents: int | None = None
                            ) -> Components:
    """Link consecutive agents of each street whose arclength gap is ``<= r``.

    ``r = inf`` links every pair of agents sharing a street.
    """
    if not r > 0:
        raise ParameterError(f"r must be positive, got {r!r}")
    if n_agents is None:
        n_agents = int(occ.agent.max()) + 1 if len(occ.agent) else 0
    comp = Components(n_agents)
    same = occ.edge[1:] == occ.edge[:-1]
    if not math.isinf(r):
        same &= (occ.t[1:] - occ.t[:-1]) <= r
    idx = np.flatnonzero(same)
    comp.union_many(occ.agent[idx], occ.agent[idx + 1])
    return comp


@njit(cache=True)
def _grid_pairs(xy, order, cell_x, cell_y, keys, ncy, r2):
    # neighbour cells visited once per unordered pair: self, +y, +x-1..+x+1
    n = order.shape[0]
    buf_a = np.empty(16, dtype=np.int64)
    buf_b = np.empty(16, dtype=np.int64)
    m = 0
    for s in range(n):
        i = order[s]
        cx = cell_x[i]
        cy = cell_y[i]
        for dx, dy in ((0, 0), (0, 1), (1, -1), (1, 0), (1, 1)):
            key = (cx + dx) * ncy + (cy + dy)
            lo = np.searchsorted(keys, key, side="left")
            hi = np.searchsorted(keys, key, side="right")
            for u in range(lo, hi):
                j = order[u]
                if dx == 0 and dy == 0 and u <= s:
                    continue
                ddx = xy[i, 0] - xy[j, 0]
                ddy = xy[i, 1] - xy[j, 1]
                if ddx * ddx + ddy * ddy <= r2:
                    if m == buf_a.shape[0]:
                        buf_a = np.concatenate((buf_a, np.empty(m, dtype=np.int64)))
                        buf_b = np.concatenate((buf_b, np.empty(m, dtype=np.int64)))
                    buf_a[m] = i
                    buf_b[m] = j
                    m += 1
    return buf_a[:m], buf_b[:m]


def gilbert_pairs(xy: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    """All pairs ``i, j`` with ``|xy[i] - xy[j]| <= r`` via a uniform grid of cell size ``r``."""
    xy = np.ascontiguousarray(xy, dtype=float)
    if len(xy) < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    lo = xy.min(axis=0)
    cells = np.floor((xy - lo) / r).astype(np.int64)
    ncy = int(cells[:, 1].max()) + 3
    cell_x = cells[:, 0] + 1
    cell_y = cells[:, 1] + 1
    key = cell_x * ncy + cell_y
    order = np.argsort(key, kind="stable").astype(np.int64)
    return _grid_pairs(xy, order, cell_x, cell_y, key[order], ncy, r * r)


def build_components_nosha(agents: AgentSet, r: float) -> Components:
    """Gilbert graph on the users: linked iff Euclidean distance ``<= r``.

    Relays take no part; they remain singletons in the returned structure.
    """
    if not r > 0:
        raise ParameterError(f"r must be positive, got {r!r}")
    comp = Components(agents.n_agents)
    a, b = gilbert_pairs(agents.users.xy, r)
    comp.union_many(a, b)
    return comp


def detect_crossing(comp: Components, xy: np.ndarray, window: Window, strip: float,
                    active: np.ndarray | None = None) -> CrossingResult:
    """Does one component touch both strips of width ``strip`` along opposite sides?

    ``active`` restricts the test to a subset of agents (default: all).
    """
    if not strip > 0:
        raise ParameterError(f"strip must be positive, got {strip!r}")
    if len(xy) == 0:
        return CrossingResult(False, False)
    labels = comp.labels()
    if active is not None:
        labels, xy = labels[active], xy[active]
    side = window.side_km

    def spans(coord):
        low = labels[coord <= strip]
        high = labels[coord >= side - strip]
        return bool(np.intersect1d(low, high).size)

    return CrossingResult(spans(xy[:, 0]), spans(xy[:, 1]))
