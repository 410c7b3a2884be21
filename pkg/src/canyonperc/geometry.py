"""Poisson-Voronoi street systems clipped to a square observation window.

Seeds are drawn on the window enlarged by a guard margin, the Voronoi diagram
is obtained as the dual of the Delaunay triangulation, and the diagram is then
clipped to ``[0, side] x [0, side]``.  All lengths are in km.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError

from .errors import GeometryError, ParameterError

BOUNDARY = -1
"""Endpoint marker for an edge end created by clipping (no vertex id)."""

MERGE_TOL = 1e-9
PREDICATE_TOL = 1e-12


@dataclass(frozen=True)
class Window:
    side_km: float

    def __post_init__(self):
        if not (math.isfinite(self.side_km) and self.side_km > 0):
            raise ParameterError(f"window side must be positive, got {self.side_km!r}")

    @property
    def area(self) -> float:
        return self.side_km * self.side_km


def default_margin(lambda_S: float) -> float:
    """Guard margin of about three typical inter-seed spacings."""
    return 3.0 / math.sqrt(lambda_S)


@dataclass(frozen=True, eq=False)
class VoronoiDiagram:
    """Unclipped Voronoi diagram.

    ``edges[k] = (i, j)`` joins vertices ``i`` and ``j``; a ray has ``j == -1``
    and starts at ``vertices[i]`` heading along ``directions[k]``.
    ``ridge_points[k]`` holds the two seeds whose cells edge ``k`` separates.
    """

    vertices: np.ndarray
    edges: np.ndarray
    directions: np.ndarray
    ridge_points: np.ndarray

    @property
    def is_ray(self) -> np.ndarray:
        return self.edges[:, 1] < 0


@dataclass(frozen=True, eq=False)
class Tessellation:
    """Clipped planar tessellation.

    Attributes
    ----------
    vertices : (nv, 2) array
        Coordinates of the vertices lying inside the window.
    edge_ends : (ne, 2) int array
        Vertex id of each edge endpoint, or ``BOUNDARY`` for a clipped end.
    edge_coords : (ne, 2, 2) array
        ``edge_coords[e, 0]`` is endpoint a, ``edge_coords[e, 1]`` endpoint b.
    edge_length : (ne,) array
    incidence_ptr, incidence_idx : int arrays
        CSR incidence lists: the edges at vertex ``v`` are
        ``incidence_idx[incidence_ptr[v]:incidence_ptr[v + 1]]``.
    """

    window: Window
    vertices: np.ndarray
    edge_ends: np.ndarray
    edge_coords: np.ndarray
    edge_length: np.ndarray
    incidence_ptr: np.ndarray
    incidence_idx: np.ndarray

    @classmethod
    def from_edges(cls, window: Window, vertices, edge_ends, edge_coords) -> "Tessellation":
        """Assemble a tessellation from explicit edges; lengths and incidence are derived."""
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        ends = np.asarray(edge_ends, dtype=np.int64).reshape(-1, 2)
        coords = np.asarray(edge_coords, dtype=float).reshape(-1, 2, 2)
        length = np.linalg.norm(coords[:, 1] - coords[:, 0], axis=1)
        ptr, inc = _incidence(ends, len(vertices))
        return cls(window, vertices, ends, coords, length, ptr, inc)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edge_length)

    def incident_edges(self, v: int) -> np.ndarray:
        return self.incidence_idx[self.incidence_ptr[v]:self.incidence_ptr[v + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.incidence_ptr)

    @property
    def interior_edges(self) -> np.ndarray:
        """Mask of edges whose two endpoints are both vertices."""
        return (self.edge_ends >= 0).all(axis=1)

    def point_on_edge(self, edge: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Coordinates at arclength ``t`` from endpoint a along ``edge``."""
        a = self.edge_coords[edge, 0]
        b = self.edge_coords[edge, 1]
        length = self.edge_length[edge]
        frac = np.divide(t, length, out=np.zeros_like(t, dtype=float), where=length > 0)
        return a + (b - a) * frac[:, None]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge_id", "x1", "y1", "x2", "y2", "length",
                        "boundary_flag_a", "boundary_flag_b"])
            for e in range(self.n_edges):
                (x1, y1), (x2, y2) = self.edge_coords[e]
                w.writerow([e, repr(float(x1)), repr(float(y1)), repr(float(x2)),
                            repr(float(y2)), repr(float(self.edge_length[e])),
                            int(self.edge_ends[e, 0] == BOUNDARY),
                            int(self.edge_ends[e, 1] == BOUNDARY)])


@dataclass(frozen=True)
class TessStats:
    gamma_emp: float
    mean_edge_length: float
    vertex_density: float
    edge_density: float


def generate_seeds(lambda_S: float, window: Window, margin: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson points on ``[-margin, side + margin]^2``."""
    if not (math.isfinite(lambda_S) and lambda_S > 0):
        raise ParameterError(f"lambda_S must be positive, got {lambda_S!r}")
    if not (math.isfinite(margin) and margin >= 0):
        raise ParameterError(f"margin must be nonnegative, got {margin!r}")
    lo, hi = -margin, window.side_km + margin
    n = rng.poisson(lambda_S * (hi - lo) ** 2)
    return rng.uniform(lo, hi, size=(n, 2))


def _circumcenters(pts: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    a = pts[simplices[:, 0]]
    b = pts[simplices[:, 1]] - a
    c = pts[simplices[:, 2]] - a
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    if np.any(np.abs(d) <= PREDICATE_TOL * PREDICATE_TOL):
        raise GeometryError("degenerate (flat) Delaunay triangle")
    b2 = (b * b).sum(axis=1)
    c2 = (c * c).sum(axis=1)
    ux = (c[:, 1] * b2 - b[:, 1] * c2) / d
    uy = (b[:, 0] * c2 - c[:, 0] * b2) / d
    return a + np.column_stack([ux, uy])


def build_voronoi(seeds: np.ndarray) -> VoronoiDiagram:
    """Voronoi diagram of ``seeds`` via the Delaunay dual.

    Vertices closer than ``MERGE_TOL`` (cocircular seeds) are merged.
    """
    pts = np.asarray(seeds, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise GeometryError("need at least 3 seeds in the plane")
    if len(np.unique(pts, axis=0)) < len(pts):
        raise GeometryError("duplicate seeds")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise GeometryError(f"Delaunay triangulation failed: {exc}") from None
    simplices = tri.simplices
    neighbors = tri.neighbors
    centers = _circumcenters(pts, simplices)

    nt = len(simplices)
    own = np.repeat(np.arange(nt), 3)
    opp = np.tile(np.arange(3), nt)
    nbr = neighbors.ravel()

    seg = nbr > own
    seg_edges = np.column_stack([own[seg], nbr[seg]])
    ridge = np.column_stack([simplices[own, (opp + 1) % 3], simplices[own, (opp + 2) % 3]])

    ray = nbr < 0
    t_ray, k_ray = own[ray], opp[ray]
    p = pts[simplices[t_ray, (k_ray + 1) % 3]]
    q = pts[simplices[t_ray, (k_ray + 2) % 3]]
    far = pts[simplices[t_ray, k_ray]]
    normal = np.column_stack([q[:, 1] - p[:, 1], p[:, 0] - q[:, 0]])
    flip = ((far - p) * normal).sum(axis=1) > 0
    normal[flip] *= -1.0
    normal /= np.linalg.norm(normal, axis=1)[:, None]
    ray_edges = np.column_stack([t_ray, np.full(len(t_ray), -1)])

    edges = np.concatenate([seg_edges, ray_edges]).astype(np.int64)
    directions = np.concatenate([np.zeros((len(seg_edges), 2)), normal])
    ridges = np.concatenate([ridge[seg], ridge[ray]]).astype(np.int64)
    return _merge_close_vertices(centers, edges, directions, ridges)


def _merge_close_vertices(vertices, edges, directions, ridges) -> VoronoiDiagram:
    is_seg = edges[:, 1] >= 0
    seg_len = np.full(len(edges), np.inf)
    seg_len[is_seg] = np.linalg.norm(
        vertices[edges[is_seg, 0]] - vertices[edges[is_seg, 1]], axis=1)
    short = seg_len < MERGE_TOL
    if not short.any():
        return VoronoiDiagram(vertices, edges, directions, ridges)

    nv = len(vertices)
    graph = coo_matrix((np.ones(short.sum()), (edges[short, 0], edges[short, 1])),
                       shape=(nv, nv))
    n_groups, label = connected_components(graph, directed=False)
    merged = np.zeros((n_groups, 2))
    np.add.at(merged, label, vertices)
    merged /= np.bincount(label, minlength=n_groups)[:, None]

    keep = ~short
    new_edges = edges[keep].copy()
    new_edges[:, 0] = label[new_edges[:, 0]]
    seg = new_edges[:, 1] >= 0
    new_edges[seg, 1] = label[new_edges[seg, 1]]
    return VoronoiDiagram(merged, new_edges, directions[keep], ridges[keep])


def clip_to_window(vor: VoronoiDiagram, window: Window) -> Tessellation:
    """Intersect every Voronoi edge with the window (Liang-Barsky)."""
    side = float(window.side_km)
    verts = vor.vertices
    inside = ((verts >= 0.0) & (verts <= side)).all(axis=1)

    start = verts[vor.edges[:, 0]]
    is_ray = vor.is_ray
    end = np.empty_like(start)
    end[~is_ray] = verts[vor.edges[~is_ray, 1]]
    reach = 4.0 * side + np.abs(start[is_ray]).sum(axis=1) + 1.0
    end[is_ray] = start[is_ray] + vor.directions[is_ray] * reach[:, None]
    d = end - start

    # constraints: -dx*t <= x0, dx*t <= side - x0, same for y
    pk = np.column_stack([-d[:, 0], d[:, 0], -d[:, 1], d[:, 1]])
    qk = np.column_stack([start[:, 0], side - start[:, 0], start[:, 1], side - start[:, 1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = qk / pk
    parallel = pk == 0
    rejected = (parallel & (qk < 0)).any(axis=1)
    entering = np.where(pk < 0, ratio, -np.inf)
    leaving = np.where(pk > 0, ratio, np.inf)
    t0 = np.maximum(entering.max(axis=1), 0.0)
    t1 = np.minimum(leaving.min(axis=1), 1.0)
    enter_side = entering.argmax(axis=1)
    leave_side = leaving.argmin(axis=1)

    start_in = inside[vor.edges[:, 0]]
    end_in = np.zeros(len(start), dtype=bool)
    end_in[~is_ray] = inside[vor.edges[~is_ray, 1]]
    t0[start_in] = 0.0
    t1[end_in] = 1.0

    seg_norm = np.linalg.norm(d, axis=1)
    keep = ~rejected & ((t1 - t0) * seg_norm > PREDICATE_TOL)
    keep |= start_in & end_in

    a_xy = start + d * t0[:, None]
    b_xy = start + d * t1[:, None]
    _snap(a_xy, ~start_in, enter_side, side)
    _snap(b_xy, ~end_in, leave_side, side)
    # unclipped endpoints keep their exact vertex coordinates
    a_xy[start_in] = start[start_in]
    b_xy[end_in] = end[end_in]

    idx = np.flatnonzero(keep)
    used = np.zeros(len(verts), dtype=bool)
    used[vor.edges[idx[start_in[idx]], 0]] = True
    used[vor.edges[idx[end_in[idx]], 1]] = True
    new_id = np.full(len(verts), BOUNDARY, dtype=np.int64)
    new_id[used] = np.arange(used.sum())

    ends = np.full((len(idx), 2), BOUNDARY, dtype=np.int64)
    ends[start_in[idx], 0] = new_id[vor.edges[idx[start_in[idx]], 0]]
    ends[end_in[idx], 1] = new_id[vor.edges[idx[end_in[idx]], 1]]
    coords = np.stack([a_xy[idx], b_xy[idx]], axis=1)
    np.clip(coords, 0.0, side, out=coords)
    length = np.linalg.norm(coords[:, 1] - coords[:, 0], axis=1)

    ptr, inc = _incidence(ends, int(used.sum()))
    return Tessellation(window, verts[used].copy(), ends, coords, length, ptr, inc)


def _snap(xy: np.ndarray, clipped: np.ndarray, which: np.ndarray, side: float) -> None:
    # boundary constraint k: 0 -> x=0, 1 -> x=side, 2 -> y=0, 3 -> y=side
    for k, axis, val in ((0, 0, 0.0), (1, 0, side), (2, 1, 0.0), (3, 1, side)):
        m = clipped & (which == k)
        xy[m, axis] = val


def _incidence(ends: np.ndarray, nv: int) -> tuple[np.ndarray, np.ndarray]:
    edge_id = np.repeat(np.arange(len(ends)), 2)
    vert = ends.ravel()
    ok = vert >= 0
    vert, edge_id = vert[ok], edge_id[ok]
    order = np.lexsort((edge_id, vert))
    counts = np.bincount(vert, minlength=nv)
    ptr = np.zeros(nv + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, edge_id[order].astype(np.int64)


def generate_tessellation(lambda_S: float, window: Window, rng: np.random.Generator,
                          margin: float | None = None) -> Tessellation:
    if margin is None:
        if not (math.isfinite(lambda_S) and lambda_S > 0):
            raise ParameterError(f"lambda_S must be positive, got {lambda_S!r}")
        margin = default_margin(lambda_S)
    seeds = generate_seeds(lambda_S, window, margin, rng)
    return clip_to_window(build_voronoi(seeds), window)


def tessellation_stats(tess: Tessellation, window: Window | None = None) -> TessStats:
    window = window or tess.window
    area = window.area
    interior = tess.interior_edges
    n_int = int(interior.sum())
    mean_len = float(tess.edge_length[interior].mean()) if n_int else 0.0
    return TessStats(
        gamma_emp=float(tess.edge_length.sum()) / area,
        mean_edge_length=mean_len,
        vertex_density=tess.n_vertices / area,
        edge_density=n_int / area,
    )
