"""Dimensionless parameters and the user/relay point processes.

Users form a Cox process driven by the street length measure: given the
tessellation, each edge independently receives a Poisson number of users
placed uniformly along it.  Relays sit on vertices, each vertex being
equipped independently with probability ``p``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .geometry import Tessellation, Window

MODES = ("canyon", "nosha")


@dataclass(frozen=True)
class ParamPoint:
    """One point of the model's parameter space.

    ``U`` is the mean number of users per typical edge and ``H`` the mean
    number of hops needed to span a typical edge.
    """

    p: float
    U: float = 0.0
    H: float = 1.0
    gamma: float = 20.0
    window: Window = field(default_factory=lambda: Window(30.0))
    mode: str = "canyon"

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ParameterError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not (math.isfinite(self.p) and 0.0 <= self.p <= 1.0):
            out.append(f"p must lie in [0, 1], got {self.p!r}")
        if not (math.isfinite(self.U) and self.U >= 0.0):
            out.append(f"U must be finite and >= 0, got {self.U!r}")
        if not (math.isfinite(self.H) and self.H > 0.0):
            out.append(f"H must be finite and > 0, got {self.H!r}")
        if not (math.isfinite(self.gamma) and self.gamma > 0.0):
            out.append(f"gamma must be finite and > 0, got {self.gamma!r}")
        if self.mode not in MODES:
            out.append(f"mode must be one of {MODES}, got {self.mode!r}")
        return out

    def replace(self, **changes) -> "ParamPoint":
        values = {k: getattr(self, k) for k in ("p", "U", "H", "gamma", "window", "mode")}
        values.update(changes)
        return ParamPoint(**values)


@dataclass(frozen=True)
class PhysicalParams:
    lambda_S: float  # seeds per km^2
    lam: float       # users per km of street
    r: float         # communication radius, km


def derive_physical(point: ParamPoint) -> PhysicalParams:
    gamma = point.gamma
    return PhysicalParams(
        lambda_S=(gamma / 2.0) ** 2,
        lam=0.75 * point.U * gamma,
        r=4.0 / (3.0 * point.H * gamma),
    )


def dimensionless(gamma: float, lam: float, r: float) -> tuple[float, float]:
    """Inverse of :func:`derive_physical`: ``(U, H)`` from physical values."""
    return 4.0 * lam / (3.0 * gamma), 4.0 / (3.0 * r * gamma)


def mean_edge_length(gamma: float) -> float:
    return 4.0 / (3.0 * gamma)


@dataclass(frozen=True, eq=False)
class Users:
    edge: np.ndarray
    t: np.ndarray
    xy: np.ndarray

    def __len__(self):
        return len(self.edge)

    def subset(self, mask: np.ndarray) -> "Users":
        return Users(self.edge[mask], self.t[mask], self.xy[mask])


@dataclass(frozen=True, eq=False)
class RelayDraw:
    """Per-vertex uniforms; vertex ``v`` holds a relay at level ``p`` iff ``u[v] < p``."""

    uniforms: np.ndarray

    def vertices_at(self, p: float) -> np.ndarray:
        return np.flatnonzero(self.uniforms < p)


@dataclass(frozen=True, eq=False)
class AgentSet:
    """Users and relays of one realisation.

    Agent ids are global: users take ``0 .. n_users - 1`` and relays follow.
    """

    tess: Tessellation
    users: Users
    relay_vertex: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_relays(self) -> int:
        return len(self.relay_vertex)

    @property
    def n_agents(self) -> int:
        return self.n_users + self.n_relays

    @property
    def relay_ids(self) -> np.ndarray:
        return np.arange(self.n_users, self.n_agents)

    @property
    def xy(self) -> np.ndarray:
        return np.concatenate([self.users.xy, self.tess.vertices[self.relay_vertex]])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["agent_id", "kind", "edge_or_vertex_id", "x", "y"])
            for i in range(self.n_users):
                x, y = self.users.xy[i]
                w.writerow([i, "user", int(self.users.edge[i]), repr(float(x)), repr(float(y))])
            for j, v in enumerate(self.relay_vertex):
                x, y = self.tess.vertices[v]
                w.writerow([self.n_users + j, "relay", int(v), repr(float(x)), repr(float(y))])


def sample_users(tess: Tessellation, lam: float, rng: np.random.Generator) -> Users:
    if not (math.isfinite(lam) and lam >= 0):
        raise ParameterError(f"user intensity must be finite and >= 0, got {lam!r}")
    if lam == 0 or tess.n_edges == 0:
        return Users(np.empty(0, np.int64), np.empty(0), np.empty((0, 2)))
    counts = rng.poisson(lam * tess.edge_length)
    edge = np.repeat(np.arange(tess.n_edges), counts)
    t = rng.random(len(edge)) * tess.edge_length[edge]
    return Users(edge, t, tess.point_on_edge(edge, t))


def draw_relays(tess: Tessellation, rng: np.random.Generator) -> RelayDraw:
    return RelayDraw(rng.random(tess.n_vertices))


def sample_relays(tess: Tessellation, p: float, rng: np.random.Generator
                  ) -> tuple[np.ndarray, RelayDraw]:
    """Relay vertex ids at level ``p`` plus the draws that produced them."""
    if not (math.isfinite(p) and 0 <= p <= 1):
        raise ParameterError(f"p must lie in [0, 1], got {p!r}")
    draw = draw_relays(tess, rng)
    return draw.vertices_at(p), draw
