"""Replications and parameter sweeps with deterministic seeding.

Every replication draws its randomness from a child seed derived from the
master seed with :class:`numpy.random.SeedSequence`, so results do not depend
on execution order or on the number of worker processes.

Two sweep flavours are offered.  An *independent* sweep simulates a fresh
realisation for every (grid value, replication) pair.  A *coupled* sweep
simulates one realisation per replication index and evaluates it at every
grid value: relays are switched on by thresholding retained per-vertex
uniforms and users are obtained by independent thinning of a process sampled
at the largest requested ``U``.  Each row then has exactly the marginal law of
an independent run, and the percolation indicator of a replication is
monotone along the grid.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .connectivity import (
    CrossingResult,
    build_components_canyon,
    build_components_nosha,
    detect_crossing,
    index_agents,
)
from .errors import ParameterError, SchemaError
from .geometry import Tessellation, Window, generate_tessellation
from .pointprocess import (
    AgentSet,
    ParamPoint,
    RelayDraw,
    Users,
    derive_physical,
    draw_relays,
    mean_edge_length,
    sample_users,
)

log = logging.getLogger(__name__)

AXES = ("p", "U", "H")
CSV_COLUMNS = ["axis", "value", "p", "U", "H", "gamma", "window_km", "mode",
               "site_perc", "n_reps", "n_percolating", "proportion"]


def child_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def value_key(value: float) -> int:
    return int(np.float64(value).view(np.uint64))


@dataclass(frozen=True)
class ReplicationRecord:
    replication_index: int
    seed: int
    percolates: bool
    n_users: int
    n_relays: int
    n_components: int
    wall_time_ms: float
    left_right: bool = False
    top_bottom: bool = False


@dataclass(frozen=True, eq=False)
class Realization:
    """Random environment of one replication, evaluable at many parameter values."""

    tess: Tessellation
    relays: RelayDraw
    users: Users
    user_marks: np.ndarray
    U_max: float

    def agents(self, p: float, U: float, with_relays: bool = True) -> AgentSet:
        users = self.users
        if U < self.U_max:
            users = users.subset(self.user_marks < U / self.U_max)
        relay_vertex = self.relays.vertices_at(p) if with_relays else np.empty(0, np.int64)
        return AgentSet(self.tess, users, relay_vertex)


def sample_realization(point: ParamPoint, rng: np.random.Generator,
                       margin: float | None = None) -> Realization:
    """Tessellation, relay draws and users at ``point.U``, in that RNG order."""
    phys = derive_physical(point)
    tess = generate_tessellation(phys.lambda_S, point.window, rng, margin)
    relays = draw_relays(tess, rng)
    users = sample_users(tess, phys.lam, rng)
    marks = rng.random(len(users))
    return Realization(tess, relays, users, marks, point.U)


def evaluate(real: Realization, point: ParamPoint, site_perc: bool = False,
             strip_factor: float = 1.0) -> tuple[CrossingResult, AgentSet, int]:
    """Build the connectivity graph at ``point`` and test for a window crossing.

    Returns the crossing, the agent set and the number of components.
    """
    r = derive_physical(point).r
    if point.mode == "nosha":
        agents = real.agents(point.p, point.U, with_relays=False)
        comp = build_components_nosha(agents, r)
        strip = strip_factor * r
    else:
        agents = real.agents(point.p, point.U)
        occ = index_agents(real.tess, agents)
        if site_perc:
            comp = build_components_canyon(occ, math.inf, agents.n_agents)
            strip = strip_factor * mean_edge_length(point.gamma)
        else:
            comp = build_components_canyon(occ, r, agents.n_agents)
            strip = strip_factor * r
    crossing = detect_crossing(comp, agents.xy, point.window, strip)
    return crossing, agents, comp.n_components


def check_point(point: ParamPoint, site_perc: bool) -> None:
    if site_perc and point.U != 0:
        raise ParameterError("site percolation mode requires U = 0")
    if site_perc and point.mode != "canyon":
        raise ParameterError("site percolation mode requires mode = canyon")


def _warn_nosha(point: ParamPoint) -> None:
    if point.mode == "nosha" and point.p < 1:
        warnings.warn("p is ignored in nosha mode (users only)", stacklevel=3)


def _record(index, seed, crossing, agents, n_comp, t0) -> ReplicationRecord:
    return ReplicationRecord(
        replication_index=index,
        seed=seed,
        percolates=crossing.percolates,
        n_users=agents.n_users,
        n_relays=agents.n_relays,
        n_components=n_comp,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        left_right=crossing.left_right,
        top_bottom=crossing.top_bottom,
    )


def run_replication(point: ParamPoint, site_perc: bool = False, seed: int = 0, *,
                    index: int = 0, margin: float | None = None,
                    strip_factor: float = 1.0) -> ReplicationRecord:
    check_point(point, site_perc)
    t0 = time.perf_counter()
    real = sample_realization(point, np.random.default_rng(seed), margin)
    crossing, agents, n_comp = evaluate(real, point, site_perc, strip_factor)
    return _record(index, seed, crossing, agents, n_comp, t0)


def _run_coupled(points: Sequence[ParamPoint], site_perc: bool, seed: int, index: int,
                 margin: float | None, strip_factor: float) -> list[ReplicationRecord]:
    t0 = time.perf_counter()
    top = max(points, key=lambda q: q.U)
    real = sample_realization(top, np.random.default_rng(seed), margin)
    out = []
    for point in points:
        crossing, agents, n_comp = evaluate(real, point, site_perc, strip_factor)
        out.append(_record(index, seed, crossing, agents, n_comp, t0))
    return out


def _star_replication(args):
    return run_replication(*args[:3], index=args[3], margin=args[4], strip_factor=args[5])


def _star_coupled(args):
    return _run_coupled(*args)


def _map(fn, tasks: list, threads: int | None) -> list:
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


@dataclass
class SweepRow:
    axis: str
    value: float
    point: ParamPoint
    site_perc: bool
    n_reps: int
    n_percolating: int
    records: list[ReplicationRecord] = field(default_factory=list, repr=False)

    @property
    def proportion(self) -> float:
        return self.n_percolating / self.n_reps

    @classmethod
    def from_records(cls, axis, point, site_perc, records) -> "SweepRow":
        records = sorted(records, key=lambda rec: rec.replication_index)
        return cls(axis, float(getattr(point, axis)), point, site_perc, len(records),
                   sum(rec.percolates for rec in records), records)

    def csv_fields(self) -> list[str]:
        pt = self.point
        return [self.axis, repr(float(self.value)), repr(float(pt.p)), repr(float(pt.U)),
                repr(float(pt.H)), repr(float(pt.gamma)), repr(float(pt.window.side_km)),
                pt.mode, str(int(self.site_perc)), str(self.n_reps), str(self.n_percolating),
                repr(self.proportion)]


def estimate_proportion(point: ParamPoint, site_perc: bool = False, n_reps: int = 100,
                        master_seed: int = 0, *, axis: str = "p", threads: int | None = 1,
                        margin: float | None = None, strip_factor: float = 1.0) -> SweepRow:
    """Fraction of ``n_reps`` independent replications that percolate at ``point``.

    Replication ``i`` is seeded from ``(master_seed, value of axis, i)``.
    """
    if n_reps < 1:
        raise ParameterError(f"n_reps must be >= 1, got {n_reps}")
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {AXES}, got {axis!r}")
    check_point(point, site_perc)
    _warn_nosha(point)
    key = value_key(getattr(point, axis))
    tasks = [(point, site_perc, child_seed(master_seed, key, i), i, margin, strip_factor)
             for i in range(n_reps)]
    records = _map(_star_replication, tasks, threads)
    return SweepRow.from_records(axis, point, site_perc, records)


@dataclass
class SweepResult:
    axis: str
    rows: list[SweepRow]
    master_seed: int
    config: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return np.array([row.value for row in self.rows])

    @property
    def proportions(self) -> np.ndarray:
        return np.array([row.proportion for row in self.rows])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                w.writerow(row.csv_fields())

    def sidecar(self) -> dict:
        return {
            "tool": "canyonperc",
            "tool_version": __version__,
            "axis": self.axis,
            "master_seed": self.master_seed,
            "n_rows": len(self.rows),
            "runtime_s": self.runtime_s,
            "config": self.config,
        }

    def write(self, csv_path: str | Path, extra: dict | None = None) -> Path:
        """Write the CSV and its JSON sidecar (same stem, ``.json``); return the sidecar path."""
        csv_path = Path(csv_path)
        self.to_csv(csv_path)
        side = csv_path.with_suffix(".json")
        payload = self.sidecar()
        if extra:
            payload.update(extra)
        side.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return side


def read_sweep_csv(path: str | Path) -> SweepResult:
    """Load rows written by :meth:`SweepResult.to_csv`."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise SchemaError(f"{path}: unexpected header {header!r}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_COLUMNS):
                raise SchemaError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields")
            d = dict(zip(CSV_COLUMNS, rec))
            try:
                point = ParamPoint(p=float(d["p"]), U=float(d["U"]), H=float(d["H"]),
                                   gamma=float(d["gamma"]),
                                   window=Window(float(d["window_km"])), mode=d["mode"])
                n_reps, n_perc = int(d["n_reps"]), int(d["n_percolating"])
                row = SweepRow(d["axis"], float(d["value"]), point, d["site_perc"] == "1",
                               n_reps, n_perc)
            except (ValueError, ParameterError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            if d["axis"] not in AXES or not 0 <= n_perc <= n_reps or n_reps < 1:
                raise SchemaError(f"{path}:{lineno}: inconsistent row")
            rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no rows")
    axes = {row.axis for row in rows}
    if len(axes) != 1:
        raise SchemaError(f"{path}: mixed axes {sorted(axes)}")
    return SweepResult(axes.pop(), rows, master_seed=-1)


def run_sweep(axis: str, grid: Sequence[float], fixed: ParamPoint, site_perc: bool = False,
              n_reps: int = 100, master_seed: int = 0, *, coupled: bool = False,
              threads: int | None = 1, margin: float | None = None,
              strip_factor: float = 1.0) -> SweepResult:
    """One :class:`SweepRow` per grid value, the other parameters taken from ``fixed``."""
    if axis not in AXES:
        raise ParameterError(f"axis must be one of {AXES}, got {axis!r}")
    grid = [float(v) for v in grid]
    if not grid:
        raise ParameterError("grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("grid must be strictly increasing")
    if n_reps < 1:
        raise ParameterError(f"n_reps must be >= 1, got {n_reps}")
    points = [fixed.replace(**{axis: v}) for v in grid]
    for pt in points:
        check_point(pt, site_perc)
    _warn_nosha(fixed)

    t0 = time.perf_counter()
    if coupled:
        tasks = [(points, site_perc, child_seed(master_seed, i), i, margin, strip_factor)
                 for i in range(n_reps)]
        per_rep = _map(_star_coupled, tasks, threads)
        rows = [SweepRow.from_records(axis, pt, site_perc, [recs[k] for recs in per_rep])
                for k, pt in enumerate(points)]
    else:
        tasks = [(pt, site_perc, child_seed(master_seed, value_key(v), i), i, margin,
                  strip_factor)
                 for v, pt in zip(grid, points) for i in range(n_reps)]
        flat = _map(_star_replication, tasks, threads)
        rows = [SweepRow.from_records(axis, pt, site_perc, flat[k * n_reps:(k + 1) * n_reps])
                for k, pt in enumerate(points)]
    runtime = time.perf_counter() - t0
    log.info("sweep over %s: %d rows x %d reps in %.1f s", axis, len(rows), n_reps, runtime)

    config = {
        "axis": axis,
        "grid": grid,
        "fixed": {"p": fixed.p, "U": fixed.U, "H": fixed.H, "gamma": fixed.gamma,
                  "window_km": fixed.window.side_km, "mode": fixed.mode},
        "site_perc": site_perc,
        "n_reps": n_reps,
        "coupled": coupled,
        "margin_km": margin,
        "strip_factor": strip_factor,
    }
    return SweepResult(axis, rows, master_seed, config, runtime)


def records_table(rows: Sequence[SweepRow]) -> list[dict]:
    return [dict(asdict(rec), value=row.value) for row in rows for rec in row.records]
