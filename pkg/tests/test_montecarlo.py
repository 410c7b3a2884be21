import math

import numpy as np
import pytest
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from canyonperc.errors import ParameterError, SchemaError
from canyonperc.geometry import Window
from canyonperc.montecarlo import (
    CSV_COLUMNS,
    child_seed,
    estimate_proportion,
    evaluate,
    read_sweep_csv,
    run_replication,
    run_sweep,
    sample_realization,
)
from canyonperc.pointprocess import ParamPoint, mean_edge_length


def site_point(p, side=30.0):
    return ParamPoint(p=p, U=0.0, H=1.0, gamma=20.0, window=Window(side))


def vertex_graph_crossing(tess, open_vertices, strip):
    """Independent crossing test on the graph of open vertices joined by streets."""
    nv = tess.n_vertices
    is_open = np.zeros(nv, dtype=bool)
    is_open[open_vertices] = True
    a, b = tess.edge_ends.T
    inner = (a >= 0) & (b >= 0)
    a, b = a[inner], b[inner]
    keep = is_open[a] & is_open[b]
    g = coo_matrix((np.ones(keep.sum()), (a[keep], b[keep])), shape=(nv, nv))
    _, labels = connected_components(g, directed=False)
    xy, side = tess.vertices, tess.window.side_km
    labels = labels[is_open]
    xy = xy[is_open]

    def spans(c):
        return bool(set(labels[c <= strip]) & set(labels[c >= side - strip]))

    return spans(xy[:, 0]) or spans(xy[:, 1])


class TestReplication:
    def test_nothing_to_connect(self):
        rec = run_replication(ParamPoint(p=0.0, U=0.0, H=0.8, window=Window(3.0)), seed=1)
        assert rec.n_users == rec.n_relays == 0 and not rec.percolates

    def test_deterministic(self):
        pt = ParamPoint(p=0.7, U=1.0, H=0.8, window=Window(3.0))
        a = run_replication(pt, seed=42)
        b = run_replication(pt, seed=42)
        fields = ("percolates", "n_users", "n_relays", "n_components", "left_right")
        assert [getattr(a, f) for f in fields] == [getattr(b, f) for f in fields]

    def test_site_perc_requires_no_users(self):
        with pytest.raises(ParameterError):
            run_replication(ParamPoint(p=0.7, U=1.0), site_perc=True)

    def test_site_perc_matches_vertex_graph(self):
        for seed in range(6):
            pt = site_point(0.72, side=5.0)
            real = sample_realization(pt, np.random.default_rng(seed))
            crossing, agents, _ = evaluate(real, pt, site_perc=True)
            ref = vertex_graph_crossing(real.tess, agents.relay_vertex,
                                        mean_edge_length(20.0))
            assert crossing.percolates == ref

    @pytest.mark.slow
    def test_full_vertex_graph_percolates(self):
        ok = 0
        for i in range(100):
            pt = site_point(1.0)
            real = sample_realization(pt, np.random.default_rng(child_seed(3, i)))
            crossing, agents, _ = evaluate(real, pt, site_perc=True)
            assert crossing.percolates == vertex_graph_crossing(
                real.tess, agents.relay_vertex, mean_edge_length(20.0))
            ok += crossing.percolates
        assert ok >= 99


class TestEstimateProportion:
    def test_single_replication(self):
        row = estimate_proportion(site_point(0.7, 3.0), site_perc=True, n_reps=1)
        assert row.proportion in (0.0, 1.0)

    def test_bad_reps(self):
        with pytest.raises(ParameterError):
            estimate_proportion(site_point(0.7, 3.0), site_perc=True, n_reps=0)

    def test_binomial_consistency(self):
        row = estimate_proportion(site_point(0.72, 4.0), site_perc=True, n_reps=12)
        assert row.n_percolating == sum(r.percolates for r in row.records)
        assert [r.replication_index for r in row.records] == list(range(12))

    @pytest.mark.slow
    @pytest.mark.parametrize("p, check", [(0.6, lambda x: x <= 0.05), (0.85, lambda x: x >= 0.95)])
    def test_far_from_threshold(self, p, check):
        row = estimate_proportion(site_point(p), site_perc=True, n_reps=100, master_seed=5)
        assert check(row.proportion)


class TestSweep:
    def test_shape_and_csv_round_trip(self, tmp_path):
        res = run_sweep("p", [0.6, 0.7, 0.8], site_point(0.5, 3.0), site_perc=True,
                        n_reps=3, master_seed=2)
        assert len(res.rows) == 3 and list(res.values) == [0.6, 0.7, 0.8]
        path = tmp_path / "s.csv"
        res.write(path)
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        back = read_sweep_csv(path)
        np.testing.assert_array_equal(back.proportions, res.proportions)
        assert back.rows[1].point == res.rows[1].point
        assert (tmp_path / "s.json").exists()

    @pytest.mark.parametrize("grid", [[], [0.7, 0.6], [0.5, 1.5]])
    def test_bad_grids(self, grid):
        with pytest.raises(ParameterError):
            run_sweep("p", grid, site_point(0.5, 3.0), site_perc=True, n_reps=2)

    def test_bad_axis(self):
        with pytest.raises(ParameterError):
            run_sweep("gamma", [1.0], site_point(0.5, 3.0), n_reps=2)

    def test_coupled_monotone_in_p(self):
        grid = np.round(np.linspace(0.55, 0.9, 15), 6)
        res = run_sweep("p", grid, site_point(0.5, 5.0), site_perc=True, n_reps=20,
                        master_seed=9, coupled=True)
        flags = np.array([[rec.percolates for rec in row.records] for row in res.rows])
        assert np.all(np.diff(flags.astype(int), axis=0) >= 0)
        assert flags[0].sum() < flags[-1].sum()

    def test_coupled_monotone_in_U_and_H(self):
        base = ParamPoint(p=0.8, U=0.0, H=1.0, window=Window(3.0))
        res = run_sweep("U", [0.0, 1.0, 2.0, 4.0], base, n_reps=8, coupled=True)
        flags = np.array([[rec.percolates for rec in row.records] for row in res.rows])
        assert np.all(np.diff(flags.astype(int), axis=0) >= 0)
        users = np.array([[rec.n_users for rec in row.records] for row in res.rows])
        assert np.all(np.diff(users, axis=0) >= 0)
        res = run_sweep("H", [0.6, 0.8, 1.0], base.replace(p=1.0), n_reps=8, coupled=True)
        flags = np.array([[rec.percolates for rec in row.records] for row in res.rows])
        assert np.all(np.diff(flags.astype(int), axis=0) <= 0)

    def test_thread_count_does_not_change_result(self, tmp_path):
        kw = dict(site_perc=True, n_reps=4, master_seed=11)
        a = run_sweep("p", [0.65, 0.75], site_point(0.5, 3.0), threads=1, **kw)
        b = run_sweep("p", [0.65, 0.75], site_point(0.5, 3.0), threads=2, **kw)
        a.to_csv(tmp_path / "a.csv")
        b.to_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        seeds_a = [r.seed for row in a.rows for r in row.records]
        assert seeds_a == [r.seed for row in b.rows for r in row.records]

    def test_seed_independent_of_grid_position(self):
        a = run_sweep("p", [0.7, 0.8], site_point(0.5, 3.0), site_perc=True, n_reps=3)
        b = run_sweep("p", [0.6, 0.8], site_point(0.5, 3.0), site_perc=True, n_reps=3)
        assert [r.seed for r in a.rows[1].records] == [r.seed for r in b.rows[1].records]
        assert a.rows[1].n_percolating == b.rows[1].n_percolating

    def test_nosha_warns_when_p_given(self):
        pt = ParamPoint(p=0.5, U=3.0, H=0.8, window=Window(2.0), mode="nosha")
        with pytest.warns(UserWarning):
            run_sweep("U", [3.0], pt, n_reps=1)

    def test_below_critical_hops_percolates_without_users(self):
        res = run_sweep("U", [0.0], ParamPoint(p=1.0, U=0.0, H=0.55, window=Window(5.0)),
                        n_reps=5)
        assert res.rows[0].proportion == 1.0


class TestReadSweep:
    def test_bad_header(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(SchemaError):
            read_sweep_csv(path)

    def test_bad_values(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\np,zero,0,0,1,20,5,canyon,1,3,1,0.33\n")
        with pytest.raises(SchemaError):
            read_sweep_csv(path)


def test_child_seeds_distinct():
    seeds = {child_seed(0, k, i) for k in range(20) for i in range(50)}
    assert len(seeds) == 1000
    assert child_seed(1, 0) != child_seed(0, 0)
    assert all(0 <= s < 2 ** 64 for s in seeds)
    assert math.isfinite(float(child_seed(0)))
