import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from canyonperc.errors import DegenerateFitError, ParameterError
from canyonperc.estimation import (
    corrected_logit,
    logit_fit,
    quadratic_fit,
    threshold_direction,
)
from canyonperc.presets import QUADRATIC_REFERENCE, TABLE_PC_OF_H


@dataclass
class Row:
    value: float
    n_reps: int
    n_percolating: int


def logistic(x, a, b):
    return 1.0 / (1.0 + np.exp(-(a * np.asarray(x) + b)))


def expected_rows(x, a, b, n):
    return [Row(float(v), n, int(round(n * f))) for v, f in zip(x, logistic(x, a, b))]


def sampled_rows(x, a, b, n, rng):
    return [Row(float(v), n, int(rng.binomial(n, f))) for v, f in zip(x, logistic(x, a, b))]


class TestLogitFit:
    def test_recovers_known_logistic(self):
        x = np.linspace(0.2, 0.8, 13)
        fit = logit_fit(expected_rows(x, 10.0, -5.0, 10 ** 6))
        assert fit.a == pytest.approx(10.0, rel=0.01)
        assert fit.b == pytest.approx(-5.0, rel=0.01)
        assert abs(fit.threshold - 0.5) < 0.01
        assert fit.n_points_used == 13 and fit.method == "logit-ols"

    def test_symmetric_rows_give_centre(self):
        x0 = 0.37
        offsets = np.array([-0.2, -0.1, -0.05, 0.0, 0.05, 0.1, 0.2])
        ks = [3, 15, 31, 50, 69, 85, 97]
        rows = [Row(x0 + d, 100, k) for d, k in zip(offsets, ks)]
        assert logit_fit(rows).threshold == pytest.approx(x0, abs=1e-12)

    @given(alpha=st.floats(0.1, 50.0) | st.floats(-50.0, -0.1), beta=st.floats(-10, 10))
    def test_affine_reparametrisation(self, alpha, beta):
        rng = np.random.default_rng(0)
        x = np.linspace(0.6, 0.85, 11)
        rows = sampled_rows(x, 40.0, -28.5, 100, rng)
        fit = logit_fit(rows)
        moved = logit_fit([Row(alpha * r.value + beta, r.n_reps, r.n_percolating) for r in rows])
        assert moved.threshold == pytest.approx(alpha * fit.threshold + beta,
                                                rel=1e-9, abs=1e-9)

    @given(n=st.integers(1, 10_000), data=st.data())
    def test_corrected_logit_always_finite(self, n, data):
        k = data.draw(st.integers(0, n))
        y, var = corrected_logit(k, n)
        assert np.isfinite(y) and np.isfinite(var) and var > 0

    def test_error_shrinks_with_replications(self):
        x = np.linspace(0.2, 0.8, 13)
        errors = []
        for n in (10 ** 2, 10 ** 4, 10 ** 6):
            errs = [abs(logit_fit(sampled_rows(x, 10.0, -5.0, n, np.random.default_rng(s))).a
                        - 10.0) for s in range(20)]
            errors.append(np.mean(errs))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] < 0.05

    @pytest.mark.parametrize("k", [0, 10])
    def test_saturated_rows_degenerate(self, k):
        with pytest.raises(DegenerateFitError):
            logit_fit([Row(v, 10, k) for v in (0.1, 0.2, 0.3, 0.4)])

    def test_too_few_points(self):
        with pytest.raises(ParameterError):
            logit_fit([Row(0.1, 10, 2), Row(0.2, 10, 8), Row(0.2, 10, 9)])

    def test_bad_method(self):
        with pytest.raises(ParameterError):
            logit_fit(expected_rows([0.1, 0.5, 0.9], 5, -2.5, 100), method="probit")

    def test_ml_agrees_with_ols_on_clean_data(self):
        x = np.linspace(0.6, 0.85, 26)
        rows = sampled_rows(x, 60.0, -60 * 0.713, 100, np.random.default_rng(1))
        ols = logit_fit(rows)
        ml = logit_fit(rows, method="ml")
        assert ml.method == "logit-ml"
        assert abs(ols.threshold - ml.threshold) < 0.005
        assert ml.residual_deviance <= ols.residual_deviance + 1e-9

    def test_bootstrap_interval_covers_estimate(self):
        x = np.linspace(0.6, 0.85, 26)
        rows = sampled_rows(x, 60.0, -60 * 0.713, 100, np.random.default_rng(2))
        fit = logit_fit(rows, n_boot=300, seed=4)
        assert fit.ci_low < fit.threshold < fit.ci_high
        assert fit.ci_high - fit.ci_low < 0.03
        again = logit_fit(rows, n_boot=300, seed=4)
        assert (again.ci_low, again.ci_high) == (fit.ci_low, fit.ci_high)

    def test_unweighted_variant_runs(self):
        fit = logit_fit(expected_rows(np.linspace(0, 1, 9), 8, -4, 1000), weighted=False)
        assert fit.threshold == pytest.approx(0.5, abs=1e-3)

    def test_predict_at_threshold(self):
        fit = logit_fit(expected_rows(np.linspace(0, 1, 9), 8, -3, 1000))
        assert fit.predict(fit.threshold) == pytest.approx(0.5)
        d = fit.as_dict()
        assert math.isnan(d["ci_low"]) and d["threshold"] == fit.threshold


class TestDirection:
    def test_increasing(self):
        rows = expected_rows(np.linspace(0.6, 0.85, 8), 40, -28.5, 100)
        assert threshold_direction(rows) == "increasing"

    def test_decreasing(self):
        rows = expected_rows(np.linspace(0.5, 1.0, 8), -30, 22, 100)
        assert threshold_direction(rows) == "decreasing"

    def test_flat(self):
        with pytest.raises(DegenerateFitError):
            threshold_direction([Row(v, 50, 25) for v in (0.1, 0.2, 0.3)])


class TestQuadratic:
    def test_exact_parabola(self):
        h = np.array([0.5, 0.6, 0.7, 0.9, 1.1])
        fit = quadratic_fit(h, 2 * h ** 2 - h + 0.5)
        assert fit.a2 == pytest.approx(2.0, abs=1e-9)
        assert fit.b1 == pytest.approx(-1.0, abs=1e-9)
        assert fit.c0 == pytest.approx(0.5, abs=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_table_pairs(self):
        h, pc = np.array(TABLE_PC_OF_H).T
        fit = quadratic_fit(h, pc)
        for name in ("a2", "b1", "c0"):
            centre, tol = QUADRATIC_REFERENCE[name]
            assert abs(getattr(fit, name) - centre) <= tol
        assert fit.r_squared >= 0.99

    def test_collinear_points(self):
        h = np.array([0.5, 0.7, 0.9])
        fit = quadratic_fit(h, 0.3 * h + 0.1)
        assert abs(fit.a2) < 1e-9
        assert fit.b1 == pytest.approx(0.3) and fit.c0 == pytest.approx(0.1)

    def test_duplicated_h_rank_deficient(self):
        with pytest.raises(ParameterError):
            quadratic_fit([0.6, 0.6, 0.8, 0.8], [0.85, 0.86, 0.99, 0.98])

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            quadratic_fit([0.5, 0.6, 0.7], [1.0, 2.0])
