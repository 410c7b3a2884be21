"""Threshold extraction from percolation-proportion curves.

The default estimator regresses the empirical logit of the percolation
proportion on the swept parameter, ``log(f / (1 - f)) = a x + b``, and reports
the inflection abscissa ``-b / a`` where the fitted curve crosses 1/2.
Proportions are continuity corrected, ``f' = (k + 0.5) / (n + 1)``, so rows
with ``k = 0`` or ``k = n`` keep a finite logit; each row is weighted by the
inverse of the approximate variance of its corrected logit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateFitError, ParameterError

FLAT_SLOPE = 1e-9


@dataclass(frozen=True)
class LogisticFit:
    a: float
    b: float
    threshold: float
    residual_deviance: float
    n_points_used: int
    method: str = "logit-ols"
    ci_low: float = math.nan
    ci_high: float = math.nan

    def predict(self, x) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-(self.a * np.asarray(x, dtype=float) + self.b)))

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "threshold": self.threshold,
                "ci_low": self.ci_low, "ci_high": self.ci_high,
                "residual_deviance": self.residual_deviance,
                "n_points_used": self.n_points_used, "method": self.method}


@dataclass(frozen=True)
class QuadraticFit:
    a2: float
    b1: float
    c0: float
    r_squared: float

    def predict(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        return self.a2 * h * h + self.b1 * h + self.c0


def _arrays(rows) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows = list(rows)
    x = np.array([float(r.value) for r in rows])
    k = np.array([float(r.n_percolating) for r in rows])
    n = np.array([float(r.n_reps) for r in rows])
    return x, k, n


def corrected_logit(k, n) -> tuple[np.ndarray, np.ndarray]:
    """Continuity-corrected logit and its approximate variance."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    y = np.log((k + 0.5) / (n - k + 0.5))
    var = 1.0 / (k + 0.5) + 1.0 / (n - k + 0.5)
    return y, var


def deviance(k, n, prob) -> float:
    k, n, prob = (np.asarray(v, dtype=float) for v in (k, n, prob))
    prob = np.clip(prob, 1e-300, 1 - 1e-16)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(k > 0, k * np.log(k / (n * prob)), 0.0)
        t2 = np.where(n - k > 0, (n - k) * np.log((n - k) / (n * (1 - prob))), 0.0)
    return float(2.0 * (t1 + t2).sum())


def _validate(x, k, n) -> None:
    if len(np.unique(x)) < 3:
        raise ParameterError("logistic fit needs at least 3 distinct swept values")
    if np.any(n < 1) or np.any(k < 0) or np.any(k > n):
        raise ParameterError("invalid replication counts")
    frac = k / n
    if np.all(frac == frac[0]):
        raise DegenerateFitError(
            f"all proportions equal {frac[0]:g}; threshold undefined")


def _wls(x, y, w) -> tuple[float, float]:
    sw = np.sqrt(w)
    design = np.column_stack([x, np.ones_like(x)]) * sw[:, None]
    (a, b), *_ = np.linalg.lstsq(design, y * sw, rcond=None)
    return float(a), float(b)


def _irls(x, k, n, a, b, max_iter=100, tol=1e-10) -> tuple[float, float]:
    beta = np.array([a, b])
    design = np.column_stack([x, np.ones_like(x)])
    for _ in range(max_iter):
        eta = design @ beta
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = n * mu * (1.0 - mu)
        if np.any(w <= 1e-12):
            break
        z = eta + (k - n * mu) / w
        new = np.linalg.solve(design.T @ (design * w[:, None]), design.T @ (w * z))
        if np.max(np.abs(new - beta)) < tol * (1 + np.max(np.abs(beta))):
            return float(new[0]), float(new[1])
        beta = new
    raise DegenerateFitError("maximum-likelihood logistic fit did not converge "
                             "(data likely perfectly separated)")


def _fit_arrays(x, k, n, method: str, weighted: bool) -> tuple[float, float]:
    y, var = corrected_logit(k, n)
    w = 1.0 / var if weighted else np.ones_like(y)
    a, b = _wls(x, y, w)
    if method == "ml":
        a, b = _irls(x, k, n, a, b)
    elif method != "ols":
        raise ParameterError(f"unknown fit method {method!r}")
    if abs(a) < FLAT_SLOPE:
        raise DegenerateFitError("fitted slope is zero; threshold undefined")
    return a, b


def logit_fit(rows: Iterable, *, method: str = "ols", weighted: bool = True,
              n_boot: int = 0, seed: int = 0, ci: float = 0.95) -> LogisticFit:
    """Fit ``logit f = a x + b`` to sweep rows and return the ``-b/a`` threshold.

    ``rows`` are objects with ``value``, ``n_reps`` and ``n_percolating``.
    ``method="ml"`` refines the least-squares estimate by iteratively
    reweighted maximum likelihood.  With ``n_boot > 0`` a percentile bootstrap
    interval is attached, resampling each row's replication outcomes.
    """
    x, k, n = _arrays(rows)
    _validate(x, k, n)
    a, b = _fit_arrays(x, k, n, method, weighted)
    threshold = -b / a
    dev = deviance(k, n, 1.0 / (1.0 + np.exp(-(a * x + b))))
    lo = hi = math.nan
    if n_boot > 0:
        lo, hi = _bootstrap(x, k, n, method, weighted, n_boot, seed, ci)
    return LogisticFit(a, b, threshold, dev, len(x),
                       "logit-ols" if method == "ols" else "logit-ml", lo, hi)


def _bootstrap(x, k, n, method, weighted, n_boot, seed, ci) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    frac = k / n
    out = []
    for _ in range(n_boot):
        kb = rng.binomial(n.astype(np.int64), frac).astype(float)
        if np.all(kb / n == kb[0] / n[0]):
            continue
        try:
            a, b = _fit_arrays(x, kb, n, method, weighted)
        except DegenerateFitError:
            continue
        out.append(-b / a)
    if not out:
        return math.nan, math.nan
    tail = 100 * (1 - ci) / 2
    lo, hi = np.percentile(out, [tail, 100 - tail])
    return float(lo), float(hi)


def threshold_direction(rows: Iterable) -> str:
    """``"increasing"`` or ``"decreasing"`` according to the fitted slope."""
    x, k, n = _arrays(rows)
    if len(np.unique(x)) < 2:
        raise ParameterError("need at least 2 distinct swept values")
    y, var = corrected_logit(k, n)
    a, _ = _wls(x, y, 1.0 / var)
    if abs(a) < FLAT_SLOPE:
        raise DegenerateFitError("flat curve: no threshold direction")
    return "increasing" if a > 0 else "decreasing"


def quadratic_fit(h: Sequence[float], pc: Sequence[float]) -> QuadraticFit:
    """Least-squares parabola ``pc ~ a2 h^2 + b1 h + c0`` (normal equations)."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(pc, dtype=float)
    if h.shape != y.shape or h.ndim != 1:
        raise ParameterError("h and pc must be 1-d sequences of equal length")
    if len(np.unique(h)) < 3:
        raise ParameterError("quadratic fit needs at least 3 distinct H values")
    design = np.column_stack([h * h, h, np.ones_like(h)])
    gram = design.T @ design
    if np.linalg.cond(gram) > 1e14:
        raise ParameterError("rank-deficient design for quadratic fit")
    a2, b1, c0 = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ np.array([a2, b1, c0])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return QuadraticFit(float(a2), float(b1), float(c0), min(1.0, max(0.0, r2)))
