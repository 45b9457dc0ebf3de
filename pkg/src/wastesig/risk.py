"""Waste Score model and the per-product risk quantities built on it."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .features import FeatureVector, StandardizedMatrix, ols_line

logger = logging.getLogger(__name__)

QUADRANTS = ("HighVolLowPrice", "HighVolHighPrice", "LowVolLowPrice", "LowVolHighPrice")


class LabelConfigError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LabelConfig:
    scrap_codes: frozenset = frozenset({"7204"})
    finished_codes: frozenset = frozenset({"8542"})

    def __post_init__(self):
        object.__setattr__(self, "scrap_codes", frozenset(str(c) for c in self.scrap_codes))
        object.__setattr__(self, "finished_codes", frozenset(str(c) for c in self.finished_codes))
        overlap = self.scrap_codes & self.finished_codes
        if overlap:
            raise LabelConfigError(f"prefixes in both label sets: {sorted(overlap)}")

    def label(self, hs_code: str) -> Optional[int]:
        scrap = any(hs_code.startswith(p) for p in self.scrap_codes)
        finished = any(hs_code.startswith(p) for p in self.finished_codes)
        if scrap and finished:
            raise LabelConfigError(f"{hs_code} matches both scrap and finished prefixes")
        if scrap:
            return 1
        if finished:
            return 0
        return None


def build_training_set(matrix: StandardizedMatrix, labels: LabelConfig):
    """Rows matching a label prefix and their 0/1 targets (1 = scrap).

    Returns ``(X, y, codes)``; unmatched products are left out.
    """
    idx, y = [], []
    for i, code in enumerate(matrix.rows):
        lab = labels.label(code)
        if lab is not None:
            idx.append(i)
            y.append(lab)
    y = np.array(y, dtype=float)
    if not np.any(y == 1):
        raise LabelConfigError("no product matches the scrap prefixes")
    if not np.any(y == 0):
        raise LabelConfigError("no product matches the finished prefixes")
    return matrix.values[idx], y, [matrix.rows[i] for i in idx]


def sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def _log1pexp(t):
    return np.logaddexp(0.0, t)


def penalized_loglik(weights, intercept, X, y, l2_lambda) -> float:
    """Bernoulli log-likelihood minus (λ/2)·‖w‖²; the intercept is not penalized."""
    eta = X @ weights + intercept
    ll = np.sum(y * eta - _log1pexp(eta))
    return float(ll - 0.5 * l2_lambda * np.dot(weights, weights))


def penalized_gradient(weights, intercept, X, y, l2_lambda) -> tuple[np.ndarray, float]:
    r = y - sigmoid(X @ weights + intercept)
    return X.T @ r - l2_lambda * weights, float(r.sum())


@dataclass
class WasteModel:
    weights: np.ndarray
    intercept: float
    feature_names: list
    baseline_means: np.ndarray
    l2_lambda: float
    converged: bool
    n_iter: int
    loglik_history: list = field(default_factory=list)

    def linear_predictor(self, z) -> np.ndarray | float:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.weights.size:
            raise ValueError(f"expected {self.weights.size} features, got {z.shape[-1]}")
        return z @ self.weights + self.intercept

    def baseline_logit(self) -> float:
        return float(self.baseline_means @ self.weights + self.intercept)

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "baseline_means": [float(m) for m in self.baseline_means],
            "l2_lambda": self.l2_lambda,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def fit_logistic(
    X, y, l2_lambda: float = 1e-3, max_iter: int = 100, tol: float = 1e-8,
    feature_names: Optional[Sequence[str]] = None,
) -> WasteModel:
    """L2-penalized logistic regression by iteratively reweighted least squares.

    Each Newton step is halved until the penalized log-likelihood does not
    decrease. ``converged`` means the gradient max-norm fell below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 2 or len(np.unique(y)) < 2:
        raise ValueError("need at least two rows with both classes present")
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be non-negative")
    A = np.hstack([X, np.ones((n, 1))])
    penalty = np.full(d + 1, l2_lambda)
    penalty[-1] = 0.0
    theta = np.zeros(d + 1)
    ybar = y.mean()
    theta[-1] = math.log(ybar / (1 - ybar))

    def objective(th):
        return penalized_loglik(th[:-1], th[-1], X, y, l2_lambda)

    ll = objective(theta)
    history = [ll]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(A @ theta)
        grad = A.T @ (y - p) - penalty * theta
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        w = p * (1 - p)
        H = (A * w[:, None]).T @ A + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step
            cand_ll = objective(cand)
            if cand_ll >= ll or t < 1e-10:
                break
            t *= 0.5
        if cand_ll < ll:
            break
        theta, ll = cand, cand_ll
        history.append(ll)
    else:
        p = sigmoid(A @ theta)
        grad = A.T @ (y - p) - penalty * theta
        converged = bool(np.max(np.abs(grad)) < tol)

    separated = False
    if l2_lambda == 0 and np.max(np.abs(A @ theta)) > 30.0:
        # fitted probabilities numerically 0 or 1: the unpenalized optimum is at infinity
        separated, converged = True, False
    if not converged:
        hint = " (perfect separation? use l2_lambda > 0)" if l2_lambda == 0 else ""
        if separated:
            warnings.warn("fitted probabilities numerically 0 or 1; the classes look perfectly "
                          "separated, use l2_lambda > 0", ConvergenceWarning, stacklevel=2)
            hint = None
        if hint is not None:
            warnings.warn(f"IRLS did not converge in {max_iter} iterations{hint}",
                          ConvergenceWarning, stacklevel=2)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(d)]
    return WasteModel(theta[:-1].copy(), float(theta[-1]), names, X.mean(axis=0),
                      l2_lambda, converged, it, history)


def waste_score(model: WasteModel, z) -> float:
    return float(sigmoid(model.linear_predictor(z)))


def linear_shap(model: WasteModel, z) -> np.ndarray:
    """Exact Shapley values of the logit for a linear model with independent features."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.weights.size:
        raise ValueError(f"expected {model.weights.size} features, got {z.shape[-1]}")
    return model.weights * (z - model.baseline_means)


@dataclass(frozen=True)
class TrendlineFit:
    slope: float
    intercept: float
    r_squared: float
    n: int

    def residual(self, fv: FeatureVector) -> Optional[float]:
        if fv.avg_kg <= 0 or fv.avg_price <= 0:
            return None
        return math.log(fv.avg_price) - (self.intercept + self.slope * math.log(fv.avg_kg))


def fit_trendline(features: Iterable[FeatureVector]) -> TrendlineFit:
    """Log-log least-squares fit of average price on average volume across products."""
    pts = [(math.log(f.avg_kg), math.log(f.avg_price)) for f in features
           if f.avg_kg > 0 and f.avg_price > 0]
    if len(pts) < 3:
        raise ValueError("trendline needs at least 3 products with positive volume and price")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope, intercept = ols_line(x, y)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return TrendlineFit(slope, intercept, min(max(r2, 0.0), 1.0), len(pts))


def quadrant_thresholds(features: Sequence[FeatureVector]) -> tuple[float, float]:
    """Median ln(1+volume) and median ln(1+price) over the population."""
    return (float(np.median([f.log_avg_kg for f in features])),
            float(np.median([f.log_avg_price for f in features])))


def classify_quadrant(fv: FeatureVector, thresholds: tuple[float, float]) -> str:
    high_vol = fv.log_avg_kg >= thresholds[0]
    high_price = fv.log_avg_price >= thresholds[1]
    return ("HighVol" if high_vol else "LowVol") + ("HighPrice" if high_price else "LowPrice")


def scrutiny_score(waste: float, price_trend_z: float) -> float:
    """Waste-likeness discounted by how strongly the price is not falling."""
    return float(waste * sigmoid(-price_trend_z))


@dataclass
class RiskProfile:
    hs_code: str
    waste_score: float
    shap: dict
    quadrant: str
    scrutiny_score: float
    trendline_residual: Optional[float]
    in_training: Optional[int] = None

    def top_shap(self, n: int = 3) -> list[tuple[str, float]]:
        return sorted(self.shap.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:n]

    def to_dict(self) -> dict:
        return {
            "hs_code": self.hs_code,
            "waste_score": self.waste_score,
            "scrutiny_score": self.scrutiny_score,
            "quadrant": self.quadrant,
            "trendline_residual": self.trendline_residual,
            "shap": dict(self.shap),
            "top_shap": [[k, v] for k, v in self.top_shap()],
            "training_label": self.in_training,
        }


def _zscores(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    return (values - values.mean()) / sd if sd > 0 else np.zeros_like(values)


def score_products(
    model: WasteModel,
    matrix: StandardizedMatrix,
    features: Sequence[FeatureVector],
    labels: Optional[LabelConfig] = None,
    trendline: Optional[TrendlineFit] = None,
) -> list[RiskProfile]:
    """Risk profile for every row of ``matrix``; ``features`` must cover the same codes."""
    by_code = {f.hs_code: f for f in features}
    ordered = [by_code[c] for c in matrix.rows]
    thresholds = quadrant_thresholds(ordered)
    trend_z = _zscores(np.array([f.price_trend for f in ordered]))
    if trendline is None:
        trendline = fit_trendline(ordered)
    profiles = []
    for i, (code, fv) in enumerate(zip(matrix.rows, ordered)):
        z = matrix.values[i]
        ws = waste_score(model, z)
        attributions = linear_shap(model, z)
        profiles.append(RiskProfile(
            hs_code=code,
            waste_score=ws,
            shap={name: float(a) for name, a in zip(model.feature_names, attributions)},
            quadrant=classify_quadrant(fv, thresholds),
            scrutiny_score=scrutiny_score(ws, float(trend_z[i])),
            trendline_residual=trendline.residual(fv),
            in_training=labels.label(code) if labels is not None else None,
        ))
    return profiles
