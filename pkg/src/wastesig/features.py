"""Per-product trade features and z-score standardization."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .ingest import ProductSeries

CORE_FEATURES = ("avg_kg", "avg_price", "price_volatility", "kg_trend", "price_trend")
EXTENDED_FEATURES = CORE_FEATURES + (
    "log_avg_kg", "log_avg_price", "ix_logkg_logprice", "ix_trends",
)
FEATURE_SETS = {"core": CORE_FEATURES, "extended": EXTENDED_FEATURES}


class InsufficientHistory(ValueError):
    """A product has fewer than two priced years."""


def ols_line(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and intercept of y on x (closed form, centered)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a line")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("x values are all equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    return slope, float(ym - slope * xm)


@dataclass(frozen=True)
class FeatureVector:
    hs_code: str
    avg_kg: float
    avg_price: float
    price_volatility: float
    kg_trend: float
    price_trend: float
    low_confidence: bool = False

    @property
    def log_avg_kg(self) -> float:
        return math.log1p(self.avg_kg)

    @property
    def log_avg_price(self) -> float:
        return math.log1p(self.avg_price)

    @property
    def ix_logkg_logprice(self) -> float:
        return self.log_avg_kg * self.log_avg_price

    @property
    def ix_trends(self) -> float:
        return self.kg_trend * self.price_trend

    def get(self, name: str) -> float:
        if name not in EXTENDED_FEATURES:
            raise KeyError(name)
        return getattr(self, name)

    def to_dict(self) -> dict:
        out = {"hs_code": self.hs_code}
        out.update({name: self.get(name) for name in EXTENDED_FEATURES})
        out["low_confidence"] = self.low_confidence
        return out


def compute_features(series: ProductSeries) -> FeatureVector:
    """Table features of one product series.

    Raises InsufficientHistory when fewer than two years carry a unit price.
    The volume trend uses every available year; price statistics use priced
    years only. A two-point fit is exact and flagged ``low_confidence``.
    """
    priced = series.priced()
    if len(priced) < 2:
        raise InsufficientHistory(f"{series.hs_code}: insufficient history")
    years = [p.year for p in series.points]
    kgs = [p.kg for p in series.points]
    p_years = [p.year for p in priced]
    prices = np.array([p.unit_price for p in priced], dtype=float)
    kg_trend, _ = ols_line(years, kgs)
    price_trend, _ = ols_line(p_years, prices)
    return FeatureVector(
        hs_code=series.hs_code,
        avg_kg=float(np.mean(kgs)),
        avg_price=float(prices.mean()),
        price_volatility=float(prices.std()),
        kg_trend=kg_trend,
        price_trend=price_trend,
        low_confidence=len(priced) == 2,
    )


def compute_all(all_series: Iterable[ProductSeries]) -> tuple[list[FeatureVector], dict[str, str]]:
    """Features for every series; products that cannot be featurized are reported, not raised."""
    vectors, excluded = [], {}
    for s in all_series:
        try:
            vectors.append(compute_features(s))
        except InsufficientHistory:
            excluded[s.hs_code] = "insufficient history"
    return vectors, excluded


@dataclass
class StandardizedMatrix:
    rows: list[str]
    columns: list[str]
    values: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    constant: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def row(self, hs_code: str) -> np.ndarray:
        return self.values[self.rows.index(hs_code)]

    def transform(self, vectors: Sequence[FeatureVector]) -> np.ndarray:
        """Z-score unseen products with the stored statistics."""
        raw = feature_matrix(vectors, self.columns)
        safe = np.where(self.stds > 0, self.stds, 1.0)
        z = (raw - self.means) / safe
        z[:, self.stds == 0] = 0.0
        return z

    def inverse(self) -> np.ndarray:
        return self.values * self.stds + self.means

    def subset(self, mask: np.ndarray) -> "StandardizedMatrix":
        """Rows selected by ``mask``, re-standardized over that subset."""
        mask = np.asarray(mask, dtype=bool)
        raw = self.inverse()[mask]
        rows = [r for r, keep in zip(self.rows, mask) if keep]
        return _standardize_array(rows, list(self.columns), raw)


def feature_matrix(vectors: Sequence[FeatureVector], feature_set: Sequence[str]) -> np.ndarray:
    return np.array([[v.get(name) for name in feature_set] for v in vectors], dtype=float).reshape(
        len(vectors), len(feature_set)
    )


def _standardize_array(rows, columns, raw: np.ndarray) -> StandardizedMatrix:
    means = raw.mean(axis=0)
    centered = raw - means
    stds = np.sqrt(np.mean(centered**2, axis=0))
    # spreads at rounding level of the mean are treated as constant
    tiny = stds <= 1e-12 * np.maximum(np.abs(means), 1.0)
    stds = np.where(tiny, 0.0, stds)
    z = np.zeros_like(raw)
    live = stds > 0
    z[:, live] = centered[:, live] / stds[live]
    constant = [c for c, is_const in zip(columns, ~live) if is_const]
    return StandardizedMatrix(list(rows), list(columns), z, means, stds, constant)


def standardize(
    vectors: Sequence[FeatureVector], feature_set: Sequence[str] = CORE_FEATURES
) -> StandardizedMatrix:
    """Population z-scores per column; constant columns become zeros and are flagged."""
    if len(vectors) < 2:
        raise ValueError("standardize needs at least two feature vectors")
    raw = feature_matrix(vectors, feature_set)
    return _standardize_array([v.hs_code for v in vectors], list(feature_set), raw)


def resolve_feature_set(name_or_list) -> tuple[str, ...]:
    if isinstance(name_or_list, str):
        try:
            return FEATURE_SETS[name_or_list]
        except KeyError:
            raise ValueError(f"unknown feature set {name_or_list!r}") from None
    names = tuple(name_or_list)
    unknown = [n for n in names if n not in EXTENDED_FEATURES]
    if unknown:
        raise ValueError(f"unknown feature(s): {unknown}")
    return names
