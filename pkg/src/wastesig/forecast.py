"""Linear unit-price extrapolation and downtrend ranking."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .features import InsufficientHistory, ols_line
from .ingest import ProductSeries

DEFAULT_HORIZON = 2030


class ForecastMethod(enum.Enum):
    LINEAR = "linear"


@dataclass(frozen=True)
class PriceForecast:
    hs_code: str
    slope: float
    intercept: float
    horizon_year: int
    path: tuple
    negative_cross_year: Optional[int]
    observed: tuple = ()
    method: ForecastMethod = ForecastMethod.LINEAR

    def predict(self, year: int) -> float:
        return dict(self.path)[year]

    def to_dict(self) -> dict:
        return {
            "hs_code": self.hs_code,
            "method": self.method.value,
            "slope": self.slope,
            "intercept": self.intercept,
            "horizon_year": self.horizon_year,
            "negative_cross_year": self.negative_cross_year,
            "observed": [[y, p] for y, p in self.observed],
            "path": [[y, p] for y, p in self.path],
        }


def forecast_price(series: ProductSeries, horizon_year: int = DEFAULT_HORIZON,
                   method: ForecastMethod = ForecastMethod.LINEAR) -> PriceForecast:
    """Extend the least-squares price line year by year up to ``horizon_year``.

    Negative predictions are kept as they are; the first one marks the crossing.
    """
    if method is not ForecastMethod.LINEAR:
        raise ValueError(f"unsupported forecast method {method}")
    priced = series.priced()
    if len(priced) < 2:
        raise InsufficientHistory(f"{series.hs_code}: insufficient history")
    years = np.array([p.year for p in priced], dtype=float)
    prices = np.array([p.unit_price for p in priced], dtype=float)
    last = int(series.points[-1].year)
    if horizon_year <= last:
        raise ValueError(f"horizon {horizon_year} must be after last observed year {last}")
    # centered form keeps predictions exact for integer-valued lines
    slope, intercept = ols_line(years, prices)
    xm, ym = years.mean(), prices.mean()
    path = tuple((y, float(ym + slope * (y - xm))) for y in range(last + 1, horizon_year + 1))
    cross = next((y for y, p in path if p < 0), None)
    return PriceForecast(
        hs_code=series.hs_code,
        slope=slope,
        intercept=intercept,
        horizon_year=horizon_year,
        path=path,
        negative_cross_year=cross,
        observed=tuple((p.year, float(p.unit_price)) for p in priced),
        method=method,
    )


def forecast_all(all_series: Iterable[ProductSeries], horizon_year: int = DEFAULT_HORIZON):
    forecasts, skipped = [], {}
    for s in all_series:
        try:
            forecasts.append(forecast_price(s, horizon_year))
        except InsufficientHistory:
            skipped[s.hs_code] = "insufficient history"
    return forecasts, skipped


def rank_downtrends(forecasts: Sequence[PriceForecast], top_n: int) -> list[PriceForecast]:
    """Most negative slope first, ties by hs_code."""
    return sorted(forecasts, key=lambda f: (f.slope, f.hs_code))[:top_n]
