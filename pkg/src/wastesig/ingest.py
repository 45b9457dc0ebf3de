"""Trade-record parsing and the cleaning sequence.

Raw delimiter-separated records are parsed into :class:`TradeRecord`, masses
are harmonized to kilograms, annual per-code series are aggregated, short
interior gaps are interpolated, sparse codes are dropped, monetary values are
deflated and the pooled columns are capped at the configured percentiles.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FLOWS = ("export", "import")
MASS_FACTORS = {"kg": 1.0, "tonne": 1000.0, "gram": 0.001}
_UNIT_ALIASES = {
    "kg": "kg", "kgs": "kg", "kilogram": "kg", "kilograms": "kg",
    "t": "tonne", "tonne": "tonne", "tonnes": "tonne", "ton": "tonne", "tons": "tonne",
    "g": "gram", "gram": "gram", "grams": "gram",
}
_FLOW_ALIASES = {"export": "export", "x": "export", "exports": "export",
                 "import": "import", "m": "import", "imports": "import"}
_HS_RE = re.compile(r"^[0-9]{6}$")

REQUIRED_COLUMNS = ("hs_code", "year", "partner", "flow", "value", "mass")
DEFAULT_ALIASES: dict[str, tuple[str, ...]] = {
    "hs_code": ("hs_code", "hs", "cmdcode", "commodity_code"),
    "year": ("year", "period", "refyear"),
    "partner": ("partner", "partneriso", "partner_iso3", "partner_code"),
    "flow": ("flow", "flowdesc", "flow_code"),
    "value": ("value", "value_usd", "primaryvalue", "tradevalue"),
    "mass": ("mass", "netwgt", "net_weight", "qty"),
    "mass_unit": ("mass_unit", "unit", "qtyunit"),
}


class CleaningConfigError(ValueError):
    """Raised for inconsistent or incomplete cleaning configuration."""


@dataclass(frozen=True)
class TradeRecord:
    hs_code: str
    year: int
    partner: str
    flow: str
    value_usd: float
    mass: float
    mass_unit: str = "kg"
    padded: bool = False


@dataclass(frozen=True)
class RejectedRow:
    line: int
    reason: str
    raw: str = ""


@dataclass(frozen=True)
class SeriesPoint:
    year: int
    value_usd: float
    kg: float
    unit_price: Optional[float]


@dataclass(frozen=True)
class ProductSeries:
    hs_code: str
    points: tuple[SeriesPoint, ...]
    missing_fraction: float
    interpolated_years: frozenset = frozenset()
    flow: str = "export"

    @property
    def years(self) -> list[int]:
        return [p.year for p in self.points]

    def priced(self) -> list[SeriesPoint]:
        return [p for p in self.points if p.unit_price is not None]

    def to_dict(self) -> dict:
        return {
            "hs_code": self.hs_code,
            "flow": self.flow,
            "missing_fraction": self.missing_fraction,
            "interpolated_years": sorted(self.interpolated_years),
            "points": [
                {"year": p.year, "value_usd": p.value_usd, "kg": p.kg, "unit_price": p.unit_price}
                for p in self.points
            ],
        }


@dataclass
class CleaningConfig:
    window: tuple[int, int] = (2020, 2024)
    max_gap_interp: int = 2
    max_missing_fraction: float = 0.20
    deflators: dict[int, float] = field(default_factory=dict)
    cap_low_pct: float = 0.01
    cap_high_pct: float = 0.99

    def __post_init__(self):
        start, end = self.window
        self.window = (int(start), int(end))
        if self.window[0] > self.window[1]:
            raise CleaningConfigError(f"window start after end: {self.window}")
        if not 0 <= self.cap_low_pct < self.cap_high_pct <= 1:
            raise CleaningConfigError("need 0 <= cap_low_pct < cap_high_pct <= 1")
        if self.max_gap_interp < 0:
            raise CleaningConfigError("max_gap_interp must be >= 0")
        if not self.deflators:
            self.deflators = {y: 1.0 for y in self.years}
        self.deflators = {int(y): float(m) for y, m in self.deflators.items()}
        if any(not m > 0 for m in self.deflators.values()):
            raise CleaningConfigError("deflators must be strictly positive")

    @property
    def years(self) -> range:
        return range(self.window[0], self.window[1] + 1)

    @property
    def window_length(self) -> int:
        return self.window[1] - self.window[0] + 1


def _price(value: float, kg: float) -> Optional[float]:
    return value / kg if kg > 0 else None


def _resolve_columns(header: Sequence[str], aliases: Mapping[str, Sequence[str]]) -> dict[str, int]:
    lowered = [h.strip().lower() for h in header]
    index = {}
    for canonical, names in aliases.items():
        for name in names:
            if name.lower() in lowered:
                index[canonical] = lowered.index(name.lower())
                break
    missing = [c for c in REQUIRED_COLUMNS if c not in index]
    if missing:
        raise ValueError(f"missing required column(s): {', '.join(missing)}")
    return index


def parse_records(
    content: bytes | str,
    *,
    delimiter: str = ",",
    aliases: Optional[Mapping[str, Sequence[str]]] = None,
    window: Optional[tuple[int, int]] = None,
    rejected: Optional[list] = None,
) -> list[TradeRecord]:
    """Parse delimiter-separated trade records.

    Rows that fail validation are skipped and, when ``rejected`` is given,
    appended to it as :class:`RejectedRow`. A header without the required
    columns raises ``ValueError``. Row order is preserved.
    """
    text = content.decode("utf-8-sig") if isinstance(content, bytes) else content
    merged = dict(DEFAULT_ALIASES)
    for key, names in (aliases or {}).items():
        merged[key] = tuple(names) + tuple(merged.get(key, ()))
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty input: header row required") from None
    cols = _resolve_columns(header, merged)

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            records.append(_parse_row(row, cols, window))
        except ValueError as exc:
            logger.warning("line %d skipped: %s", lineno, exc)
            if rejected is not None:
                rejected.append(RejectedRow(lineno, str(exc), delimiter.join(row)))
    return records


def _parse_row(row: list[str], cols: dict[str, int], window) -> TradeRecord:
    def get(name):
        i = cols[name]
        if i >= len(row):
            raise ValueError(f"missing field {name}")
        return row[i].strip()

    hs = get("hs_code")
    padded = False
    if re.fullmatch(r"[0-9]{4}", hs):
        hs, padded = hs + "00", True
    if not _HS_RE.match(hs):
        raise ValueError(f"malformed hs_code {hs!r}")
    try:
        year = int(get("year"))
    except ValueError:
        raise ValueError("malformed year") from None
    if window is not None and not window[0] <= year <= window[1]:
        raise ValueError(f"year {year} outside window")
    flow = _FLOW_ALIASES.get(get("flow").lower())
    if flow is None:
        raise ValueError(f"unknown flow {get('flow')!r}")
    try:
        value = float(get("value"))
        mass = float(get("mass"))
    except ValueError:
        raise ValueError("malformed number") from None
    if not (math.isfinite(value) and math.isfinite(mass)):
        raise ValueError("non-finite number")
    if value < 0:
        raise ValueError("negative value")
    if mass < 0:
        raise ValueError("negative mass")
    unit = "kg"
    if "mass_unit" in cols and cols["mass_unit"] < len(row) and row[cols["mass_unit"]].strip():
        raw_unit = row[cols["mass_unit"]].strip().lower()
        unit = _UNIT_ALIASES.get(raw_unit, raw_unit)
    partner = get("partner").upper()
    if not partner:
        raise ValueError("missing partner")
    return TradeRecord(hs, year, partner, flow, value, mass, unit, padded)


def harmonize(records: Iterable[TradeRecord], rejected: Optional[list] = None) -> list[TradeRecord]:
    """Express every mass in kilograms. Unknown units are rejected."""
    out = []
    for i, rec in enumerate(records):
        factor = MASS_FACTORS.get(rec.mass_unit)
        if factor is None:
            logger.warning("record %d rejected: unknown mass unit %r", i, rec.mass_unit)
            if rejected is not None:
                rejected.append(RejectedRow(i, f"unknown mass unit {rec.mass_unit!r}"))
            continue
        if rec.mass_unit == "kg":
            out.append(rec)
        else:
            out.append(replace(rec, mass=rec.mass * factor, mass_unit="kg"))
    return out


def aggregate_series(
    records: Iterable[TradeRecord], cfg: CleaningConfig, flow: Optional[str] = None
) -> list[ProductSeries]:
    """Annual value and mass sums per (hs_code, flow), ordered by code then flow."""
    sums: dict[tuple[str, str], dict[int, list[float]]] = {}
    for rec in records:
        if rec.mass_unit != "kg":
            raise ValueError("aggregate_series needs harmonized records")
        if flow is not None and rec.flow != flow:
            continue
        if not cfg.window[0] <= rec.year <= cfg.window[1]:
            continue
        acc = sums.setdefault((rec.hs_code, rec.flow), {}).setdefault(rec.year, [0.0, 0.0])
        acc[0] += rec.value_usd
        acc[1] += rec.mass

    out = []
    n_window = cfg.window_length
    for (code, fl), by_year in sorted(sums.items()):
        points = tuple(
            SeriesPoint(y, v, kg, _price(v, kg)) for y, (v, kg) in sorted(by_year.items())
        )
        out.append(ProductSeries(code, points, (n_window - len(points)) / n_window, frozenset(), fl))
    return out


def interpolate_gaps(series: ProductSeries, cfg: CleaningConfig) -> ProductSeries:
    """Fill interior gaps of at most ``max_gap_interp`` years linearly.

    value_usd and kg are interpolated independently and unit_price recomputed.
    Window edges are never extrapolated.
    """
    pts = list(series.points)
    filled = []
    out = []
    for a, b in zip(pts, pts[1:]):
        out.append(a)
        gap = b.year - a.year - 1
        if 0 < gap <= cfg.max_gap_interp:
            for y in range(a.year + 1, b.year):
                t = (y - a.year) / (b.year - a.year)
                v = a.value_usd + t * (b.value_usd - a.value_usd)
                kg = a.kg + t * (b.kg - a.kg)
                out.append(SeriesPoint(y, v, kg, _price(v, kg)))
                filled.append(y)
    if pts:
        out.append(pts[-1])
    if not filled:
        return series
    return replace(series, points=tuple(out),
                   interpolated_years=series.interpolated_years | frozenset(filled))


def exclude_sparse(
    all_series: Iterable[ProductSeries], cfg: CleaningConfig
) -> tuple[list[ProductSeries], list[ProductSeries]]:
    kept, dropped = [], []
    for s in all_series:
        (dropped if s.missing_fraction > cfg.max_missing_fraction else kept).append(s)
    return kept, dropped


def deflate(series: ProductSeries, cfg: CleaningConfig) -> ProductSeries:
    missing = [y for y in cfg.years if y not in cfg.deflators]
    if missing:
        raise CleaningConfigError(f"no deflator for year(s) {missing}")
    points = []
    for p in series.points:
        v = p.value_usd * cfg.deflators[p.year]
        points.append(SeriesPoint(p.year, v, p.kg, _price(v, p.kg)))
    return replace(series, points=tuple(points))


def percentile_caps(values: np.ndarray, low: float, high: float) -> tuple[float, float]:
    """Caps at the order statistics nearest the linear-interpolation positions.

    The position ``q·(n−1)`` is the one used by linear interpolation; snapping
    it to the nearest order statistic keeps capping idempotent.
    """
    lo, hi = np.quantile(values, [low, high], method="nearest")
    return float(lo), float(hi)


def winsorize(all_series: Sequence[ProductSeries], cfg: CleaningConfig) -> list[ProductSeries]:
    """Cap value_usd, kg and unit_price at pooled percentiles, column by column."""
    all_series = list(all_series)
    values = np.array([p.value_usd for s in all_series for p in s.points], dtype=float)
    if values.size < 2:
        logger.warning("winsorize: fewer than 2 pooled observations, nothing capped")
        return all_series
    kgs = np.array([p.kg for s in all_series for p in s.points], dtype=float)
    prices = np.array([p.unit_price for s in all_series for p in s.points
                       if p.unit_price is not None], dtype=float)
    v_lo, v_hi = percentile_caps(values, cfg.cap_low_pct, cfg.cap_high_pct)
    k_lo, k_hi = percentile_caps(kgs, cfg.cap_low_pct, cfg.cap_high_pct)
    if prices.size >= 2:
        p_lo, p_hi = percentile_caps(prices, cfg.cap_low_pct, cfg.cap_high_pct)
    else:
        p_lo, p_hi = -math.inf, math.inf

    def clip(x, lo, hi):
        return min(max(x, lo), hi)

    out = []
    for s in all_series:
        pts = tuple(
            SeriesPoint(
                p.year,
                clip(p.value_usd, v_lo, v_hi),
                clip(p.kg, k_lo, k_hi),
                None if p.unit_price is None else clip(p.unit_price, p_lo, p_hi),
            )
            for p in s.points
        )
        out.append(replace(s, points=pts))
    return out


@dataclass
class CleaningResult:
    series: list[ProductSeries]
    dropped: list[ProductSeries]
    rejected: list[RejectedRow]


def clean(records: Iterable[TradeRecord], cfg: CleaningConfig, flow: str = "export") -> CleaningResult:
    """Harmonize, aggregate, interpolate, drop sparse codes, deflate, winsorize."""
    rejected: list[RejectedRow] = []
    harmonized = harmonize(records, rejected)
    series = aggregate_series(harmonized, cfg, flow=flow)
    series = [interpolate_gaps(s, cfg) for s in series]
    kept, dropped = exclude_sparse(series, cfg)
    kept = [deflate(s, cfg) for s in kept]
    kept = winsorize(kept, cfg)
    return CleaningResult(kept, dropped, rejected)


SERIES_COLUMNS = ("hs_code", "flow", "year", "value_usd", "kg", "unit_price", "interpolated")


def series_rows(all_series: Iterable[ProductSeries]) -> list[dict]:
    rows = []
    for s in all_series:
        for p in s.points:
            rows.append({
                "hs_code": s.hs_code, "flow": s.flow, "year": p.year,
                "value_usd": p.value_usd, "kg": p.kg,
                "unit_price": "" if p.unit_price is None else p.unit_price,
                "interpolated": int(p.year in s.interpolated_years),
            })
    return rows
