"""Risk dashboards, country hotspots and segment treemap data.

Everything here is assembly: scores and forecasts are copied from the risk
and forecast results, never recomputed. SVG output is a fixed 960x720 layout
with four regions (quadrant scatter, score gauges, price forecast, partners).
"""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

from .features import FeatureVector
from .forecast import PriceForecast
from .ingest import TradeRecord
from .risk import RiskProfile
from .segmentation import TIERS, SegmentAssignment

WIDTH, HEIGHT = 960, 720


class NotModeledError(KeyError):
    pass


@dataclass
class Dashboard:
    hs_code: str
    tier: str
    quadrant: str
    waste_score: float
    scrutiny_score: float
    forecast: Optional[PriceForecast]
    top_partners: list
    tariff_rate: Optional[float]
    shap_top: list
    dual_confirmed_outlier: bool = False
    position: Optional[tuple] = None
    thresholds: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {
            "hs_code": self.hs_code,
            "tier": self.tier,
            "quadrant": self.quadrant,
            "waste_score": self.waste_score,
            "scrutiny_score": self.scrutiny_score,
            "dual_confirmed_outlier": self.dual_confirmed_outlier,
            "tariff_rate": self.tariff_rate,
            "top_partners": [[p, c] for p, c in self.top_partners],
            "shap_top": [[k, v] for k, v in self.shap_top],
            "position": list(self.position) if self.position else None,
            "thresholds": list(self.thresholds) if self.thresholds else None,
            "forecast": self.forecast.to_dict() if self.forecast else None,
        }


def lookup_tariff(hs_code: str, tariffs: Optional[Mapping[str, float]]) -> Optional[float]:
    """Rate for the longest configured prefix of ``hs_code``."""
    if not tariffs:
        return None
    matches = [p for p in tariffs if hs_code.startswith(str(p))]
    if not matches:
        return None
    return float(tariffs[max(matches, key=len)])


def top_partners(hs_code: str, records: Iterable[TradeRecord], n: int = 5,
                 weight: str = "count", flow: Optional[str] = "export") -> list[tuple[str, float]]:
    """Partners ranked by record count (or traded value), ties by ISO3 code."""
    totals: dict[str, float] = defaultdict(float)
    for r in records:
        if r.hs_code != hs_code or (flow is not None and r.flow != flow):
            continue
        if weight == "count":
            totals[r.partner] += 1
        elif weight == "value":
            totals[r.partner] += r.value_usd
        else:
            raise ValueError(f"unknown partner weighting {weight!r}")
    ranked = sorted(totals.items(), key=lambda kv: (-kv[1], kv[0]))
    if weight == "count":
        ranked = [(p, int(c)) for p, c in ranked]
    return ranked[:n]


def build_dashboard(
    hs_code: str,
    profiles: Mapping[str, RiskProfile],
    assignments: Mapping[str, SegmentAssignment],
    forecasts: Mapping[str, PriceForecast],
    records: Sequence[TradeRecord],
    tariffs: Optional[Mapping[str, float]] = None,
    features: Optional[Mapping[str, FeatureVector]] = None,
    thresholds: Optional[tuple] = None,
    n_partners: int = 5,
    partner_weight: str = "count",
    flow: Optional[str] = "export",
) -> Dashboard:
    if hs_code not in profiles or hs_code not in assignments:
        raise NotModeledError(f"{hs_code}: not modeled")
    prof = profiles[hs_code]
    seg = assignments[hs_code]
    position = None
    if features is not None and hs_code in features:
        fv = features[hs_code]
        position = (fv.log_avg_kg, fv.log_avg_price)
    return Dashboard(
        hs_code=hs_code,
        tier=seg.tier,
        quadrant=prof.quadrant,
        waste_score=prof.waste_score,
        scrutiny_score=prof.scrutiny_score,
        forecast=forecasts.get(hs_code),
        top_partners=top_partners(hs_code, records, n_partners, partner_weight, flow),
        tariff_rate=lookup_tariff(hs_code, tariffs),
        shap_top=prof.top_shap(3),
        dual_confirmed_outlier=seg.dual_confirmed_outlier,
        position=position,
        thresholds=thresholds,
    )


@dataclass(frozen=True)
class CountryHotspot:
    partner: str
    mean_waste_score: float
    n_products: int

    def to_dict(self) -> dict:
        return {"partner": self.partner, "mean_waste_score": self.mean_waste_score,
                "n_products": self.n_products}


def country_hotspots(profiles: Iterable[RiskProfile], records: Iterable[TradeRecord],
                     flow: Optional[str] = "export") -> list[CountryHotspot]:
    """Unweighted mean waste score over the distinct modeled products per partner."""
    scores = {p.hs_code: p.waste_score for p in profiles}
    products: dict[str, set] = defaultdict(set)
    for r in records:
        if r.hs_code in scores and (flow is None or r.flow == flow):
            products[r.partner].add(r.hs_code)
    out = []
    for partner, codes in products.items():
        vals = [scores[c] for c in sorted(codes)]
        out.append(CountryHotspot(partner, math.fsum(vals) / len(vals), len(vals)))
    return sorted(out, key=lambda h: (-h.mean_waste_score, h.partner))


@dataclass(frozen=True)
class TreemapDatum:
    tier: str
    count: int
    share: float

    def to_dict(self) -> dict:
        return {"tier": self.tier, "count": self.count, "share": self.share}


def treemap(assignments: Sequence[SegmentAssignment]) -> list[TreemapDatum]:
    if not assignments:
        raise ValueError("nothing to report")
    counts = Counter(a.tier for a in assignments)
    n = len(assignments)
    return [TreemapDatum(t, counts.get(t, 0), counts.get(t, 0) / n) for t in TIERS]


def dumps(obj) -> str:
    """Canonical JSON used for every output file."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=True, allow_nan=False) + "\n"


def dashboard_json(dashboard: Dashboard) -> str:
    return dumps(dashboard.to_dict())


def _f(v: float) -> str:
    return f"{v:.4f}"


def _pct(rate: float) -> str:
    return f"{rate * 100:g}%"


class _Scale:
    def __init__(self, lo, hi, a, b):
        if hi <= lo:
            lo, hi = lo - 1.0, hi + 1.0
        self.lo, self.hi, self.a, self.b = lo, hi, a, b

    def __call__(self, v):
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)


def render_svg(dashboard: Dashboard, population: Optional[Sequence[tuple]] = None) -> str:
    """Self-contained single-page SVG for one dashboard.

    ``population`` holds ``(log_volume, log_price, waste_score)`` tuples drawn
    behind the highlighted product in the quadrant panel.
    """
    d = dashboard
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        '<rect x="0" y="0" width="960" height="56" fill="#263238"/>',
        f'<text x="20" y="34" font-size="22" fill="#ffffff">'
        f'E-Waste Risk Dashboard for HS Code: {escape(d.hs_code)}</text>',
    ]
    tariff = "n/a" if d.tariff_rate is None else _pct(d.tariff_rate)
    out.append(
        f'<text x="940" y="34" font-size="14" fill="#ffffff" text-anchor="end" id="meta">'
        f'Tier: {escape(d.tier)} | Quadrant: {escape(d.quadrant)} | Tariff: {tariff}</text>'
    )
    out += _quadrant_panel(d, population or [])
    out += _gauge_panel(d)
    out += _forecast_panel(d)
    out += _partner_panel(d)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _panel(x, y, w, h, title):
    return [
        f'<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="#fafafa" stroke="#cfd8dc"/>',
        f'<text x="{x + 10}" y="{y + 20}" font-size="14" font-weight="bold">{escape(title)}</text>',
    ]


def _quadrant_panel(d: Dashboard, population) -> list[str]:
    x0, y0, w, h = 20, 70, 450, 320
    out = _panel(x0, y0, w, h, "Market quadrant (log volume vs log price)")
    pts = [(float(a), float(b), float(c)) for a, b, c in population]
    if d.position is not None:
        pts_all = pts + [(d.position[0], d.position[1], d.waste_score)]
    else:
        pts_all = pts
    if not pts_all:
        out.append(f'<text x="{x0 + 20}" y="{y0 + 60}" font-size="12">no position data</text>')
        return out
    xs = [p[0] for p in pts_all]
    ys = [p[1] for p in pts_all]
    sx = _Scale(min(xs), max(xs), x0 + 40, x0 + w - 20)
    sy = _Scale(min(ys), max(ys), y0 + h - 30, y0 + 40)
    if d.thresholds is not None:
        tx, ty = sx(d.thresholds[0]), sy(d.thresholds[1])
        # scrap quadrant: high volume, low price
        out.append(f'<rect id="scrap-quadrant" x="{_f(tx)}" y="{_f(ty)}" '
                   f'width="{_f(x0 + w - 20 - tx)}" height="{_f(y0 + h - 30 - ty)}" '
                   f'fill="#ffebee"/>')
        out.append(f'<line x1="{_f(tx)}" y1="{y0 + 40}" x2="{_f(tx)}" y2="{y0 + h - 30}" '
                   f'stroke="#90a4ae" stroke-dasharray="4 3"/>')
        out.append(f'<line x1="{x0 + 40}" y1="{_f(ty)}" x2="{x0 + w - 20}" y2="{_f(ty)}" '
                   f'stroke="#90a4ae" stroke-dasharray="4 3"/>')
    for a, b, c in pts:
        out.append(f'<circle cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="{_f(1.5 + 5 * c)}" '
                   f'fill="#78909c" fill-opacity="0.5"/>')
    if d.position is not None:
        out.append(f'<circle id="product" cx="{_f(sx(d.position[0]))}" cy="{_f(sy(d.position[1]))}" '
                   f'r="8" fill="#d32f2f" stroke="#000000"/>')
    out.append(f'<text x="{x0 + w // 2}" y="{y0 + h - 8}" font-size="11" text-anchor="middle">'
               f'ln(1 + avg kg)</text>')
    return out


def _gauge(x, y, w, label, value, ident):
    filled = max(0.0, min(1.0, value)) * w
    return [
        f'<text x="{x}" y="{y - 8}" font-size="13">{escape(label)}</text>',
        f'<rect x="{x}" y="{y}" width="{w}" height="22" fill="#eceff1" stroke="#b0bec5"/>',
        f'<rect x="{x}" y="{y}" width="{_f(filled)}" height="22" fill="#e53935"/>',
        f'<text id="{ident}" x="{x + w + 10}" y="{y + 16}" font-size="16" font-weight="bold">'
        f'{_f(value)}</text>',
    ]


def _gauge_panel(d: Dashboard) -> list[str]:
    x0, y0, w, h = 490, 70, 450, 320
    out = _panel(x0, y0, w, h, "Risk scores")
    out += _gauge(x0 + 20, y0 + 60, 320, "Waste Score", d.waste_score, "waste-score")
    out += _gauge(x0 + 20, y0 + 130, 320, "Scrutiny Score", d.scrutiny_score, "scrutiny-score")
    out.append(f'<text x="{x0 + 20}" y="{y0 + 195}" font-size="13" font-weight="bold">'
               f'Top drivers (log-odds)</text>')
    for i, (name, val) in enumerate(d.shap_top):
        out.append(f'<text x="{x0 + 30}" y="{y0 + 218 + 20 * i}" font-size="12">'
                   f'{escape(name)}: {"+" if val >= 0 else ""}{_f(val)}</text>')
    flag = "yes" if d.dual_confirmed_outlier else "no"
    out.append(f'<text x="{x0 + 20}" y="{y0 + h - 15}" font-size="12">'
               f'Dual-confirmed outlier: {flag}</text>')
    return out


def _forecast_panel(d: Dashboard) -> list[str]:
    x0, y0, w, h = 20, 410, 450, 290
    out = _panel(x0, y0, w, h, "Unit price forecast (USD/kg)")
    fc = d.forecast
    if fc is None:
        out.append(f'<text x="{x0 + 20}" y="{y0 + 60}" font-size="12">no forecast</text>')
        return out
    series = list(fc.observed) + list(fc.path)
    years = [y for y, _ in series]
    vals = [v for _, v in series] + [0.0]
    sx = _Scale(min(years), max(years), x0 + 50, x0 + w - 20)
    sy = _Scale(min(vals), max(vals), y0 + h - 30, y0 + 40)
    zero = sy(0.0)
    if fc.negative_cross_year is not None:
        xs = sx(fc.negative_cross_year)
        out.append(f'<rect id="negative-region" data-from-year="{fc.negative_cross_year}" '
                   f'x="{_f(xs)}" y="{_f(zero)}" width="{_f(x0 + w - 20 - xs)}" '
                   f'height="{_f(y0 + h - 30 - zero)}" fill="#ffcdd2"/>')
    out.append(f'<line x1="{x0 + 50}" y1="{_f(zero)}" x2="{x0 + w - 20}" y2="{_f(zero)}" '
               f'stroke="#455a64"/>')
    if fc.observed:
        obs = " ".join(f"{_f(sx(y))},{_f(sy(v))}" for y, v in fc.observed)
        out.append(f'<polyline points="{obs}" fill="none" stroke="#1e88e5" stroke-width="2"/>')
    if fc.path:
        start = [fc.observed[-1]] if fc.observed else []
        pred = " ".join(f"{_f(sx(y))},{_f(sy(v))}" for y, v in start + list(fc.path))
        out.append(f'<polyline id="forecast-line" points="{pred}" fill="none" stroke="#e53935" '
                   f'stroke-width="2" stroke-dasharray="6 4"/>')
    for y in (min(years), max(years)):
        out.append(f'<text x="{_f(sx(y))}" y="{y0 + h - 10}" font-size="11" '
                   f'text-anchor="middle">{y}</text>')
    cross = "none" if fc.negative_cross_year is None else str(fc.negative_cross_year)
    out.append(f'<text x="{x0 + w - 20}" y="{y0 + 20}" font-size="11" text-anchor="end">'
               f'slope {_f(fc.slope)} /yr, negative from: {cross}</text>')
    return out


def _partner_panel(d: Dashboard) -> list[str]:
    x0, y0, w, h = 490, 410, 450, 290
    out = _panel(x0, y0, w, h, "Top trading partners")
    if not d.top_partners:
        return out
    top = max(c for _, c in d.top_partners) or 1
    for i, (partner, count) in enumerate(d.top_partners):
        y = y0 + 45 + 44 * i
        bw = 300 * count / top
        out.append(f'<text x="{x0 + 20}" y="{y + 17}" font-size="13">{escape(partner)}</text>')
        out.append(f'<rect x="{x0 + 70}" y="{y}" width="{_f(bw)}" height="24" fill="#5c6bc0"/>')
        label = str(count) if isinstance(count, int) else _f(count)
        out.append(f'<text x="{_f(x0 + 78 + bw)}" y="{y + 17}" font-size="12">{label}</text>')
    return out
