"""Seeded synthetic corpora with a known four-tier structure.

``make_trade_corpus`` writes raw trade records for 200 exported products:
3 extreme outliers, 15 high-price niche products, 40 core (bulk, low price,
falling price) and 142 super-core products. Scrap exemplars (7204xx) sit in
the core block, finished exemplars (8542xx) in the niche block, and one
generator code (850213) is given a scrap-like trade pattern. A few sparse
codes and some import flows are added to exercise the cleaning steps.

``tier_blobs`` generates the same tier geometry directly in feature space.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ingest import TradeRecord

YEARS = tuple(range(2020, 2025))
EAST_ASIA = ("JPN", "KOR", "CHN")
OTHER_PARTNERS = ("USA", "DNK", "DEU", "SGP", "THA", "NLD")
SCRAP_CODES = ("720410", "720421", "720429", "720430", "720441", "720449", "720450", "720490")
FINISHED_CODES = ("854231", "854232", "854233", "854239", "854290", "854210")
DISGUISED_CODE = "850213"
CORE_CODES = (
    "840410", "840420", "844010", "844090", "847010", "847021", "847029", "847030",
    "847050", "847090", "847310", "847321", "847329", "847330", "847340", "847350",
    "847410", "847420", "847610", "847621", "847629", "847681", "847689", "852210",
    "852290", "847130", "847141", "847149", "847150", "847160", "847170",
)
NICHE_CODES = ("710812", "710813", "711011", "711019", "711021", "711029", "810520", "810530",
               "810320")
OUTLIER_CODES = {"854911": "surge", "854912": "surge", "840110": "erratic"}
SPARSE_CODES = ("391990", "392099", "848180", "853890")


@dataclass(frozen=True)
class ProductSpec:
    hs_code: str
    tier: str
    kg: tuple
    price: tuple
    partners: tuple
    role: Optional[str] = None
    years: tuple = YEARS


@dataclass
class TradeCorpus:
    records: list
    truth: dict
    roles: dict
    specs: list = field(default_factory=list)

    def to_csv(self, delimiter: str = ",") -> str:
        return records_to_csv(self.records, delimiter)


def records_to_csv(records, delimiter: str = ",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(["hs_code", "year", "partner", "flow", "value", "mass", "mass_unit"])
    for r in records:
        w.writerow([r.hs_code, r.year, r.partner, r.flow, repr(r.value_usd), repr(r.mass), r.mass_unit])
    return buf.getvalue()


def _super_core_codes(n: int) -> list[str]:
    codes = [f"39{h:02d}{s:02d}" for h in range(1, 27) for s in range(10, 100, 10)]
    return codes[:n]


def _linear(level, slope, noise, rng):
    t = np.arange(len(YEARS)) - 2.0
    return level + slope * t + rng.normal(0.0, noise, size=t.size)


def _partners(rng, east_bias: bool) -> tuple:
    k = int(rng.integers(2, 5))
    if east_bias:
        pool = list(EAST_ASIA) + [str(p) for p in rng.choice(OTHER_PARTNERS, 1)]
        picked = pool[:k] if k <= len(pool) else pool
    else:
        everyone = EAST_ASIA + OTHER_PARTNERS
        picked = [everyone[i] for i in sorted(rng.choice(len(everyone), size=k, replace=False))]
    return tuple(dict.fromkeys(picked))


def _specs(rng: np.random.Generator) -> list[ProductSpec]:
    specs = []

    for code in _super_core_codes(142):
        kg = _linear(5e4 * np.exp(rng.normal(0, 0.08)), rng.normal(0, 500), 300, rng)
        price = _linear(5.0 * np.exp(rng.normal(0, 0.08)), rng.normal(0, 0.01), 0.02, rng)
        specs.append(ProductSpec(code, "SuperCore", tuple(kg), tuple(price), _partners(rng, False)))

    core_codes = list(SCRAP_CODES) + [DISGUISED_CODE] + list(CORE_CODES)
    for code in core_codes:
        kg = _linear(5e5 * np.exp(rng.normal(0, 0.08)), rng.normal(5e3, 2e3), 2e3, rng)
        price = _linear(1.0 * np.exp(rng.normal(0, 0.08)), rng.normal(-0.15, 0.015), 0.02, rng)
        role = "scrap" if code in SCRAP_CODES else "disguised" if code == DISGUISED_CODE else None
        specs.append(ProductSpec(code, "Core", tuple(kg), tuple(price), _partners(rng, True), role))

    for code in list(FINISHED_CODES) + list(NICHE_CODES):
        kg = _linear(2e3 * np.exp(rng.normal(0, 0.08)), rng.normal(0, 50), 30, rng)
        price = _linear(200.0 * np.exp(rng.normal(0, 0.002)), rng.normal(0.25, 0.1), 0.3, rng)
        role = "finished" if code in FINISHED_CODES else None
        specs.append(ProductSpec(code, "HighValueNiche", tuple(kg), tuple(price),
                                 _partners(rng, False), role))

    for code, kind in OUTLIER_CODES.items():
        if kind == "surge":
            kg = np.array([2e4, 1.5e5, 3e5, 4.5e5, 6e5]) * np.exp(rng.normal(0, 0.02, 5))
            price = _linear(3.0, -0.3, 0.05, rng)
        else:
            kg = _linear(1e3, 0.0, 10.0, rng)
            price = np.array([10.0, 400.0, 10.0, 400.0, 10.0])
        specs.append(ProductSpec(code, "Outlier", tuple(kg), tuple(price), _partners(rng, True)))

    for code in SPARSE_CODES:
        years = tuple(sorted(int(y) for y in rng.choice(YEARS, size=2, replace=False)))
        kg = _linear(5e4, 0.0, 300, rng)
        price = _linear(5.0, 0.0, 0.05, rng)
        specs.append(ProductSpec(code, "Sparse", tuple(kg), tuple(price), _partners(rng, False),
                                 years=years))
    return specs


def _records_for(spec: ProductSpec, rng: np.random.Generator, flow: str = "export",
                 scale: float = 1.0, skip_year: Optional[int] = None) -> list[TradeRecord]:
    out = []
    weights = rng.dirichlet(np.full(len(spec.partners), 3.0))
    for i, year in enumerate(YEARS):
        if year not in spec.years or year == skip_year:
            continue
        total_kg = float(spec.kg[i]) * scale
        price = float(spec.price[i])
        for partner, w in zip(spec.partners, weights):
            kg = total_kg * float(w)
            value = kg * price
            unit, mass = "kg", kg
            if spec.tier == "Core" and rng.random() < 0.3:
                unit, mass = "tonne", kg / 1000.0
            elif spec.tier == "HighValueNiche" and rng.random() < 0.2:
                unit, mass = "gram", kg * 1000.0
            out.append(TradeRecord(spec.hs_code, year, partner, flow, value, mass, unit))
    return out


def make_trade_corpus(seed: int = 42) -> TradeCorpus:
    """Raw records plus ground-truth tiers and label roles for the modeled products."""
    rng = np.random.default_rng(seed)
    specs = _specs(rng)
    records = []
    gap_products = {s.hs_code for s in specs if s.tier == "SuperCore"}
    gap_products = set(sorted(gap_products)[::20])
    for spec in specs:
        skip = 2022 if spec.hs_code in gap_products else None
        records.extend(_records_for(spec, rng, skip_year=skip))
    for spec in specs[:10]:
        records.extend(_records_for(spec, rng, flow="import", scale=0.4))
    truth = {s.hs_code: s.tier for s in specs if s.tier != "Sparse"}
    roles = {s.hs_code: s.role for s in specs if s.role}
    return TradeCorpus(records, truth, roles, specs)


def tier_blobs(seed: int = 0, dims: int = 5, price_col: int = 1):
    """Points in feature space with 3 far outliers and niche/core/super-core blobs.

    Returns ``(points, tiers)``; the niche blob is high on ``price_col``.
    """
    rng = np.random.default_rng(seed)
    centers = {
        "SuperCore": np.zeros(dims),
        "Core": np.zeros(dims),
        "HighValueNiche": np.zeros(dims),
    }
    centers["Core"][0] = 3.0
    centers["HighValueNiche"][price_col] = 3.0
    blocks, tiers = [], []
    for name, n, spread in (("HighValueNiche", 15, 0.15), ("Core", 40, 0.15), ("SuperCore", 142, 0.15)):
        blocks.append(centers[name] + rng.normal(0, spread, size=(n, dims)))
        tiers += [name] * n
    outliers = np.zeros((3, dims))
    outliers[0, 0] = 10.0 * 3.0
    outliers[1, 2] = 10.0 * 3.0
    outliers[2, 3 % dims] = -10.0 * 3.0
    blocks.insert(0, outliers)
    tiers = ["Outlier"] * 3 + tiers
    return np.vstack(blocks), tiers
