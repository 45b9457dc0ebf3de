"""Run configuration loaded from YAML on top of the bundled defaults."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .features import resolve_feature_set
from .ingest import CleaningConfig, CleaningConfigError
from .risk import LabelConfig
from .segmentation import SegmentConfig
from .validation import ForestParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InputConfig:
    delimiter: str = ","
    flow: str = "export"
    aliases: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RiskConfig:
    labels: LabelConfig = field(default_factory=LabelConfig)
    l2_lambda: float = 1e-3
    max_iter: int = 100
    tol: float = 1e-8


@dataclass(frozen=True)
class ForecastConfig:
    horizon: int = 2030
    top: tuple = (6, 15)


@dataclass(frozen=True)
class ReportConfig:
    top_partners: int = 5
    partner_weight: str = "count"
    tariffs: dict = field(default_factory=dict)


@dataclass
class Config:
    seed: int
    input: InputConfig
    cleaning: CleaningConfig
    feature_set: tuple
    segmentation: SegmentConfig
    risk: RiskConfig
    forecast: ForecastConfig
    validation: ForestParams
    report: ReportConfig

    def with_seed(self, seed: int) -> "Config":
        """Copy with ``seed`` applied to every seeded stage."""
        out = copy.deepcopy(self)
        out.seed = int(seed)
        out.segmentation = replace(out.segmentation, seed=int(seed))
        out.validation = replace(out.validation, seed=int(seed))
        return out


def default_dict() -> dict:
    text = resources.files("wastesig").joinpath("data/default.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = dict(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(val, dict) and key not in ("tariffs", "deflators", "aliases"):
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def from_dict(raw: Optional[dict] = None) -> Config:
    d = _merge(default_dict(), raw or {})
    seed = int(d["seed"])
    try:
        c = d["cleaning"]
        cleaning = CleaningConfig(
            window=tuple(c["window"]),
            max_gap_interp=int(c["max_gap_interp"]),
            max_missing_fraction=float(c["max_missing_fraction"]),
            deflators={int(k): float(v) for k, v in (c["deflators"] or {}).items()},
            cap_low_pct=float(c["cap_low_pct"]),
            cap_high_pct=float(c["cap_high_pct"]),
        )
    except CleaningConfigError as exc:
        raise ConfigError(str(exc)) from exc
    s = d["segmentation"]
    seg = SegmentConfig(seed=seed, **s)
    r = d["risk"]
    labels = LabelConfig(frozenset(map(str, r["scrap_codes"])), frozenset(map(str, r["finished_codes"])))
    top = d["forecast"]["top"]
    top = (int(top),) if isinstance(top, int) else tuple(int(t) for t in top)
    v = d["validation"]
    rep = d["report"]
    if rep["partner_weight"] not in ("count", "value"):
        raise ConfigError(f"report.partner_weight must be count or value, got {rep['partner_weight']!r}")
    inp = d["input"]
    return Config(
        seed=seed,
        input=InputConfig(str(inp["delimiter"]), str(inp["flow"]),
                          {k: list(v) for k, v in (inp["aliases"] or {}).items()}),
        cleaning=cleaning,
        feature_set=resolve_feature_set(d["features"]["set"]),
        segmentation=seg,
        risk=RiskConfig(labels, float(r["l2_lambda"]), int(r["max_iter"]), float(r["tol"])),
        forecast=ForecastConfig(int(d["forecast"]["horizon"]), top),
        validation=ForestParams(int(v["n_trees"]), int(v["max_depth"]), int(v["min_leaf"]),
                                v["max_features"], seed),
        report=ReportConfig(int(rep["top_partners"]), rep["partner_weight"],
                            {str(k): float(x) for k, x in (rep["tariffs"] or {}).items()}),
    )


def load_config(path: Optional[str | Path] = None) -> Config:
    """Defaults, overlaid with the YAML file at ``path`` if given."""
    if path is None:
        return from_dict({})
    with open(path, encoding="utf-8") as fh:
        raw: Any = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(raw)
