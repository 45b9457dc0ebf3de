"""End-to-end orchestration and deterministic output writing.

``run_pipeline`` runs the stages in order up to ``until`` and returns every
intermediate artifact. ``write_*`` helpers turn artifacts into CSV/JSON
files; floats are written with ``repr`` so two runs on the same input give
byte-identical files.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import features as feat
from . import forecast as fc
from . import ingest, report, risk, segmentation, validation
from .config import Config

logger = logging.getLogger(__name__)

STAGES = ("ingest", "features", "segment", "score", "forecast", "validate", "report")


@dataclass
class PipelineResult:
    config: Config
    records: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    cleaning: Optional[ingest.CleaningResult] = None
    vectors: list = field(default_factory=list)
    excluded: dict = field(default_factory=dict)
    matrix: Optional[feat.StandardizedMatrix] = None
    segmentation: Optional[segmentation.SegmentationResult] = None
    model: Optional[risk.WasteModel] = None
    trendline: Optional[risk.TrendlineFit] = None
    profiles: list = field(default_factory=list)
    forecasts: list = field(default_factory=list)
    forecast_skipped: dict = field(default_factory=dict)
    forest: Optional[validation.Forest] = None

    @property
    def features_by_code(self) -> dict:
        return {v.hs_code: v for v in self.vectors}

    @property
    def profiles_by_code(self) -> dict:
        return {p.hs_code: p for p in self.profiles}

    @property
    def assignments_by_code(self) -> dict:
        return {a.hs_code: a for a in self.segmentation.assignments} if self.segmentation else {}

    @property
    def forecasts_by_code(self) -> dict:
        return {f.hs_code: f for f in self.forecasts}


def run_pipeline(content: bytes | str, config: Config, until: str = "report") -> PipelineResult:
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}")
    last = STAGES.index(until)
    res = PipelineResult(config)
    flow = config.input.flow

    rejected: list = []
    res.records = ingest.parse_records(content, delimiter=config.input.delimiter,
                                       aliases=config.input.aliases,
                                       window=config.cleaning.window, rejected=rejected)
    res.cleaning = ingest.clean(res.records, config.cleaning, flow=flow)
    res.rejected = rejected + res.cleaning.rejected
    logger.info("ingest: %d records, %d rejected, %d series kept, %d dropped",
                len(res.records), len(res.rejected), len(res.cleaning.series), len(res.cleaning.dropped))
    if last < 1:
        return res

    res.vectors, res.excluded = feat.compute_all(res.cleaning.series)
    res.matrix = feat.standardize(res.vectors, config.feature_set)
    if last < 2:
        return res

    res.segmentation = segmentation.iterative_segment(res.matrix, config.segmentation)
    if last < 3:
        return res

    X, y, _ = risk.build_training_set(res.matrix, config.risk.labels)
    res.model = risk.fit_logistic(X, y, l2_lambda=config.risk.l2_lambda, max_iter=config.risk.max_iter,
                                  tol=config.risk.tol, feature_names=res.matrix.columns)
    modeled = [res.features_by_code[c] for c in res.matrix.rows]
    res.trendline = risk.fit_trendline(modeled)
    res.profiles = risk.score_products(res.model, res.matrix, modeled, config.risk.labels, res.trendline)
    if last < 4:
        return res

    res.forecasts, res.forecast_skipped = fc.forecast_all(res.cleaning.series, config.forecast.horizon)
    if last < 5:
        return res

    res.forest = validation.fit_forest(res.matrix.values, res.segmentation.tiers(),
                                       config.validation, keys=res.matrix.rows)
    return res


# ---------------------------------------------------------------- writers

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_text(rows: Sequence[dict], columns: Sequence[str], delimiter: str = ",") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


class OutputWriter:
    """Writes named artifacts to ``out_dir`` as CSV and/or JSON."""

    def __init__(self, out_dir: str | Path, fmt: str = "both", delimiter: str = ","):
        if fmt not in ("csv", "json", "svg", "both"):
            raise ValueError(f"unknown format {fmt!r}")
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.delimiter = delimiter
        self.written: list[Path] = []

    def _write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
        self.written.append(path)
        return path

    @property
    def tables(self) -> bool:
        return self.fmt in ("csv", "both")

    @property
    def json(self) -> bool:
        # svg-only runs still get JSON for the non-graphical artifacts
        return self.fmt in ("json", "svg", "both")

    @property
    def svg(self) -> bool:
        return self.fmt in ("svg", "both")

    def table(self, stem: str, rows: Sequence[dict], columns: Sequence[str], payload=None):
        if self.tables:
            ext = "tsv" if self.delimiter == "\t" else "csv"
            self._write(f"{stem}.{ext}", table_text(rows, columns, self.delimiter))
        if self.json:
            self._write(f"{stem}.json", report.dumps(payload if payload is not None else list(rows)))

    def text(self, name: str, text: str):
        return self._write(name, text)


def write_ingest(res: PipelineResult, w: OutputWriter):
    kept = res.cleaning.series
    w.table("series", ingest.series_rows(kept), ingest.SERIES_COLUMNS,
            {"series": [s.to_dict() for s in kept],
             "dropped": sorted(s.hs_code for s in res.cleaning.dropped),
             "rejected": [{"line": r.line, "reason": r.reason} for r in res.rejected]})


FEATURE_COLUMNS = ("hs_code",) + feat.EXTENDED_FEATURES + ("n_years", "low_confidence")


def write_features(res: PipelineResult, w: OutputWriter):
    rows = [v.to_dict() for v in res.vectors]
    w.table("features", rows, [c for c in FEATURE_COLUMNS if not rows or c in rows[0]],
            {"features": rows, "excluded": res.excluded, "columns": list(res.matrix.columns),
             "constant_columns": [c for c, k in zip(res.matrix.columns, res.matrix.constant) if k]})


SEGMENT_COLUMNS = ("hs_code", "tier", "kmeans_cluster", "dbscan_label", "dual_confirmed_outlier", "pass")


def write_segments(res: PipelineResult, w: OutputWriter):
    seg = res.segmentation
    rows = [a.to_dict() for a in seg.assignments]
    w.table("segments", rows, SEGMENT_COLUMNS, {
        "assignments": rows,
        "pass1_k": seg.pass1_k, "pass1_wcss": list(seg.pass1_curve),
        "pass2_k": seg.pass2_k, "pass2_wcss": list(seg.pass2_curve),
        "eps": seg.eps, "outlier_threshold": seg.outlier_threshold,
        "counts": seg.counts(),
    })


RISK_COLUMNS = ("hs_code", "waste_score", "scrutiny_score", "quadrant", "trendline_residual",
                "shap_1", "shap_1_value", "shap_2", "shap_2_value", "shap_3", "shap_3_value",
                "training_label")


def _risk_row(p: risk.RiskProfile) -> dict:
    row = p.to_dict()
    for i, (name, val) in enumerate(p.top_shap(3), start=1):
        row[f"shap_{i}"], row[f"shap_{i}_value"] = name, val
    return row


def write_scores(res: PipelineResult, w: OutputWriter):
    w.table("risk", [_risk_row(p) for p in res.profiles], RISK_COLUMNS, {
        "model": res.model.to_dict(),
        "trendline": {"slope": res.trendline.slope, "intercept": res.trendline.intercept,
                      "r_squared": res.trendline.r_squared, "n": res.trendline.n},
        "profiles": [p.to_dict() for p in res.profiles],
    })


FORECAST_COLUMNS = ("rank", "hs_code", "slope", "intercept", "negative_cross_year", "horizon_year",
                    "horizon_price")


def write_forecasts(res: PipelineResult, w: OutputWriter, top: Iterable[int]):
    for n in top:
        ranked = fc.rank_downtrends(res.forecasts, n)
        rows = [{"rank": i, "hs_code": f.hs_code, "slope": f.slope, "intercept": f.intercept,
                 "negative_cross_year": f.negative_cross_year, "horizon_year": f.horizon_year,
                 "horizon_price": f.path[-1][1]} for i, f in enumerate(ranked, start=1)]
        w.table(f"forecast_top{n}", rows, FORECAST_COLUMNS,
                {"top": n, "forecasts": [f.to_dict() for f in ranked]})
    if w.json:
        w.text("forecast_all.json", report.dumps({
            "forecasts": [f.to_dict() for f in res.forecasts], "skipped": res.forecast_skipped}))


def validation_summary(res: PipelineResult) -> dict:
    tiers = res.segmentation.tiers()
    acc, conf, labels = validation.evaluate(res.forest, res.matrix.values, tiers, list(res.forest.classes))
    oob_pred = res.forest.oob_predictions or []
    seen = [(t, p) for t, p in zip(tiers, oob_pred) if p is not None]
    _, oob_conf, _ = validation.score_predictions([p for _, p in seen], [t for t, _ in seen], labels)
    return {
        "training_accuracy": acc,
        "oob_accuracy": res.forest.oob_accuracy,
        "oob_coverage": res.forest.oob_coverage,
        "labels": labels,
        "training_confusion": conf.tolist(),
        "oob_confusion": oob_conf.tolist(),
        "n_trees": res.forest.params.n_trees,
        "max_depth": res.forest.params.max_depth,
        "seed": res.forest.params.seed,
    }


def format_confusion(labels: Sequence[str], confusion) -> str:
    width = max(len(s) for s in labels) + 2
    lines = ["true \\ pred".ljust(width) + "".join(s.rjust(width) for s in labels)]
    for lab, row in zip(labels, confusion):
        lines.append(lab.ljust(width) + "".join(str(int(v)).rjust(width) for v in row))
    return "\n".join(lines)


def write_validation(res: PipelineResult, w: OutputWriter) -> dict:
    summary = validation_summary(res)
    rows = [{"hs_code": c, "tier": t, "oob_prediction": p}
            for c, t, p in zip(res.matrix.rows, res.segmentation.tiers(), res.forest.oob_predictions)]
    w.table("validation", rows, ("hs_code", "tier", "oob_prediction"), summary)
    return summary


def dashboard_for(res: PipelineResult, hs_code: str) -> report.Dashboard:
    cfg = res.config.report
    modeled = [res.features_by_code[c] for c in res.matrix.rows]
    return report.build_dashboard(
        hs_code, res.profiles_by_code, res.assignments_by_code, res.forecasts_by_code, res.records,
        tariffs=cfg.tariffs, features=res.features_by_code,
        thresholds=risk.quadrant_thresholds(modeled), n_partners=cfg.top_partners,
        partner_weight=cfg.partner_weight, flow=res.config.input.flow,
    )


def population(res: PipelineResult) -> list[tuple]:
    scores = res.profiles_by_code
    fv = res.features_by_code
    return [(fv[c].log_avg_kg, fv[c].log_avg_price, scores[c].waste_score) for c in res.matrix.rows]


def write_dashboard(res: PipelineResult, w: OutputWriter, hs_code: str, subdir: str = "dashboards"):
    d = dashboard_for(res, hs_code)
    if w.fmt != "svg":
        w.text(f"{subdir}/{hs_code}.json", report.dashboard_json(d))
    if w.svg:
        w.text(f"{subdir}/{hs_code}.svg", report.render_svg(d, population(res)))
    return d


def write_hotspots(res: PipelineResult, w: OutputWriter):
    spots = report.country_hotspots(res.profiles, res.records, flow=res.config.input.flow)
    rows = [h.to_dict() for h in spots]
    w.table("hotspots", rows, ("partner", "mean_waste_score", "n_products"), {"hotspots": rows})


def write_treemap(res: PipelineResult, w: OutputWriter):
    data = [t.to_dict() for t in report.treemap(res.segmentation.assignments)]
    w.table("treemap", data, ("tier", "count", "share"), {"treemap": data})


def write_all(res: PipelineResult, w: OutputWriter) -> dict:
    write_ingest(res, w)
    write_features(res, w)
    write_segments(res, w)
    write_scores(res, w)
    write_forecasts(res, w, res.config.forecast.top)
    summary = write_validation(res, w)
    for code in res.matrix.rows:
        write_dashboard(res, w, code)
    write_hotspots(res, w)
    write_treemap(res, w)
    return summary
