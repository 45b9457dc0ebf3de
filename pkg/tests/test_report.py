import json
import xml.dom.minidom

import numpy as np
import pytest

from conftest import make_series
from wastesig.forecast import forecast_price
from wastesig.ingest import TradeRecord
from wastesig.report import (
    CountryHotspot,
    Dashboard,
    NotModeledError,
    build_dashboard,
    country_hotspots,
    dashboard_json,
    lookup_tariff,
    render_svg,
    top_partners,
    treemap,
)
from wastesig.risk import RiskProfile
from wastesig.segmentation import SegmentAssignment


def _rec(code, partner, value=1.0):
    return TradeRecord(code, 2021, partner, "export", value, 1.0)


def _profile(code, score):
    return RiskProfile(code, score, {"avg_kg": 0.3, "avg_price": -0.7, "kg_trend": 0.1}, "HighVolLowPrice",
                       score / 2, 0.0)


def _seg(code, tier):
    return SegmentAssignment(code, 0, 0, False, tier, "isolated_pass1" if tier == "Outlier" else "core_pass2")


def test_top_partners_tie_by_iso3():
    recs = [_rec("850213", "JPN")] * 5 + [_rec("850213", "USA")] * 5 + [_rec("850213", "CHN")] * 2
    assert top_partners("850213", recs, 2) == [("JPN", 5), ("USA", 5)]
    weighted = top_partners("850213", recs + [_rec("850213", "CHN", 100.0)], 1, weight="value")
    assert weighted == [("CHN", 102.0)]


def test_tariff_lookup():
    table = {"7204": 0.05, "8502": 0.0, "720410": 0.02}
    assert lookup_tariff("720410", table) == 0.02
    assert lookup_tariff("720421", table) == 0.05
    assert lookup_tariff("850213", table) == 0.0
    assert lookup_tariff("392010", table) is None
    assert lookup_tariff("720410", None) is None


def _dashboard(code="850213", score=0.52, tariffs=None, cross=True):
    prices = {2020: 10, 2024: 2} if cross else {2020: 2, 2024: 3}
    fc = forecast_price(make_series(code, kg={2020: 1, 2024: 1}, prices=prices))
    return build_dashboard(code, {code: _profile(code, score)}, {code: _seg(code, "Core")}, {code: fc},
                           [_rec(code, "KOR"), _rec(code, "JPN")], tariffs=tariffs,
                           thresholds=(1.0, 1.0))


def test_build_dashboard_pass_through_and_unknown():
    d = _dashboard(tariffs={"8502": 0.0})
    assert d.waste_score == 0.52 and d.scrutiny_score == 0.26 and d.tariff_rate == 0.0
    assert d.shap_top[0] == ("avg_price", -0.7)
    assert d.top_partners == [("JPN", 1), ("KOR", 1)]
    with pytest.raises(NotModeledError, match="not modeled"):
        build_dashboard("999999", {}, {}, {}, [])


def test_svg_gauge_label_and_tariff():
    svg = render_svg(_dashboard(tariffs={"8502": 0.0}))
    assert ">0.5200<" in svg and "Tariff: 0%" in svg
    assert "Tariff: 5%" in render_svg(_dashboard("720410", tariffs={"7204": 0.05}))


def test_svg_valid_deterministic_self_contained():
    d = _dashboard()
    a, b = render_svg(d, [(1.0, 2.0, 0.3), (3.0, 0.5, 0.9)]), render_svg(d, [(1.0, 2.0, 0.3), (3.0, 0.5, 0.9)])
    assert a == b
    doc = xml.dom.minidom.parseString(a)
    root = doc.documentElement
    assert root.getAttribute("width") == "960" and root.getAttribute("height") == "720"
    assert "href" not in a and "url(" not in a


def test_svg_negative_region():
    svg = render_svg(_dashboard(cross=True))
    doc = xml.dom.minidom.parseString(svg)
    rects = [r for r in doc.getElementsByTagName("rect") if r.getAttribute("id") == "negative-region"]
    assert len(rects) == 1 and rects[0].getAttribute("data-from-year") == "2026"
    assert 'id="negative-region"' not in render_svg(_dashboard(cross=False))


def test_dashboard_json_roundtrip():
    d = _dashboard(tariffs={"8502": 0.0})
    text = dashboard_json(d)
    assert text == dashboard_json(d)
    data = json.loads(text)
    assert data["tariff_rate"] == 0.0 and data["waste_score"] == 0.52
    assert data["forecast"]["negative_cross_year"] == 2026


def test_hotspots_examples():
    profiles = [_profile("A00000", 0.2), _profile("B00000", 0.8), _profile("C00000", 0.9)]
    recs = [_rec("A00000", "JPN"), _rec("B00000", "JPN"), _rec("B00000", "JPN"), _rec("C00000", "USA")]
    spots = country_hotspots(profiles, recs)
    assert spots == [CountryHotspot("USA", 0.9, 1), CountryHotspot("JPN", 0.5, 2)]
    only_jpn = country_hotspots(profiles, [r for r in recs if r.partner == "JPN"])
    assert only_jpn == [CountryHotspot("JPN", 0.5, 2)]
    # unmodeled products are ignored
    assert country_hotspots(profiles, [_rec("Z00000", "DEU")]) == []


def test_treemap_examples():
    segs = ([_seg(f"{i:06d}", "Outlier") for i in range(3)] + [_seg(f"1{i:05d}", "HighValueNiche") for i in range(15)]
            + [_seg(f"2{i:05d}", "Core") for i in range(40)] + [_seg(f"3{i:05d}", "SuperCore") for i in range(142)])
    data = treemap(segs)
    assert [(t.tier, t.count) for t in data] == [("Outlier", 3), ("HighValueNiche", 15), ("Core", 40),
                                                 ("SuperCore", 142)]
    assert [t.share for t in data] == pytest.approx([0.015, 0.075, 0.2, 0.71])
    assert abs(sum(t.share for t in data) - 1) < 1e-9
    one = treemap([_seg("1", "Core")] * 4)
    assert [t.share for t in one] == [0.0, 0.0, 1.0, 0.0]
    with pytest.raises(ValueError, match="nothing to report"):
        treemap([])
