import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import make_series
from oracles import hand_ols_slope
from wastesig.features import (
    CORE_FEATURES,
    EXTENDED_FEATURES,
    FeatureVector,
    InsufficientHistory,
    compute_all,
    compute_features,
    ols_line,
    resolve_feature_set,
    standardize,
)

YEARS = [2020, 2021, 2022]


def test_constant_price():
    fv = compute_features(make_series("392010", kg={y: 1 for y in YEARS}, prices={y: 10 for y in YEARS}))
    assert fv.avg_price == 10 and fv.price_volatility == 0 and fv.price_trend == 0


def test_exact_kg_line():
    fv = compute_features(make_series("392010", kg={2020: 100, 2021: 200, 2022: 300},
                                      prices={y: 1 for y in YEARS}))
    assert fv.kg_trend == pytest.approx(100.0) and fv.avg_kg == pytest.approx(200.0)


def test_hand_ols_price_trend():
    fv = compute_features(make_series("392010", kg={y: 1 for y in YEARS},
                                      prices={2020: 4, 2021: 1, 2022: 1}))
    # x - xbar = -1, 0, 1 ; y - ybar = 2, -1, -1 -> (-2 + 0 - 1) / 2
    assert fv.price_trend == pytest.approx(-1.5, abs=1e-12)
    assert fv.price_trend == pytest.approx(hand_ols_slope(YEARS, [4, 1, 1]), abs=1e-12)
    assert fv.price_volatility == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_insufficient_history():
    s = make_series("392010", kg={2020: 1, 2021: 0}, prices={2020: 1, 2021: 1})
    with pytest.raises(InsufficientHistory, match="insufficient history"):
        compute_features(s)
    vecs, excluded = compute_all([s])
    assert vecs == [] and excluded == {"392010": "insufficient history"}


def test_two_point_low_confidence():
    fv = compute_features(make_series("392010", kg={2020: 1, 2024: 5}, prices={2020: 10, 2024: 2}))
    assert fv.low_confidence and fv.price_trend == pytest.approx(-2.0)


def test_derived_terms():
    fv = FeatureVector("392010", 99.0, math.e - 1, 0.0, 3.0, -2.0)
    assert fv.log_avg_kg == pytest.approx(math.log(100))
    assert fv.log_avg_price == pytest.approx(1.0)
    assert fv.ix_logkg_logprice == pytest.approx(math.log(100))
    assert fv.ix_trends == -6.0
    assert list(fv.to_dict())[1:len(EXTENDED_FEATURES) + 1] == list(EXTENDED_FEATURES)
    with pytest.raises(KeyError):
        fv.get("nope")


def _vecs(col):
    return [FeatureVector(f"39{i:04d}", v, 1.0, 0.0, 0.0, 0.0) for i, v in enumerate(col)]


def test_standardize_examples():
    m = standardize(_vecs([1.0, 3.0]), ["avg_kg"])
    assert m.values[:, 0].tolist() == [-1.0, 1.0]
    m = standardize(_vecs([5.0, 5.0, 5.0]), ["avg_kg", "avg_price"])
    assert np.all(m.values == 0) and m.constant == ["avg_kg", "avg_price"]
    m = standardize(_vecs([2.0, 4.0, 6.0]), ["avg_kg"])
    assert m.means[0] == 4.0 and m.stds[0] == pytest.approx(math.sqrt(8 / 3))
    assert m.values[:, 0] == pytest.approx([-1.2247, 0.0, 1.2247], abs=1e-4)


def test_standardize_needs_two():
    with pytest.raises(ValueError):
        standardize(_vecs([1.0]))


def test_resolve_feature_set():
    assert resolve_feature_set("core") == CORE_FEATURES
    assert resolve_feature_set("extended") == EXTENDED_FEATURES
    with pytest.raises(ValueError):
        resolve_feature_set("bogus")


finite = st.floats(-1e4, 1e4, allow_nan=False)


@settings(max_examples=80)
@given(st.lists(finite, min_size=2, max_size=30), st.floats(0.01, 100), st.floats(-1e3, 1e3))
def test_standardize_column_properties(col, a, b):
    assume(np.std(col) > 1e-6 * max(1.0, np.max(np.abs(col))))
    m = standardize(_vecs(col), ["avg_kg"])
    z = m.values[:, 0]
    assert abs(z.mean()) < 1e-9
    assert abs(z.std() - 1) < 1e-9
    # round trip
    back = m.inverse()[:, 0]
    assert np.allclose(back, col, rtol=1e-9, atol=1e-9 * max(1.0, np.max(np.abs(col))))
    # affine invariance
    m2 = standardize(_vecs([a * x + b for x in col]), ["avg_kg"])
    assert np.allclose(m2.values[:, 0], z, atol=1e-6)


@settings(max_examples=60)
@given(st.lists(st.floats(0.1, 1e3), min_size=5, max_size=5), st.lists(st.floats(1.0, 1e5), min_size=5, max_size=5),
       st.integers(-50, 50), st.floats(0.1, 10))
def test_trend_shift_and_volatility_scale(prices, kgs, shift, c):
    years = list(range(2020, 2025))
    base = compute_features(make_series("392010", kg=dict(zip(years, kgs)), prices=dict(zip(years, prices))))
    moved = compute_features(make_series("392010", kg={y + shift: k for y, k in zip(years, kgs)},
                                         prices={y + shift: p for y, p in zip(years, prices)}))
    assert moved.kg_trend == pytest.approx(base.kg_trend, rel=1e-9, abs=1e-9)
    assert moved.price_trend == pytest.approx(base.price_trend, rel=1e-9, abs=1e-9)
    scaled = compute_features(make_series("392010", kg=dict(zip(years, kgs)),
                                          prices={y: c * p for y, p in zip(years, prices)}))
    assert scaled.price_volatility == pytest.approx(c * base.price_volatility, rel=1e-9, abs=1e-12)


def test_ols_line_errors():
    with pytest.raises(ValueError):
        ols_line([1], [1])
    with pytest.raises(ValueError):
        ols_line([1, 1], [1, 2])


def test_subset_restandardizes():
    m = standardize(_vecs([1.0, 2.0, 3.0, 100.0]), ["avg_kg"])
    sub = m.subset(np.array([True, True, True, False]))
    assert sub.rows == m.rows[:3]
    assert sub.values[:, 0] == pytest.approx([-1.2247, 0.0, 1.2247], abs=1e-4)
    assert m.transform(_vecs([4.0]))[0, 0] == pytest.approx((4.0 - m.means[0]) / m.stds[0])
