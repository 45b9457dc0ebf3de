import numpy as np
import pytest

from wastesig import config, pipeline, synthetic
from wastesig.ingest import ProductSeries, SeriesPoint


def make_series(code, kg=None, prices=None, values=None, flow="export", missing=0.0, interpolated=()):
    """Series from year->kg and year->price (or year->value) maps."""
    kg = kg or {}
    years = sorted(set(kg) | set(prices or {}) | set(values or {}))
    pts = []
    for y in years:
        k = float(kg.get(y, 1.0))
        if values is not None:
            v = float(values[y])
        else:
            v = float(prices[y]) * k
        pts.append(SeriesPoint(y, v, k, v / k if k > 0 else None))
    return ProductSeries(code, tuple(pts), missing, frozenset(interpolated), flow)


@pytest.fixture(scope="session")
def corpus():
    return synthetic.make_trade_corpus(42)


@pytest.fixture(scope="session")
def corpus_bytes(corpus):
    return corpus.to_csv().encode("utf-8")


@pytest.fixture(scope="session")
def corpus_run(corpus_bytes):
    return pipeline.run_pipeline(corpus_bytes, config.load_config(), until="validate")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
