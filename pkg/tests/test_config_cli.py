import json

import pytest

from wastesig import cli, config, pipeline


def test_defaults():
    cfg = config.load_config()
    assert cfg.report.tariffs == {"7204": 0.05, "8502": 0.0}
    assert cfg.segmentation.k_max == 10 and cfg.validation.n_trees == 25
    assert cfg.forecast.top == (6, 15) and cfg.forecast.horizon == 2030


def test_yaml_overrides_and_seed(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 7\nsegmentation:\n  k_max: 6\nreport:\n  tariffs:\n    '8542': 0.1\n"
                 "cleaning:\n  deflators: {2020: 1.1, 2021: 1, 2022: 1, 2023: 1, 2024: 1}\n")
    cfg = config.load_config(p)
    assert cfg.seed == 7 and cfg.segmentation.seed == 7 and cfg.validation.seed == 7
    assert cfg.segmentation.k_max == 6 and cfg.report.tariffs == {"8542": 0.1}
    assert cfg.cleaning.deflators[2020] == 1.1
    assert cfg.with_seed(3).segmentation.seed == 3


def test_bad_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("segmentation:\n  kmax: 6\n")
    with pytest.raises(config.ConfigError, match="unknown config key"):
        config.load_config(p)
    p.write_text("cleaning:\n  cap_low_pct: 0.9\n  cap_high_pct: 0.1\n")
    with pytest.raises(config.ConfigError):
        config.load_config(p)


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.csv"
    assert cli.main(["corpus", str(path)]) == 0
    return path


def test_cli_segment_and_validate(corpus_file, tmp_path, capsys):
    assert cli.main(["--out-dir", str(tmp_path), "segment", str(corpus_file), "--k", "5", "--format", "json"]) == 0
    data = json.loads((tmp_path / "segments.json").read_text())
    assert data["pass1_k"] == 5 and data["counts"]["Outlier"] == 3
    assert not (tmp_path / "segments.csv").exists()
    assert cli.main(["validate", str(corpus_file), "--trees", "5", "--depth", "4", "--seed", "3",
                     "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "out-of-bag accuracy" in out and "true \\ pred" in out


def test_cli_report_and_errors(corpus_file, tmp_path, capsys):
    assert cli.main(["report", str(corpus_file), "--hs", "720410", "--treemap", "--format", "svg",
                     "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "dashboards" / "720410.svg").exists()
    assert not (tmp_path / "dashboards" / "720410.json").exists()
    assert (tmp_path / "treemap.json").exists()
    assert cli.main(["report", str(corpus_file), "--hs", "999999", "--out-dir", str(tmp_path)]) == 2
    assert "not modeled" in capsys.readouterr().err
    assert cli.main(["report", str(corpus_file), "--out-dir", str(tmp_path)]) == 2


def test_cli_tab_input(corpus_file, tmp_path):
    tsv = tmp_path / "c.tsv"
    assert cli.main(["--tab", "corpus", str(tsv)]) == 0
    assert cli.main(["--tab", "features", "export", str(tsv), "--out-dir", str(tmp_path), "--format", "csv"]) == 0
    header = (tmp_path / "features.tsv").read_text().splitlines()[0]
    assert header.startswith("hs_code\tavg_kg\tavg_price")


def test_cli_score_labels_and_forecast(corpus_file, tmp_path):
    labels = tmp_path / "labels.yaml"
    labels.write_text("scrap_codes: ['7204', '8502']\nfinished_codes: ['8542']\n")
    assert cli.main(["score", str(corpus_file), "--labels", str(labels), "--l2", "0.01",
                     "--out-dir", str(tmp_path)]) == 0
    risk = json.loads((tmp_path / "risk.json").read_text())
    assert risk["model"]["l2_lambda"] == 0.01
    by_code = {p["hs_code"]: p for p in risk["profiles"]}
    assert by_code["850213"]["training_label"] == 1
    assert cli.main(["forecast", str(corpus_file), "--horizon", "2032", "--top", "3",
                     "--out-dir", str(tmp_path)]) == 0
    rows = (tmp_path / "forecast_top3.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[0].startswith("rank,hs_code,slope")


def test_cli_ingest(corpus_file, tmp_path, capsys):
    assert cli.main(["ingest", str(corpus_file), "--out-dir", str(tmp_path)]) == 0
    assert "200 series kept, 4 dropped" in capsys.readouterr().out
    data = json.loads((tmp_path / "series.json").read_text())
    assert len(data["series"]) == 200 and len(data["dropped"]) == 4
