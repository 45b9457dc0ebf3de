"""
A risk dashboard for one scrap product
======================================

Render the dashboard for HS 720410 as JSON and SVG.
"""

import tempfile
from pathlib import Path

from wastesig import config, pipeline, report, synthetic

res = pipeline.run_pipeline(synthetic.make_trade_corpus(42).to_csv(), config.load_config(), until="validate")

d = pipeline.dashboard_for(res, "720410")
print(report.dashboard_json(d))

out = Path(tempfile.mkdtemp()) / "720410.svg"
out.write_text(report.render_svg(d, pipeline.population(res)), encoding="utf-8")
print("wrote", out)

# countries ranked by the mean waste score of what they receive
for h in report.country_hotspots(res.profiles, res.records)[:5]:
    print(h.partner, round(h.mean_waste_score, 3), h.n_products)
