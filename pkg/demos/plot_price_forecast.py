"""
Forecasting a falling unit price
================================

A straight line through two observed years is enough to see when a
price would cross zero.
"""

from wastesig.forecast import forecast_price
from wastesig.ingest import ProductSeries, SeriesPoint

# unit price falls from 10 in 2020 to 2 in 2024
points = (SeriesPoint(2020, 10.0, 1.0, 10.0), SeriesPoint(2024, 2.0, 1.0, 2.0))
series = ProductSeries("854231", points, missing_fraction=0.0)

f = forecast_price(series, horizon_year=2030)
print("slope per year:", f.slope)
print("first negative year:", f.negative_cross_year)
for year in range(2025, 2031):
    print(year, f.predict(year))
