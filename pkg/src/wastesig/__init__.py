"""Trade-data analytics for spotting e-waste shipped under finished-goods codes.

Stages: ``ingest`` (parse and clean records), ``features`` (per-product
signatures), ``segmentation`` (outlier-aware tiering), ``risk`` (Waste Score,
attributions, quadrants), ``forecast`` (price extrapolation), ``validation``
(tier recoverability) and ``report`` (dashboards, hotspots, treemap).
"""
__version__ = "0.1.0"
