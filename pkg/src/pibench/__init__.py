"""Pressure-injury risk prediction bench.

Daily EHR snapshots -> day-level features -> natively implemented models
(logistic regression, random forest, gradient-boosted trees) -> stay-level
evaluation against the Braden-scale baseline.
"""

__version__ = "0.1.0"
