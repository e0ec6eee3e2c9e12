"""Covariate shift detection for dense classifiers.

Builds activation-graph difference features from a trained network,
compares a candidate sample set against a clean reference with
per-coordinate two-sample KS tests under a Bonferroni correction, and
estimates test power over parameterized image corruptions.
"""

__version__ = "0.1.0"
