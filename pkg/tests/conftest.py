"""Shared fixtures: published benchmark rates and their solved count fixtures."""

from __future__ import annotations

import pytest

from fairlens.fairness import ConfusionCounts
from fairlens.synthetic import (
    RateTargets,
    build_confusion_manifest,
    build_table_fixture_counts,
)

# Published per-group rates of the pretrained detector benchmark (accuracy,
# FPR, FNR, PPV) and of the same benchmark after retraining on the balanced
# dataset. These are the cells the fixture replay must reproduce.
BASELINE_RATES = {
    "Asian": RateTargets(0.91, 0.07, 0.05, 0.78),
    "Indian": RateTargets(0.95, 0.04, 0.08, 0.93),
    "Black": RateTargets(0.92, 0.08, 0.04, 0.82),
    "White": RateTargets(0.97, 0.005, 0.14, 0.98),
}
RETRAINED_RATES = {
    "Asian": RateTargets(0.96, 0.01, 0.05, 0.93),
    "Indian": RateTargets(0.95, 0.01, 0.03, 0.92),
    "Black": RateTargets(0.97, 0.008, 0.04, 0.94),
    "White": RateTargets(0.98, 0.005, 0.04, 0.98),
}

# Regression pins: the solver is deterministic, so its output is frozen here.
# If the solver changes behavior these pins catch it.
PINNED_BASELINE_COUNTS = {
    "Asian": ConfusionCounts(tp=231, fp=64, fn=16, tn=689),
    "Black": ConfusionCounts(tp=271, fp=56, fn=11, tn=662),
    "Indian": ConfusionCounts(tp=255, fp=19, fn=22, tn=704),
    "White": ConfusionCounts(tp=160, fp=4, fn=24, tn=812),
}
PINNED_RETRAINED_COUNTS = {
    "Asian": ConfusionCounts(tp=245, fp=18, fn=13, tn=724),
    "Black": ConfusionCounts(tp=143, fp=7, fn=8, tn=842),
    "Indian": ConfusionCounts(tp=293, fp=24, fn=17, tn=666),
    "White": ConfusionCounts(tp=191, fp=4, fn=11, tn=794),
}


@pytest.fixture(scope="session")
def table_counts():
    return build_table_fixture_counts(BASELINE_RATES, RETRAINED_RATES)


@pytest.fixture(scope="session")
def table_datasets(table_counts):
    before_counts, after_counts = table_counts
    before = build_confusion_manifest("rfw-baseline", before_counts, taxonomy="rfw")
    after = build_confusion_manifest("rfw-retrained", after_counts, taxonomy="rfw")
    return before, after
