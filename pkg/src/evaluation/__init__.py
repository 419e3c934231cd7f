"""Grasp metrics and reports."""

from evaluation.metrics import (
    contact_coverage,
    contact_precision_recall,
    distance_histogram,
    mpjpe,
    penetration_volume,
    precision_recall,
)
from evaluation.report import (
    MetricsReport,
    MetricsSummary,
    SampleMetrics,
    evaluate_batch,
    evaluate_sample,
    hand_contact_frequency,
    summarize,
)

__all__ = [
    "contact_coverage",
    "contact_precision_recall",
    "distance_histogram",
    "mpjpe",
    "penetration_volume",
    "precision_recall",
    "MetricsReport",
    "MetricsSummary",
    "SampleMetrics",
    "evaluate_batch",
    "evaluate_sample",
    "hand_contact_frequency",
    "summarize",
]
