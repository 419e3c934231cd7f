#!/usr/bin/env python3
"""
Per-sample metrics and their aggregation into before/after reports.

A report holds one row per (sample, stage). Stage "initial" scores the
perturbed input pose, "refined" the optimizer output. Aggregates are the mean
and population standard deviation of every metric per stage.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import MetricsConfig
from contact.capsule import ContactMap
from datagen.dataset import GraspSample
from errors import DimensionMismatch
from evaluation.metrics import (
    contact_coverage,
    contact_precision_recall,
    distance_histogram,
    histogram_edges,
    mpjpe,
    penetration_volume,
)
from geometry.mesh import TriMesh
from geometry.voxel import VoxelGrid, voxelize
from hand.model import HandModel, HandParams, pose_hand
from hand.synthetic import synthetic_hand

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("intersection_volume_cm3", "mpjpe_mm", "coverage_pct", "precision_pct", "recall_pct")
METRIC_TITLES = {
    "intersection_volume_cm3": "Intersection vol. (cm^3)",
    "mpjpe_mm": "MPJPE (mm)",
    "coverage_pct": "Coverage (%)",
    "precision_pct": "Contact precision (%)",
    "recall_pct": "Contact recall (%)",
}
STAGE_ORDER = ("initial", "refined")


@dataclass(frozen=True)
class SampleMetrics:
    sample: int
    stage: str
    intersection_volume_cm3: float
    mpjpe_mm: float
    coverage_pct: float
    precision_pct: float
    recall_pct: float


@dataclass(frozen=True)
class MetricsSummary:
    """Mean and population std of every metric for one stage."""

    stage: str
    count: int
    mean: Dict[str, float]
    std: Dict[str, float]


@dataclass(frozen=True, eq=False)
class MetricsReport:
    rows: List[SampleMetrics]
    summaries: List[MetricsSummary]
    histograms: Dict[str, List[int]] = field(default_factory=dict)
    histogram_edges: List[float] = field(default_factory=list)

    def summary(self, stage: str) -> MetricsSummary:
        for summary in self.summaries:
            if summary.stage == stage:
                return summary
        raise KeyError(f"No '{stage}' rows in report")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=["sample", "stage", *METRIC_COLUMNS])

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "summary": {s.stage: {"count": s.count, "mean": s.mean, "std": s.std} for s in self.summaries},
            "samples": [asdict(row) for row in self.rows],
        }
        if self.histograms:
            payload["distance_histogram"] = {"edges_mm": self.histogram_edges, "counts": self.histograms}
        return payload

    def to_markdown(self, precision: int = 2) -> str:
        """Table with one row per stage, cells 'mean ± std'."""
        header = ["Stage", *(METRIC_TITLES[c] for c in METRIC_COLUMNS)]
        lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
        for s in self.summaries:
            cells = [f"{s.mean[c]:.{precision}f} ± {s.std[c]:.{precision}f}" for c in METRIC_COLUMNS]
            lines.append("| " + " | ".join([f"{s.stage} (n={s.count})", *cells]) + " |")
        return "\n".join(lines) + "\n"

    def write(self, directory: Union[str, Path], stem: str = "metrics", float_format: str = "%.6f") -> Dict[str, Path]:
        """Write `<stem>.json`, `<stem>.csv` (per sample) and `<stem>.md`."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {
            "json": directory / f"{stem}.json",
            "csv": directory / f"{stem}.csv",
            "markdown": directory / f"{stem}.md",
        }
        with open(paths["json"], "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        self.to_frame().to_csv(paths["csv"], index=False, float_format=float_format)
        paths["markdown"].write_text(self.to_markdown(), encoding="utf-8")
        logger.info(f"Wrote metrics report ({len(self.rows)} rows) to {directory}")
        return paths


def evaluate_hand(
    hand: TriMesh,
    keypoints: np.ndarray,
    object_mesh: TriMesh,
    true_keypoints: np.ndarray,
    gt_contact: ContactMap,
    cfg: MetricsConfig,
    sample: int = 0,
    stage: str = "initial",
    object_grid: Optional[VoxelGrid] = None,
) -> SampleMetrics:
    precision, recall = contact_precision_recall(hand, object_mesh, gt_contact, cfg)
    return SampleMetrics(
        sample=sample,
        stage=stage,
        intersection_volume_cm3=penetration_volume(hand, object_mesh, cfg, object_grid),
        mpjpe_mm=mpjpe(keypoints, true_keypoints),
        coverage_pct=contact_coverage(hand, object_mesh, cfg),
        precision_pct=precision,
        recall_pct=recall,
    )


def evaluate_sample(
    model: HandModel,
    object_mesh: TriMesh,
    params: HandParams,
    true_params: HandParams,
    gt_contact: ContactMap,
    cfg: MetricsConfig,
    sample: int = 0,
    stage: str = "initial",
) -> SampleMetrics:
    """Metrics of the hand at `params` against the true pose and ground-truth object contact."""
    hand, keypoints = pose_hand(model, params)
    _, true_keypoints = pose_hand(model, true_params)
    return evaluate_hand(hand, keypoints, object_mesh, true_keypoints, gt_contact, cfg, sample, stage)


def summarize(rows: Sequence[SampleMetrics]) -> List[MetricsSummary]:
    """Per-stage mean and std (ddof 0), stages in initial/refined order."""
    if not rows:
        return []
    frame = pd.DataFrame([asdict(row) for row in rows])
    grouped = frame.groupby("stage", sort=False)[list(METRIC_COLUMNS)]
    means = grouped.mean()
    stds = grouped.std(ddof=0)
    counts = grouped.size()
    stages = [s for s in STAGE_ORDER if s in means.index] + [s for s in means.index if s not in STAGE_ORDER]
    return [
        MetricsSummary(
            stage=stage,
            count=int(counts[stage]),
            mean={c: float(means.at[stage, c]) for c in METRIC_COLUMNS},
            std={c: float(stds.at[stage, c]) for c in METRIC_COLUMNS},
        )
        for stage in stages
    ]


def _score_object_group(
    job: Tuple[MetricsConfig, HandModel, bool, List[Tuple[int, GraspSample, Optional[HandParams]]]]
) -> List[Tuple[int, List[SampleMetrics], Dict[str, np.ndarray]]]:
    """Score the samples that share one object; the object is voxelized once."""
    cfg, model, with_histograms, members = job
    object_grid = voxelize(members[0][1].object_mesh, cfg.voxel_size)
    scored = []
    for position, sample, refined in members:
        _, true_keypoints = pose_hand(model, sample.true_params)
        stages = [("initial", sample.perturbed_params)]
        if refined is not None:
            stages.append(("refined", refined))
        rows: List[SampleMetrics] = []
        counts: Dict[str, np.ndarray] = {}
        for stage, params in stages:
            hand, keypoints = pose_hand(model, params)
            rows.append(
                evaluate_hand(
                    hand,
                    keypoints,
                    sample.object_mesh,
                    true_keypoints,
                    sample.target_object_contact,
                    cfg,
                    sample=sample.sample_index,
                    stage=stage,
                    object_grid=object_grid,
                )
            )
            if with_histograms:
                _, counts[stage] = distance_histogram(hand, sample.object_mesh, cfg)
        scored.append((position, rows, counts))
    return scored


def evaluate_batch(
    samples: Sequence[GraspSample],
    results: Optional[Sequence[HandParams]],
    cfg: Optional[MetricsConfig] = None,
    model: Optional[HandModel] = None,
    with_histograms: bool = False,
    workers: int = 1,
) -> MetricsReport:
    """
    Score the perturbed pose of every sample and, when `results` is given,
    the refined pose aligned with it.

    With `workers` > 1, objects are scored on that many processes; rows keep
    sample order either way.

    Raises:
        DimensionMismatch: if results and samples differ in length
    """
    cfg = cfg or MetricsConfig()
    model = model or synthetic_hand()
    if results is not None and len(results) != len(samples):
        raise DimensionMismatch(f"{len(results)} results for {len(samples)} samples")

    groups: Dict[int, List[Tuple[int, GraspSample, Optional[HandParams]]]] = {}
    for position, sample in enumerate(samples):
        refined = results[position] if results is not None else None
        # samples perturbed from one grasp share its object mesh
        groups.setdefault(id(sample.object_mesh), []).append((position, sample, refined))
    jobs = [(cfg, model, with_histograms, members) for members in groups.values()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            scored = [item for group in pool.map(_score_object_group, jobs) for item in group]
    else:
        scored = [item for job in jobs for item in _score_object_group(job)]
    scored.sort(key=lambda item: item[0])

    rows = [row for _, sample_rows, _ in scored for row in sample_rows]
    histograms: Dict[str, np.ndarray] = {}
    for _, _, counts in scored:
        for stage, stage_counts in counts.items():
            histograms[stage] = histograms.get(stage, 0) + stage_counts
    edges = histogram_edges(cfg) if with_histograms and scored else None

    report = MetricsReport(
        rows=rows,
        summaries=summarize(rows),
        histograms={stage: counts.tolist() for stage, counts in histograms.items()},
        histogram_edges=edges.tolist() if edges is not None else [],
    )
    for s in report.summaries:
        logger.info(
            f"{s.stage}: MPJPE {s.mean['mpjpe_mm']:.2f} mm, recall {s.mean['recall_pct']:.1f}%, "
            f"intersection {s.mean['intersection_volume_cm3']:.2f} cm^3 over {s.count} samples"
        )
    return report


def hand_contact_frequency(hand_maps: Sequence[ContactMap], threshold: float = 0.4) -> pd.DataFrame:
    """
    Per hand vertex: mean contact value and fraction of maps at or above `threshold`.

    Raises:
        DimensionMismatch: if the maps differ in length
    """
    if not hand_maps:
        return pd.DataFrame(columns=["vertex", "mean_contact", "frequency"])
    lengths = {len(m) for m in hand_maps}
    if len(lengths) != 1:
        raise DimensionMismatch(f"Hand maps differ in length: {sorted(lengths)}")
    values = np.stack([m.values for m in hand_maps])
    return pd.DataFrame(
        {
            "vertex": np.arange(values.shape[1]),
            "mean_contact": values.mean(axis=0),
            "frequency": (values >= threshold).mean(axis=0),
        }
    )
