#!/usr/bin/env python3
"""
Refinement datasets: perturbed poses paired with their true pose and the
contact maps of the true pose.

On disk a dataset is a directory:

    manifest.json            format tag, hand model name, perturbation config, samples
    objects/object_0000.obj  one mesh per source grasp
    samples/0000_true.json   true hand parameters
    samples/0000_perturbed.json
    samples/0000_contact.json  object and hand target maps
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import CapsuleConfig, PerturbConfig
from contact.capsule import ContactMap, contact_maps
from contact.io import load_contact_maps, save_contact_maps
from datagen.perturb import perturb
from errors import DimensionMismatch, FileFormatError
from geometry.mesh import TriMesh
from geometry.mesh_io import load_mesh, save_mesh
from hand.model import HandModel, HandParams, pose_hand
from hand.model_io import load_params, save_params
from hand.synthetic import synthetic_hand

logger = logging.getLogger(__name__)

DATASET_FORMAT = "grasp-dataset"
DATASET_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True, eq=False)
class GraspSample:
    object_mesh: TriMesh
    true_params: HandParams
    perturbed_params: HandParams
    target_object_contact: ContactMap
    target_hand_contact: ContactMap
    grasp_index: int = 0
    sample_index: int = 0
    object_path: Optional[str] = None

    def __post_init__(self):
        if len(self.target_object_contact) != self.object_mesh.n_vertices:
            raise DimensionMismatch(
                f"Sample {self.sample_index}: object target has {len(self.target_object_contact)} values "
                f"for {self.object_mesh.n_vertices} vertices"
            )


def make_dataset(
    grasps: Sequence[Tuple[TriMesh, HandParams]],
    cfg: PerturbConfig,
    model: Optional[HandModel] = None,
    capsule: Optional[CapsuleConfig] = None,
) -> List[GraspSample]:
    """
    `cfg.n_perturbations_per_grasp` samples per grasp.

    Targets are the contact maps at the true pose. Sample k (counted across
    the whole dataset) draws its noise from default_rng([cfg.seed, k]).
    """
    model = model or synthetic_hand()
    capsule = capsule or CapsuleConfig()
    samples: List[GraspSample] = []
    for grasp_index, (object_mesh, true_params) in enumerate(grasps):
        hand, _ = pose_hand(model, true_params)
        targets = contact_maps(object_mesh, hand, capsule)
        for _ in range(cfg.n_perturbations_per_grasp):
            sample_index = len(samples)
            rng = np.random.default_rng([cfg.seed, sample_index])
            samples.append(
                GraspSample(
                    object_mesh=object_mesh,
                    true_params=true_params,
                    perturbed_params=perturb(true_params, cfg, rng),
                    target_object_contact=targets.object_map,
                    target_hand_contact=targets.hand_map,
                    grasp_index=grasp_index,
                    sample_index=sample_index,
                )
            )
    logger.info(f"Built {len(samples)} samples from {len(grasps)} grasps")
    return samples


def save_dataset(
    samples: Sequence[GraspSample],
    directory: Union[str, Path],
    hand_model_name: str = "synthetic-hand",
    perturb_cfg: Optional[PerturbConfig] = None,
) -> Path:
    """Write samples under `directory` (created if needed) and return the manifest path."""
    directory = Path(directory)
    (directory / "objects").mkdir(parents=True, exist_ok=True)
    (directory / "samples").mkdir(parents=True, exist_ok=True)

    written: Dict[int, str] = {}
    entries: List[Dict[str, Any]] = []
    for position, sample in enumerate(samples):
        if sample.grasp_index not in written:
            relative = f"objects/object_{sample.grasp_index:04d}.obj"
            save_mesh(sample.object_mesh, directory / relative)
            written[sample.grasp_index] = relative
        stem = f"samples/{position:04d}"
        save_params(sample.true_params, directory / f"{stem}_true.json")
        save_params(sample.perturbed_params, directory / f"{stem}_perturbed.json")
        save_contact_maps(
            [sample.target_object_contact, sample.target_hand_contact], directory / f"{stem}_contact.json"
        )
        entries.append(
            {
                "index": position,
                "grasp": sample.grasp_index,
                "object": written[sample.grasp_index],
                "true_params": f"{stem}_true.json",
                "perturbed_params": f"{stem}_perturbed.json",
                "contact": f"{stem}_contact.json",
            }
        )

    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "hand_model": hand_model_name,
        "perturb": perturb_cfg.model_dump() if perturb_cfg is not None else None,
        "samples": entries,
    }
    path = directory / MANIFEST_NAME
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    logger.info(f"Saved {len(entries)} samples to {directory}")
    return path


def _read_manifest(directory: Path) -> Dict[str, Any]:
    path = directory / MANIFEST_NAME
    if not path.is_file():
        raise FileFormatError(f"Dataset manifest not found: {path}", path=str(path))
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"Cannot parse dataset manifest: {e}", path=str(path)) from e
    if manifest.get("format") != DATASET_FORMAT or manifest.get("version") != DATASET_VERSION:
        raise FileFormatError(
            f"Not a dataset manifest (format {manifest.get('format')!r}, version {manifest.get('version')!r})",
            path=str(path),
        )
    return manifest


def load_dataset(directory: Union[str, Path]) -> List[GraspSample]:
    """
    Read a dataset directory written by save_dataset.

    Raises:
        FileFormatError: missing manifest, sample file or contact map
        DimensionMismatch: target maps that do not fit their object mesh
    """
    directory = Path(directory)
    manifest = _read_manifest(directory)
    meshes: Dict[str, TriMesh] = {}
    samples: List[GraspSample] = []
    for entry in manifest.get("samples", []):
        try:
            object_rel = entry["object"]
            true_rel, perturbed_rel, contact_rel = entry["true_params"], entry["perturbed_params"], entry["contact"]
        except KeyError as e:
            raise FileFormatError(f"Manifest entry missing key {e}", path=str(directory / MANIFEST_NAME)) from e
        if object_rel not in meshes:
            meshes[object_rel] = load_mesh(directory / object_rel)
        maps = load_contact_maps(directory / contact_rel)
        if set(maps) != {"object", "hand"}:
            raise FileFormatError("Sample contact file needs object and hand maps", path=str(directory / contact_rel))
        samples.append(
            GraspSample(
                object_mesh=meshes[object_rel],
                true_params=load_params(directory / true_rel),
                perturbed_params=load_params(directory / perturbed_rel),
                target_object_contact=maps["object"],
                target_hand_contact=maps["hand"],
                grasp_index=int(entry.get("grasp", 0)),
                sample_index=int(entry.get("index", len(samples))),
                object_path=str(directory / object_rel),
            )
        )
    logger.info(f"Loaded {len(samples)} samples from {directory}")
    return samples
