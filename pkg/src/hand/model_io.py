#!/usr/bin/env python3
"""
Hand model files.

Two containers carry the same content:

* `.json`: a header (format tag, joint tree, dimensions) plus an `arrays`
  object with nested lists.
* `.npz`: the header serialized as a JSON string under the `header` key,
  each array stored natively next to it.

Hand parameters are stored separately as small JSON files.

Arrays: vertices (V,3), faces (F,3), joints_rest (J,3), skinning_weights
(V,J), pose_basis (3J,K), pose_mean (3J,), optional shape_basis (V,3,S) and
flexion_axes (J,3). Every invariant of HandModel is checked on load.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from errors import FileFormatError, HandModelError, InvalidParameters
from geometry.mesh import TriMesh
from hand.model import HandModel, HandParams

logger = logging.getLogger(__name__)

FORMAT_TAG = "grasp-hand-model"
FORMAT_VERSION = 1
_REQUIRED_ARRAYS = ("vertices", "faces", "joints_rest", "skinning_weights", "pose_basis", "pose_mean")


def _header(model: HandModel) -> Dict[str, Any]:
    return {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "name": model.name,
        "joint_names": list(model.joint_names),
        "parents": model.parents.tolist(),
        "n_vertices": model.n_vertices,
        "n_pose": model.n_pose,
        "n_shape": model.n_shape,
        "tip_vertices": list(model.tip_vertices),
    }


def _arrays(model: HandModel) -> Dict[str, np.ndarray]:
    arrays = {
        "vertices": model.rest_mesh.vertices,
        "faces": model.rest_mesh.faces,
        "joints_rest": model.joints_rest,
        "skinning_weights": model.skinning_weights,
        "pose_basis": model.pose_basis,
        "pose_mean": model.pose_mean,
    }
    if model.shape_basis is not None:
        arrays["shape_basis"] = model.shape_basis
    if model.flexion_axes is not None:
        arrays["flexion_axes"] = model.flexion_axes
    return arrays


def save_hand_model(model: HandModel, path: Union[str, Path]) -> Path:
    """Write the model as `.json` or `.npz` (chosen by suffix)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _header(model)
    arrays = _arrays(model)
    suffix = path.suffix.lower()
    if suffix == ".json":
        header["arrays"] = {key: value.tolist() for key, value in arrays.items()}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(header, f)
    elif suffix == ".npz":
        np.savez(path, header=np.array(json.dumps(header)), **arrays)
    else:
        raise FileFormatError(f"Unsupported hand model format '{path.suffix}'", path=str(path))
    logger.info(f"Saved hand model '{model.name}' to {path}")
    return path


def load_hand_model(path: Union[str, Path]) -> HandModel:
    """
    Read and validate a hand model file.

    Raises:
        FileFormatError: missing file, unknown container or malformed content
        HandModelError: content violating the model invariants
    """
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"Hand model file not found: {path}", path=str(path))
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            with open(path, "r", encoding="utf-8") as f:
                header = json.load(f)
            raw = header.pop("arrays", {})
            arrays = {key: np.asarray(value, dtype=np.float64) for key, value in raw.items()}
        elif suffix == ".npz":
            with np.load(path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                arrays = {key: np.asarray(data[key]) for key in data.files if key != "header"}
        else:
            raise FileFormatError(f"Unsupported hand model format '{path.suffix}'", path=str(path))
    except (OSError, ValueError, KeyError) as e:
        logger.error(f"Error reading hand model {path}: {e}")
        raise FileFormatError(f"Cannot parse hand model: {e}", path=str(path)) from e

    if header.get("format") != FORMAT_TAG:
        raise FileFormatError(f"Not a hand model file (format tag {header.get('format')!r})", path=str(path))
    if header.get("version") != FORMAT_VERSION:
        raise FileFormatError(f"Unsupported hand model version {header.get('version')}", path=str(path))
    if "parents" not in header:
        raise FileFormatError("Hand model header has no joint tree ('parents')", path=str(path))
    missing = [key for key in _REQUIRED_ARRAYS if key not in arrays]
    if missing:
        raise FileFormatError(f"Hand model is missing arrays {missing}", path=str(path))

    try:
        model = _build(header, arrays)
    except HandModelError as e:
        e.path = str(path)
        logger.error(f"Invalid hand model {path}: {e}")
        raise
    logger.info(f"Loaded hand model '{model.name}': {model.n_vertices} vertices, {model.n_joints} joints")
    return model


def _build(header: Dict[str, Any], arrays: Dict[str, np.ndarray]) -> HandModel:
    vertices = arrays["vertices"]
    if "n_vertices" in header and len(vertices) != header["n_vertices"]:
        raise HandModelError(f"Header declares {header['n_vertices']} vertices, arrays hold {len(vertices)}")
    pose_basis = arrays["pose_basis"]
    if pose_basis.ndim != 2:
        raise HandModelError(f"pose_basis must be 2-D, got shape {pose_basis.shape}")
    if "n_pose" in header and pose_basis.shape[1] != header["n_pose"]:
        raise HandModelError(f"Header declares {header['n_pose']} pose coefficients, basis has {pose_basis.shape[1]}")
    shape_basis = arrays.get("shape_basis")
    if shape_basis is not None and "n_shape" in header and shape_basis.shape[-1] != header["n_shape"]:
        raise HandModelError(
            f"Header declares {header['n_shape']} shape coefficients, basis has {shape_basis.shape[-1]}"
        )
    return HandModel(
        rest_mesh=TriMesh.from_arrays(vertices, arrays["faces"].astype(np.int64)),
        joints_rest=arrays["joints_rest"],
        parents=np.asarray(header["parents"], dtype=np.int64),
        skinning_weights=arrays["skinning_weights"],
        pose_basis=pose_basis,
        pose_mean=arrays["pose_mean"],
        shape_basis=shape_basis,
        joint_names=tuple(header.get("joint_names", ())),
        flexion_axes=arrays.get("flexion_axes"),
        tip_vertices=tuple(header.get("tip_vertices", ())),
        name=header.get("name", "hand"),
    )


def save_params(params: HandParams, path: Union[str, Path]) -> Path:
    """Write hand parameters as JSON {theta, beta, translation, rotation}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(params.to_dict(), f, indent=2)
    return path


def load_params(path: Union[str, Path]) -> HandParams:
    """
    Read hand parameters from JSON.

    Raises:
        FileFormatError: missing or unparsable file
        InvalidParameters: missing keys, wrong sizes or non-finite values
    """
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"Parameter file not found: {path}", path=str(path))
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, ValueError) as e:
        raise FileFormatError(f"Cannot parse parameters: {e}", path=str(path)) from e
    if not isinstance(data, dict):
        raise FileFormatError("Parameter file must hold a JSON object", path=str(path))
    try:
        return HandParams.from_dict(data)
    except InvalidParameters as e:
        e.path = str(path)
        raise
