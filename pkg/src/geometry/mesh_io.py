#!/usr/bin/env python3
"""
OBJ / PLY mesh loading and saving.

Files go through trimesh's exchange layer with processing disabled, so vertex
order and count are preserved exactly. Positions are millimeters; a scale
factor converts other units on load.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import trimesh

from errors import FileFormatError
from geometry.mesh import TriMesh

logger = logging.getLogger(__name__)

SUPPORTED_SUFFIXES = (".obj", ".ply")


def load_mesh(path: Union[str, Path], scale: float = 1.0) -> TriMesh:
    """
    Load a triangle mesh from OBJ or PLY.

    Args:
        path: mesh file
        scale: multiplier applied to positions (file units -> mm)

    Raises:
        FileFormatError: missing file, unsupported suffix or unreadable content
    """
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"Mesh file not found: {path}", path=str(path))
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise FileFormatError(f"Unsupported mesh format '{path.suffix}'", path=str(path))
    try:
        loaded = trimesh.load(str(path), force="mesh", process=False)
    except Exception as e:
        logger.error(f"Error reading mesh {path}: {e}")
        raise FileFormatError(f"Cannot parse mesh: {e}", path=str(path)) from e
    faces = np.asarray(loaded.faces)
    if faces.ndim != 2 or faces.shape[1] != 3 or len(faces) == 0:
        raise FileFormatError("Mesh has no triangle faces", path=str(path))
    vertices = np.asarray(loaded.vertices, dtype=np.float64) * float(scale)
    logger.info(f"Loaded mesh {path.name}: {len(vertices)} vertices, {len(faces)} faces")
    return TriMesh.from_arrays(vertices, faces)


def save_mesh(mesh: TriMesh, path: Union[str, Path]) -> Path:
    """Write the mesh as OBJ or ASCII PLY, chosen by suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in SUPPORTED_SUFFIXES:
        raise FileFormatError(f"Unsupported mesh format '{path.suffix}'", path=str(path))
    exported = trimesh.Trimesh(vertices=mesh.vertices, faces=mesh.faces, process=False)
    if suffix == ".ply":
        data = exported.export(file_type="ply", encoding="ascii")
    else:
        data = exported.export(file_type="obj", include_normals=False)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as f:
        f.write(data)
    return path
