#!/usr/bin/env python3
"""
Contact map and point-feature files.

Contact maps are JSON `{"mesh": "hand"|"object", "values": [...]}`; several
maps go in one file as `{"maps": [...]}`. CSV files use the columns
`mesh, vertex, value`. Point features are tables with one named column per
feature, written as CSV or as JSON (`{"columns": [...], "rows": [[...]]}`).
"""

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterable, Union

import numpy as np
import pandas as pd

from contact.capsule import ContactMap
from errors import FileFormatError, InvalidContactMap

if TYPE_CHECKING:
    from contact.targets import PointFeatures

logger = logging.getLogger(__name__)


def save_contact_maps(
    maps: Iterable[ContactMap], path: Union[str, Path], float_format: str = "%.6f"
) -> Path:
    """Write one or more maps as JSON or CSV, chosen by suffix."""
    path = Path(path)
    maps = list(maps)
    path.parent.mkdir(parents=True, exist_ok=True)
    suffix = path.suffix.lower()
    if suffix == ".json":
        payload = maps[0].to_dict() if len(maps) == 1 else {"maps": [m.to_dict() for m in maps]}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)
    elif suffix == ".csv":
        frame = pd.concat(
            [
                pd.DataFrame({"mesh": m.which_mesh, "vertex": np.arange(len(m)), "value": m.values})
                for m in maps
            ],
            ignore_index=True,
        )
        frame.to_csv(path, index=False, float_format=float_format)
    else:
        raise FileFormatError(f"Unsupported contact map format '{path.suffix}'", path=str(path))
    return path


def load_contact_maps(path: Union[str, Path]) -> Dict[str, ContactMap]:
    """
    Read a contact map file into {"object": map, "hand": map} (either may be absent).

    Raises:
        FileFormatError: missing or unparsable file, or two maps for one mesh
    """
    path = Path(path)
    if not path.is_file():
        raise FileFormatError(f"Contact map file not found: {path}", path=str(path))
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            entries = data["maps"] if "maps" in data else [data]
            maps = [ContactMap.from_dict(entry) for entry in entries]
        elif suffix == ".csv":
            frame = pd.read_csv(path)
            maps = [
                ContactMap(values=group.sort_values("vertex")["value"].to_numpy(), which_mesh=str(mesh))
                for mesh, group in frame.groupby("mesh", sort=True)
            ]
        else:
            raise FileFormatError(f"Unsupported contact map format '{path.suffix}'", path=str(path))
    except (ValueError, KeyError, TypeError, InvalidContactMap) as e:
        logger.error(f"Error reading contact map {path}: {e}")
        raise FileFormatError(f"Cannot parse contact map: {e}", path=str(path)) from e

    result: Dict[str, ContactMap] = {}
    for contact_map in maps:
        if contact_map.which_mesh in result:
            raise FileFormatError(f"Two '{contact_map.which_mesh}' maps in one file", path=str(path))
        result[contact_map.which_mesh] = contact_map
    logger.debug(f"Loaded contact maps {sorted(result)} from {path}")
    return result


def save_features(features: "PointFeatures", path: Union[str, Path], float_format: str = "%.6f") -> Path:
    """Write point features as CSV or JSON with a header naming every column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = features.to_frame()
    suffix = path.suffix.lower()
    if suffix == ".csv":
        frame.to_csv(path, index=False, float_format=float_format)
    elif suffix == ".json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"columns": list(frame.columns), "rows": frame.values.tolist()}, f)
    else:
        raise FileFormatError(f"Unsupported feature format '{path.suffix}'", path=str(path))
    logger.info(f"Wrote {len(frame)} feature rows to {path}")
    return path
