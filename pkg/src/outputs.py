#!/usr/bin/env python3
"""
Output directories and run manifests.

Every command writes into one directory that must not exist yet (or be
empty) unless --force is given. JSON files are written to a temporary file
in the same directory and renamed into place, so a reader never sees a
partial manifest.
"""

import json
import logging
import os
import platform
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

from config import TOOL_VERSION
from errors import OutputExistsError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "run_manifest.json"


def write_json_atomic(data: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class OutputDirectory:
    """Directory that receives one command's outputs."""

    def __init__(self, path: Union[str, Path], force: bool = False):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.path = Path(path)
        self.force = force

    def prepare(self) -> Path:
        """
        Create the directory.

        Raises:
            OutputExistsError: if it already holds files and force is off
        """
        if self.path.exists():
            if not self.path.is_dir():
                raise OutputExistsError(f"Output path exists and is not a directory: {self.path}", path=str(self.path))
            if any(self.path.iterdir()) and not self.force:
                raise OutputExistsError(
                    f"Output directory {self.path} is not empty (use --force to overwrite)", path=str(self.path)
                )
            if self.force:
                self.logger.warning(f"Writing into existing directory {self.path}")
        self.path.mkdir(parents=True, exist_ok=True)
        return self.path

    def file(self, name: str) -> Path:
        return self.path / name


@dataclass
class RunManifest:
    """What produced an output directory: command, inputs, config, seed, version and timings."""

    command: str
    inputs: Dict[str, Optional[str]]
    config: Dict[str, Any]
    seed: int
    tool_version: str = TOOL_VERSION
    python_version: str = field(default_factory=platform.python_version)
    timings: Dict[str, float] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)

    def time(self, stage: str, started: float) -> None:
        self.timings[stage] = round(time.perf_counter() - started, 3)

    def write(self, directory: Union[str, Path]) -> Path:
        path = write_json_atomic(asdict(self), Path(directory) / MANIFEST_NAME)
        logger.debug(f"Wrote run manifest {path}")
        return path
