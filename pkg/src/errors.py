#!/usr/bin/env python3
"""
Exception hierarchy for the grasp contact refiner.

Every failure raised by the library derives from GraspRefinerError so the
CLI can map it to a structured message and an exit code.
"""

from typing import Any, Dict, Optional


class GraspRefinerError(Exception):
    """Base class for all library errors."""

    exit_code = 1

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.path = path

    def to_dict(self) -> Dict[str, Any]:
        """Structured form printed by the CLI."""
        payload: Dict[str, Any] = {
            "error": self.__class__.__name__,
            "message": self.message,
        }
        if self.path is not None:
            payload["path"] = str(self.path)
        return payload


class MeshError(GraspRefinerError):
    """Invalid mesh topology or geometry."""


class DegenerateFace(MeshError):
    """A triangle has (near) zero area."""


class NotWatertight(MeshError):
    """Some edge is not shared by exactly two faces."""


class EmptyMesh(MeshError):
    """A mesh without vertices was given where points are required."""


class DimensionMismatch(GraspRefinerError):
    """Array or parameter sizes do not agree."""


class StaleCorrespondence(GraspRefinerError):
    """A correspondence was computed for different meshes than the ones given."""


class NonFiniteLoss(GraspRefinerError):
    """The objective evaluated to NaN or infinity."""


class HandModelError(GraspRefinerError):
    """A hand model file violates the model invariants."""

    exit_code = 2


class FileFormatError(GraspRefinerError):
    """An input file is missing or cannot be parsed."""

    exit_code = 2


class ConfigError(GraspRefinerError):
    """Configuration values are missing or invalid."""

    exit_code = 2


class OutputExistsError(GraspRefinerError):
    """The output directory exists and --force was not given."""

    exit_code = 2


class InvalidParameters(GraspRefinerError):
    """Hand parameters contain non-finite entries or have wrong sizes."""

    exit_code = 2


class InvalidContactMap(GraspRefinerError):
    """Contact values outside [0, 1], non-finite, or tagged with an unknown mesh."""

    exit_code = 2
