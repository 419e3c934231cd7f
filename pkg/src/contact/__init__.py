"""Capsule contact model, target sources and point features."""

from contact.capsule import (
    ContactCorrespondence,
    ContactMap,
    ContactResult,
    capsule_distance,
    contact_maps,
    contact_maps_grad,
    contact_value,
)
from contact.targets import (
    FromReferencePose,
    GroundTruthFile,
    ObjectOnly,
    PointFeatures,
    PrecomputedMaps,
    ResolvedTargets,
    dequantize_contact,
    extract_features,
    quantize_contact,
    resolve_targets,
)

__all__ = [
    "ContactCorrespondence",
    "ContactMap",
    "ContactResult",
    "capsule_distance",
    "contact_maps",
    "contact_maps_grad",
    "contact_value",
    "FromReferencePose",
    "GroundTruthFile",
    "ObjectOnly",
    "PointFeatures",
    "PrecomputedMaps",
    "ResolvedTargets",
    "dequantize_contact",
    "extract_features",
    "quantize_contact",
    "resolve_targets",
]
