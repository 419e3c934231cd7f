"""Synthetic grasps, pose perturbation and dataset files."""

from datagen.dataset import GraspSample, load_dataset, make_dataset, save_dataset
from datagen.grasps import close_fingers, place_object, synth_grasps
from datagen.perturb import perturb

__all__ = [
    "GraspSample",
    "load_dataset",
    "make_dataset",
    "save_dataset",
    "close_fingers",
    "place_object",
    "synth_grasps",
    "perturb",
]
