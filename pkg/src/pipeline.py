#!/usr/bin/env python3
"""
Grasp refinement pipeline.

Coordinates the library for the command-line surface: loads inputs, runs the
contact model, optimizer, dataset tools and metrics, and writes one output
directory per command together with its run manifest.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import RunConfig, RuntimeConfig
from contact.capsule import contact_maps
from contact.io import save_contact_maps, save_features
from contact.targets import (
    ResolvedTargets,
    extract_features,
    parse_target_spec,
    quantize_contact,
    resolve_targets,
)
from datagen.dataset import GraspSample, load_dataset, make_dataset, save_dataset
from datagen.grasps import synth_grasps
from errors import ConfigError, OutputExistsError
from evaluation.report import MetricsReport, evaluate_batch, hand_contact_frequency
from geometry.mesh import TriMesh
from geometry.mesh_io import load_mesh, save_mesh
from hand.model import HandModel, HandParams, pose_hand
from hand.model_io import load_hand_model, load_params, save_hand_model, save_params
from hand.synthetic import synthetic_hand
from optimization.optimizer import OptimResult, optimize
from outputs import OutputDirectory, RunManifest, write_json_atomic

logger = logging.getLogger(__name__)


def subsample_object(
    object_mesh: TriMesh, targets: ResolvedTargets, n_samples: Optional[int], seed: int
) -> Tuple[TriMesh, ResolvedTargets]:
    """
    Seeded vertex subset of the object (as a point set with normals) and its targets.

    None, or a count not below the vertex count, keeps every vertex.
    """
    if n_samples is None or n_samples >= object_mesh.n_vertices:
        return object_mesh, targets
    if n_samples < 1:
        raise ConfigError(f"--object-samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(object_mesh.n_vertices, size=n_samples, replace=False))
    points, normals = object_mesh.submesh_vertices(indices)
    cloud = TriMesh(vertices=points, faces=np.zeros((0, 3), dtype=np.int64), vertex_normals=normals)
    return cloud, targets.subset_object(indices)


def refine_with_config(
    model: HandModel,
    run_config: RunConfig,
    object_mesh: TriMesh,
    init: HandParams,
    targets: ResolvedTargets,
    object_samples: Optional[int] = None,
) -> OptimResult:
    """Run the optimizer with the loss, optim and capsule sections of `run_config`."""
    mesh, sub_targets = subsample_object(object_mesh, targets, object_samples, run_config.optim.seed)
    return optimize(model, mesh, init, sub_targets, run_config.loss, run_config.optim, run_config.capsule)


def _refine_sample(job: Tuple[HandModel, RunConfig, GraspSample, Optional[int]]) -> OptimResult:
    model, run_config, sample, object_samples = job
    targets = ResolvedTargets(object_map=sample.target_object_contact, hand_map=sample.target_hand_contact)
    logger.info(f"Optimizing sample {sample.sample_index}")
    return refine_with_config(model, run_config, sample.object_mesh, sample.perturbed_params, targets, object_samples)


def _init_worker(level: int) -> None:
    if not logging.getLogger().handlers:
        logging.basicConfig(level=level)


class GraspRefinementPipeline:
    """
    Runs the refinement commands.

    The hand model is injected, or loaded from a model file; with neither
    the bundled synthetic hand is used.
    """

    def __init__(
        self,
        runtime: RuntimeConfig,
        run_config: RunConfig,
        hand_model: Optional[HandModel] = None,
        hand_model_path: Optional[str] = None,
    ):
        self.logger = logging.getLogger(self.__class__.__name__)
        self._runtime = runtime
        self._run_config = run_config
        self._initialize_components(hand_model, hand_model_path)

    def _initialize_components(self, hand_model: Optional[HandModel], hand_model_path: Optional[str]) -> None:
        try:
            if hand_model is not None:
                self._hand_model = hand_model
            elif hand_model_path is not None:
                self._hand_model = load_hand_model(hand_model_path)
            else:
                self._hand_model = synthetic_hand()
            self._hand_model_path = hand_model_path
            self.logger.info(f"Pipeline ready with hand model '{self._hand_model.name}'")
        except Exception as e:
            self.logger.error(f"Failed to initialize pipeline components: {e}")
            raise

    @property
    def hand_model(self) -> HandModel:
        return self._hand_model

    @property
    def run_config(self) -> RunConfig:
        return self._run_config

    def _manifest(self, command: str, inputs: Dict[str, Optional[str]]) -> RunManifest:
        inputs = dict(inputs)
        inputs.setdefault("hand_model", self._hand_model_path)
        return RunManifest(
            command=command,
            inputs=inputs,
            config=self._run_config.snapshot(),
            seed=self._run_config.optim.seed,
        )

    def _write_trace(self, result: OptimResult, path: Path) -> None:
        frame = pd.DataFrame(result.trace_rows(), columns=["iteration", "loss"])
        frame.to_csv(path, index=False, float_format=self._runtime.float_format)

    def refine(
        self, object_mesh: TriMesh, init: HandParams, targets: ResolvedTargets, object_samples: Optional[int] = None
    ) -> OptimResult:
        return refine_with_config(self._hand_model, self._run_config, object_mesh, init, targets, object_samples)

    def optimize_grasp(
        self,
        object_path: str,
        init_path: str,
        target_spec: str,
        out: OutputDirectory,
        scale: float = 1.0,
        object_samples: Optional[int] = None,
    ) -> Path:
        """Refine one grasp and write params, posed hand, loss trace, contact maps and manifest."""
        started = time.perf_counter()
        object_mesh = load_mesh(object_path, scale=scale)
        init = load_params(init_path)
        cfg = self._run_config
        targets = resolve_targets(parse_target_spec(target_spec), object_mesh, self._hand_model, cfg.capsule)
        directory = out.prepare()
        manifest = self._manifest(
            "optimize", {"object": object_path, "init": init_path, "targets": target_spec}
        )

        hand_before, _ = pose_hand(self._hand_model, init)
        before = contact_maps(object_mesh, hand_before, cfg.capsule)
        result = self.refine(object_mesh, init, targets, object_samples)
        manifest.time("optimize", started)
        hand_after, _ = pose_hand(self._hand_model, result.params)
        after = contact_maps(object_mesh, hand_after, cfg.capsule)

        fmt = self._runtime.float_format
        save_params(result.params, directory / "refined_params.json")
        save_mesh(hand_after, directory / "refined_hand.obj")
        self._write_trace(result, directory / "loss_trace.csv")
        save_contact_maps([before.object_map, before.hand_map], directory / "contact_before.json", fmt)
        save_contact_maps([after.object_map, after.hand_map], directory / "contact_after.json", fmt)
        write_json_atomic(
            {
                "initial_loss": result.initial_loss,
                "final_loss": result.final_loss,
                "restart_index": result.restart_index,
                "restart_losses": result.restart_losses,
                "snapshots": {str(k): v.to_dict() for k, v in result.snapshots.items()},
            },
            directory / "result.json",
        )
        manifest.outputs = {
            "params": "refined_params.json",
            "hand_mesh": "refined_hand.obj",
            "loss_trace": "loss_trace.csv",
            "contact_before": "contact_before.json",
            "contact_after": "contact_after.json",
            "result": "result.json",
        }
        manifest.time("total", started)
        manifest.write(directory)
        self.logger.info(
            f"Refined grasp written to {directory} (loss {result.initial_loss:.4f} -> {result.final_loss:.4f})"
        )
        return directory

    def optimize_dataset(
        self, samples: Sequence[GraspSample], object_samples: Optional[int] = None
    ) -> List[OptimResult]:
        """
        Refine every sample from its perturbed pose towards its stored targets.

        With GRASP_MAX_WORKERS > 1 samples run in that many processes, each with
        single-threaded restarts. Results keep sample order and every sample
        uses the same seeds, so they match a serial run.
        """
        workers = min(self._runtime.max_workers, len(samples))
        if workers <= 1:
            jobs = [(self._hand_model, self._run_config, sample, object_samples) for sample in samples]
            return [_refine_sample(job) for job in jobs]
        cfg = self._run_config
        serial_restarts = cfg.model_copy(update={"optim": cfg.optim.model_copy(update={"workers": 1})})
        jobs = [(self._hand_model, serial_restarts, sample, object_samples) for sample in samples]
        self.logger.info(f"Optimizing {len(samples)} samples on {workers} processes")
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(logging.getLogger().getEffectiveLevel(),)
        ) as pool:
            return list(pool.map(_refine_sample, jobs))

    def optimize_dataset_dir(
        self, dataset_dir: str, out: OutputDirectory, object_samples: Optional[int] = None
    ) -> Path:
        started = time.perf_counter()
        samples = load_dataset(dataset_dir)
        directory = out.prepare()
        manifest = self._manifest("optimize", {"dataset": dataset_dir})
        results = self.optimize_dataset(samples, object_samples)
        self._write_results(samples, results, directory)
        manifest.outputs = {"refined": "refined/", "loss_traces": "loss_traces.csv"}
        manifest.time("total", started)
        manifest.write(directory)
        return directory

    def _write_results(self, samples: Sequence[GraspSample], results: Sequence[OptimResult], directory: Path) -> None:
        traces = []
        for sample, result in zip(samples, results):
            save_params(result.params, directory / "refined" / f"{sample.sample_index:04d}.json")
            traces.append(
                pd.DataFrame(
                    {
                        "sample": sample.sample_index,
                        "iteration": np.arange(len(result.loss_trace)),
                        "loss": result.loss_trace,
                    }
                )
            )
        if traces:
            pd.concat(traces, ignore_index=True).to_csv(
                directory / "loss_traces.csv", index=False, float_format=self._runtime.float_format
            )

    def _load_grasps(
        self, dataset_dir: Optional[str], object_path: Optional[str], params_path: Optional[str], scale: float
    ) -> List[Tuple[TriMesh, HandParams]]:
        if dataset_dir is not None:
            seen: Dict[int, Tuple[TriMesh, HandParams]] = {}
            for sample in load_dataset(dataset_dir):
                seen.setdefault(sample.grasp_index, (sample.object_mesh, sample.true_params))
            return [seen[k] for k in sorted(seen)]
        if object_path is None or params_path is None:
            raise ConfigError("Give either --dataset or both --object and --init")
        return [(load_mesh(object_path, scale=scale), load_params(params_path))]

    def perturb(
        self,
        out: OutputDirectory,
        dataset_dir: Optional[str] = None,
        object_path: Optional[str] = None,
        params_path: Optional[str] = None,
        scale: float = 1.0,
    ) -> Path:
        """Perturbed dataset from the true poses of a dataset, or from one object and pose."""
        started = time.perf_counter()
        grasps = self._load_grasps(dataset_dir, object_path, params_path, scale)
        directory = out.prepare()
        cfg = self._run_config
        samples = make_dataset(grasps, cfg.perturb, self._hand_model, cfg.capsule)
        save_dataset(samples, directory, self._hand_model.name, cfg.perturb)
        manifest = self._manifest("perturb", {"dataset": dataset_dir, "object": object_path, "init": params_path})
        manifest.outputs = {"dataset": "manifest.json"}
        manifest.time("total", started)
        manifest.write(directory)
        return directory

    def synth(self, n: int, out: OutputDirectory) -> Path:
        """Synthetic grasps, perturbed per the run config, written as a dataset."""
        started = time.perf_counter()
        directory = out.prepare()
        cfg = self._run_config
        grasps = synth_grasps(n, cfg.perturb.seed, self._hand_model, cfg.capsule)
        samples = make_dataset(grasps, cfg.perturb, self._hand_model, cfg.capsule)
        save_dataset(samples, directory, self._hand_model.name, cfg.perturb)
        manifest = self._manifest("synth", {"n_grasps": str(n)})
        manifest.outputs = {"dataset": "manifest.json"}
        manifest.time("total", started)
        manifest.write(directory)
        return directory

    def evaluate(self, dataset_dir: str, out: OutputDirectory, results_dir: Optional[str] = None) -> MetricsReport:
        """Metrics of a dataset's perturbed poses and, optionally, of refined poses from `results_dir`."""
        started = time.perf_counter()
        samples = load_dataset(dataset_dir)
        refined = None
        if results_dir is not None:
            refined = [load_params(Path(results_dir) / "refined" / f"{s.sample_index:04d}.json") for s in samples]
        directory = out.prepare()
        cfg = self._run_config
        report = evaluate_batch(
            samples, refined, cfg.metrics, self._hand_model, with_histograms=True, workers=self._runtime.max_workers
        )
        report.write(directory, float_format=self._runtime.float_format)
        frequency = hand_contact_frequency([s.target_hand_contact for s in samples], cfg.metrics.contact_threshold)
        frequency.to_csv(directory / "hand_contact_frequency.csv", index=False, float_format=self._runtime.float_format)
        manifest = self._manifest("evaluate", {"dataset": dataset_dir, "results": results_dir})
        manifest.outputs = {"metrics": "metrics.json", "table": "metrics.md", "per_sample": "metrics.csv"}
        manifest.time("total", started)
        manifest.write(directory)
        return report

    def features(
        self,
        object_path: str,
        params_path: str,
        out: OutputDirectory,
        scale: float = 1.0,
        n_object_samples: int = 2048,
        target_spec: Optional[str] = None,
        file_format: str = "csv",
    ) -> Path:
        """Per-point features of the hand at `params_path`, plus quantized contact labels when targets are given."""
        started = time.perf_counter()
        object_mesh = load_mesh(object_path, scale=scale)
        params = load_params(params_path)
        directory = out.prepare()
        hand, _ = pose_hand(self._hand_model, params)
        seed = self._run_config.optim.seed
        features = extract_features(object_mesh, hand, n_object_samples, seed)
        save_features(features, directory / f"features.{file_format}", self._runtime.float_format)
        outputs = {"features": f"features.{file_format}"}
        if target_spec is not None:
            targets = resolve_targets(
                parse_target_spec(target_spec), object_mesh, self._hand_model, self._run_config.capsule
            )
            labels = self._labels(features.source_index, features.is_hand, targets)
            labels.to_csv(directory / "labels.csv", index=False)
            outputs["labels"] = "labels.csv"
        manifest = self._manifest(
            "features", {"object": object_path, "init": params_path, "targets": target_spec}
        )
        manifest.outputs = outputs
        manifest.time("total", started)
        manifest.write(directory)
        return directory

    @staticmethod
    def _labels(source_index: np.ndarray, is_hand: np.ndarray, targets: ResolvedTargets) -> pd.DataFrame:
        object_bins = quantize_contact(targets.object_map)
        bins = np.full(len(source_index), -1, dtype=np.int64)
        on_object = is_hand == 0
        bins[on_object] = object_bins[source_index[on_object]]
        if targets.hand_map is not None:
            hand_bins = quantize_contact(targets.hand_map)
            bins[~on_object] = hand_bins[source_index[~on_object]]
        return pd.DataFrame({"is_hand": is_hand, "source_index": source_index, "contact_bin": bins})

    def roundtrip(self, n: int, out: OutputDirectory, object_samples: Optional[int] = None) -> MetricsReport:
        """Synthesize, perturb, refine and evaluate; writes dataset, refined params, traces and the report."""
        started = time.perf_counter()
        directory = out.prepare()
        cfg = self._run_config
        manifest = self._manifest("roundtrip", {"n_grasps": str(n)})

        grasps = synth_grasps(n, cfg.perturb.seed, self._hand_model, cfg.capsule)
        samples = make_dataset(grasps, cfg.perturb, self._hand_model, cfg.capsule)
        save_dataset(samples, directory / "dataset", self._hand_model.name, cfg.perturb)
        manifest.time("dataset", started)

        results = self.optimize_dataset(samples, object_samples)
        self._write_results(samples, results, directory)
        manifest.time("optimize", started)

        report = evaluate_batch(
            samples,
            [r.params for r in results],
            cfg.metrics,
            self._hand_model,
            with_histograms=True,
            workers=self._runtime.max_workers,
        )
        report.write(directory, float_format=self._runtime.float_format)
        manifest.outputs = {
            "dataset": "dataset/manifest.json",
            "refined": "refined/",
            "loss_traces": "loss_traces.csv",
            "metrics": "metrics.json",
            "table": "metrics.md",
            "per_sample": "metrics.csv",
        }
        manifest.time("total", started)
        manifest.write(directory)
        return report

    def make_hand(self, path: str, force: bool = False) -> Path:
        """Write the current hand model (the synthetic hand unless one was loaded) to `path`."""
        target = Path(path)
        if target.exists() and not force:
            raise OutputExistsError(f"{target} exists (use --force to overwrite)", path=str(target))
        return save_hand_model(self._hand_model, target)
