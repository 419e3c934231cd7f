#!/usr/bin/env python3
"""
End-to-end tests of the command-line entry point.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from config import ConfigValidator  # noqa: E402
from geometry.mesh_io import save_mesh  # noqa: E402
from geometry.primitives import icosphere  # noqa: E402
from hand.model import HandParams  # noqa: E402
from hand.model_io import load_hand_model, load_params, save_params  # noqa: E402
from main import main, parse_arguments  # noqa: E402

QUICK_RUN = {
    "optim": {"iterations": 4, "snapshot_every": 2},
    "perturb": {"sigma_translation": 5.0, "sigma_rotation": 2.0, "sigma_theta": 0.05},
}


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    """Isolated cwd with default environment, a quick run config and one grasp on disk."""
    for var in ConfigValidator.OPTIONAL_VARS:
        monkeypatch.setenv(var, "")
    monkeypatch.chdir(tmp_path)
    config = tmp_path / "run.json"
    config.write_text(json.dumps(QUICK_RUN))
    save_mesh(icosphere(15.0, subdivisions=2, center=(-10.0, 60.0, -23.5)), tmp_path / "sphere.obj")
    save_params(HandParams(theta=np.zeros(9)), tmp_path / "true.json")
    save_params(HandParams(theta=np.zeros(9), translation=[0.0, 0.0, 3.0]), tmp_path / "init.json")
    return tmp_path


def _common(workspace: Path):
    return ["--config", str(workspace / "run.json"), "--log-file", str(workspace / "run.log")]


def test_parse_arguments():
    args = parse_arguments(["optimize", "--out", "o", "--object", "a.obj", "--restarts", "3", "--seed", "5"])
    assert args["command"] == "optimize"
    assert args["restarts"] == 3
    assert args["seed"] == 5
    assert args["scale"] == 1.0
    with pytest.raises(SystemExit):
        parse_arguments(["optimize", "--restarts", "0", "--out", "o"])
    with pytest.raises(SystemExit):
        parse_arguments(["evaluate", "--out", "o"])
    assert args["keep_best"] is None
    assert parse_arguments(["roundtrip", "--out", "o", "--keep-best"])["keep_best"] is True


def test_make_hand(workspace):
    path = workspace / "hand.json"
    argv = ["make-hand", "--out", str(path), "--log-file", str(workspace / "run.log")]
    assert main(argv) == 0
    assert load_hand_model(path).name == "synthetic-hand"
    assert main(argv) == 2
    assert main(argv + ["--force"]) == 0


def test_optimize_single_grasp(workspace):
    out = workspace / "refined"
    code = main(
        [
            "optimize",
            "--object",
            str(workspace / "sphere.obj"),
            "--init",
            str(workspace / "init.json"),
            "--targets",
            f"reference:{workspace / 'true.json'}",
            "--out",
            str(out),
            *_common(workspace),
        ]
    )
    assert code == 0
    for name in (
        "refined_params.json",
        "refined_hand.obj",
        "loss_trace.csv",
        "contact_before.json",
        "contact_after.json",
    ):
        assert (out / name).is_file()
    result = json.loads((out / "result.json").read_text())
    assert result["final_loss"] <= result["initial_loss"]
    assert set(result["snapshots"]) == {"0", "2", "4"}
    trace = pd.read_csv(out / "loss_trace.csv")
    assert list(trace.columns) == ["iteration", "loss"]
    assert len(trace) == 5
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["command"] == "optimize"
    assert manifest["config"]["optim"]["iterations"] == 4
    assert "total" in manifest["timings"]
    load_params(out / "refined_params.json")


def test_synth_optimize_evaluate(workspace):
    dataset = workspace / "dataset"
    assert main(["synth", "--grasps", "1", "--out", str(dataset), *_common(workspace)]) == 0
    assert (dataset / "manifest.json").is_file()

    refined = workspace / "refined"
    assert main(["optimize", "--dataset", str(dataset), "--out", str(refined), *_common(workspace)]) == 0
    assert (refined / "refined" / "0000.json").is_file()
    assert (refined / "loss_traces.csv").is_file()

    report = workspace / "report"
    code = main(
        ["evaluate", "--dataset", str(dataset), "--results", str(refined), "--out", str(report), *_common(workspace)]
    )
    assert code == 0
    metrics = json.loads((report / "metrics.json").read_text())
    assert set(metrics["summary"]) == {"initial", "refined"}
    assert (report / "metrics.md").is_file()
    assert (report / "hand_contact_frequency.csv").is_file()


def test_perturb_command(workspace):
    out = workspace / "perturbed"
    code = main(
        [
            "perturb",
            "--object",
            str(workspace / "sphere.obj"),
            "--init",
            str(workspace / "true.json"),
            "--out",
            str(out),
            *_common(workspace),
        ]
    )
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["samples"]) == 1


def test_features_command(workspace):
    out = workspace / "features"
    code = main(
        [
            "features",
            "--object",
            str(workspace / "sphere.obj"),
            "--init",
            str(workspace / "true.json"),
            "--targets",
            f"reference:{workspace / 'true.json'}",
            "--object-samples",
            "50",
            "--out",
            str(out),
            *_common(workspace),
        ]
    )
    assert code == 0
    features = pd.read_csv(out / "features.csv")
    labels = pd.read_csv(out / "labels.csv")
    assert len(features) == len(labels)
    assert labels["contact_bin"].between(0, 9).all()


def test_roundtrip_command(workspace, capsys):
    out = workspace / "roundtrip"
    assert main(["roundtrip", "--grasps", "1", "--out", str(out), *_common(workspace)]) == 0
    assert "MPJPE (mm)" in capsys.readouterr().out
    assert (out / "dataset" / "manifest.json").is_file()
    assert (out / "metrics.md").is_file()


def test_roundtrip_repeats_across_worker_counts(workspace, monkeypatch):
    """A serial run and a two-process run write the same bytes."""
    serial = workspace / "serial"
    assert main(["roundtrip", "--grasps", "3", "--out", str(serial), *_common(workspace)]) == 0
    monkeypatch.setenv("GRASP_MAX_WORKERS", "2")
    parallel = workspace / "parallel"
    assert main(["roundtrip", "--grasps", "3", "--out", str(parallel), *_common(workspace)]) == 0
    for name in ("metrics.csv", "loss_traces.csv"):
        assert (serial / name).read_bytes() == (parallel / name).read_bytes()
    refined = sorted((serial / "refined").iterdir())
    assert len(refined) == 3
    for path in refined:
        assert path.read_bytes() == (parallel / "refined" / path.name).read_bytes()


def test_missing_input_exits_with_two(workspace, capsys):
    code = main(
        [
            "optimize",
            "--object",
            str(workspace / "missing.obj"),
            "--init",
            str(workspace / "init.json"),
            "--targets",
            f"reference:{workspace / 'true.json'}",
            "--out",
            str(workspace / "out"),
            *_common(workspace),
        ]
    )
    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "FileFormatError"


def test_missing_flags_exit_with_two(workspace):
    argv = ["optimize", "--object", str(workspace / "sphere.obj"), "--out", str(workspace / "o")]
    assert main(argv + _common(workspace)) == 2


def test_non_empty_output_needs_force(workspace):
    out = workspace / "busy"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    argv = ["perturb", "--object", str(workspace / "sphere.obj"), "--init", str(workspace / "true.json")]
    argv += ["--out", str(out)]
    assert main(argv + _common(workspace)) == 2
    assert main(argv + _common(workspace) + ["--force"]) == 0


def test_bad_config_exits_with_two(workspace):
    bad = workspace / "bad.json"
    bad.write_text(json.dumps({"optim": {"iterations": 0}}))
    code = main(["synth", "--out", str(workspace / "s"), "--config", str(bad), "--log-file", str(workspace / "x.log")])
    assert code == 2


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
