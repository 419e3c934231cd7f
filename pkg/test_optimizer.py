#!/usr/bin/env python3
"""
Tests for the contact losses, ADAM and the restart loop.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src directory to Python path
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

from config import CapsuleConfig, ComponentScale, LossConfig, OptimConfig  # noqa: E402
from contact.capsule import ContactMap, contact_maps  # noqa: E402
from contact.targets import FromReferencePose, ResolvedTargets, resolve_targets  # noqa: E402
from errors import NonFiniteLoss, StaleCorrespondence  # noqa: E402
from evaluation.metrics import mpjpe  # noqa: E402
from geometry.mesh import TriMesh  # noqa: E402
from geometry.primitives import icosphere  # noqa: E402
from hand.model import HandParams  # noqa: E402
from hand.synthetic import synthetic_hand  # noqa: E402
from optimization.adam import AdamState, adam_step  # noqa: E402
from optimization.gradcheck import finite_difference  # noqa: E402
from optimization.losses import (  # noqa: E402
    LossTerms,
    loss_hand,
    loss_object,
    loss_penetration,
    nearest_hand_vertices,
    penetration_grad,
    total_loss,
)
import optimization.optimizer as optimizer_module  # noqa: E402
from optimization.optimizer import (  # noqa: E402
    ContactObjective,
    Evaluation,
    optimize,
    restart_initialization,
    run_restart,
)

LOSS = LossConfig()
FLOOR = [[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, 100.0, 0.0]]


def _object_map(values):
    return ContactMap(values=values, which_mesh="object")


def _poking_hand(depth: float) -> TriMesh:
    """Triangle whose first vertex sits `depth` mm below the floor triangle's first vertex."""
    return TriMesh.from_arrays([[0.0, 0.0, -depth], [100.0, 0.0, 30.0], [0.0, 100.0, 30.0]], [[0, 1, 2]])


@pytest.fixture(scope="module")
def model():
    return synthetic_hand()


@pytest.fixture(scope="module")
def under_finger():
    return icosphere(15.0, subdivisions=3, center=(-10.0, 60.0, -23.5))


def test_contact_loss_examples():
    assert loss_object(_object_map([0.5, 0.5]), _object_map([0.5, 0.5]), LOSS) == 0.0
    assert loss_object(_object_map([0.2]), _object_map([0.8]), LOSS) == pytest.approx(1.8)
    assert loss_object(_object_map([0.8]), _object_map([0.2]), LOSS) == pytest.approx(0.6)


def test_missing_contact_costs_more():
    missing = loss_object(_object_map([0.3]), _object_map([0.7]), LOSS)
    extra = loss_object(_object_map([0.7]), _object_map([0.3]), LOSS)
    assert missing == pytest.approx(LOSS.lambda_miss * extra)


def test_contact_loss_is_a_mean():
    current = _object_map([0.2, 0.8, 0.5, 0.5])
    target = _object_map([0.8, 0.2, 0.5, 0.5])
    assert loss_object(current, target, LOSS) == pytest.approx((1.8 + 0.6) / 4)


def test_hand_loss():
    hand = ContactMap(values=[0.1, 0.9], which_mesh="hand")
    assert loss_hand(hand, None, LOSS) == 0.0
    target = ContactMap(values=[0.4, 0.4], which_mesh="hand")
    expected = loss_object(_object_map([0.1, 0.9]), _object_map([0.4, 0.4]), LOSS)
    assert loss_hand(hand, target, LOSS) == pytest.approx(expected)


def test_penetration_within_tolerance_is_free():
    floor = TriMesh.from_arrays(FLOOR, [[0, 1, 2]])
    hand = _poking_hand(1.5)
    assert loss_penetration(floor, hand, nearest_hand_vertices(floor, hand), LOSS) == 0.0


def test_penetration_beyond_tolerance():
    floor = TriMesh.from_arrays(FLOOR, [[0, 1, 2]])
    hand = _poking_hand(5.0)
    corr = nearest_hand_vertices(floor, hand)
    # 3 mm beyond c_pen at one of three object vertices
    assert loss_penetration(floor, hand, corr, LOSS) == pytest.approx(1.0)

    # lifting the hand along +z is the only way out
    jacobian = np.zeros((3, 3, 6))
    jacobian[:, :, :3] = np.eye(3)
    np.testing.assert_allclose(penetration_grad(floor, hand, corr, jacobian, LOSS), [0, 0, -1 / 3, 0, 0, 0])


def test_penetration_is_a_mean_over_object_vertices():
    coarse = TriMesh.from_arrays(FLOOR, [[0, 1, 2]])
    fine = icosphere(20.0, subdivisions=3)
    hand = icosphere(8.0, subdivisions=2, center=(0.0, 0.0, 18.0))
    for obj in (coarse, fine):
        corr = nearest_hand_vertices(obj, hand)
        depth = np.where(
            corr.interior, np.einsum("ij,ij->i", obj.vertices - hand.vertices[corr.indices], obj.vertex_normals), 0.0
        )
        expected = np.maximum(depth - LOSS.c_pen, 0.0).sum() / obj.n_vertices
        assert loss_penetration(obj, hand, corr, LOSS) == pytest.approx(expected)
    assert loss_penetration(fine, hand, nearest_hand_vertices(fine, hand), LOSS) > 0.0


def test_hand_outside_object_has_no_penetration():
    obj = icosphere(10.0, subdivisions=2)
    hand = icosphere(5.0, subdivisions=2, center=(20.0, 0.0, 0.0))
    assert loss_penetration(obj, hand, nearest_hand_vertices(obj, hand), LOSS) == 0.0


def test_stale_penetration_correspondence():
    floor = TriMesh.from_arrays(FLOOR, [[0, 1, 2]])
    corr = nearest_hand_vertices(floor, _poking_hand(5.0))
    with pytest.raises(StaleCorrespondence):
        loss_penetration(floor, icosphere(5.0, subdivisions=1), corr, LOSS)


def test_total_loss():
    assert total_loss(0.0, 0.0, 0.0, LOSS) == 0.0
    # lambda_O = 1, lambda_pen = 3
    assert total_loss(1.0, 2.0, 1.0, LOSS) == pytest.approx(6.0)
    terms = LossTerms(hand=1.0, object=2.0, penetration=1.0, total=6.0)
    assert terms.as_dict()["total"] == 6.0


def test_adam_zero_gradient_keeps_params():
    cfg = OptimConfig()
    x = np.array([1.0, -2.0, 3.0])
    new_x, state = adam_step(x, AdamState.initial(3), np.zeros(3), cfg)
    np.testing.assert_array_equal(new_x, x)
    assert state.t == 1


def test_adam_first_step_is_learning_rate():
    cfg = OptimConfig(learning_rate=0.01)
    x = np.zeros(3)
    new_x, _ = adam_step(x, AdamState.initial(3), np.array([5.0, -0.2, 300.0]), cfg)
    np.testing.assert_allclose(new_x, [-0.01, 0.01, -0.01], rtol=1e-6)


def test_adam_scales():
    cfg = OptimConfig(learning_rate=0.01)
    new_x, _ = adam_step(
        np.zeros(3),
        AdamState.initial(3),
        np.ones(3),
        cfg,
        grad_scale=np.array([1.0, 0.0, 1.0]),
        lr_scale=np.array([1.0, 1.0, 50.0]),
    )
    np.testing.assert_allclose(new_x, [-0.01, 0.0, -0.5], rtol=1e-6)


def test_adam_descends_quadratic_bowl():
    cfg = OptimConfig(learning_rate=0.01)
    center = np.array([0.3, -1.2, 2.0])
    x = np.zeros(3)
    state = AdamState.initial(3)
    for _ in range(2000):
        x, state = adam_step(x, state, x - center, cfg)
    assert np.linalg.norm(x - center) < 1e-2


@pytest.mark.parametrize("seed", range(30))
def test_objective_gradient_matches_finite_differences(model, under_finger, seed):
    """Contact on both sides plus active penetration, all through the hand pose."""
    rng = np.random.default_rng([3, seed])
    targets = ResolvedTargets(
        object_map=ContactMap(rng.uniform(0.0, 1.0, under_finger.n_vertices), "object"),
        hand_map=ContactMap(rng.uniform(0.0, 1.0, model.n_vertices), "hand"),
    )
    # finger pressed about 4.5 mm into the sphere
    params = HandParams(
        theta=rng.uniform(-0.03, 0.03, size=model.n_pose),
        translation=np.array([0.0, 0.0, -6.0]) + rng.normal(0.0, 0.5, size=3),
        rotation=rng.normal(0.0, 0.01, size=3),
    )
    objective = ContactObjective(model, under_finger, targets, LOSS, CapsuleConfig(), params.layout)
    x0 = params.to_vector()
    evaluation = objective.evaluate(x0)
    assert evaluation.terms.penetration > 0

    check = finite_difference(objective.loss, x0, eps=1e-6)
    assert np.count_nonzero(check.smooth) >= params.layout.size // 2
    assert check.relative_error(evaluation.gradient) < 1e-3


def test_penetration_reuses_contact_nearest_queries(model, under_finger):
    hand = model.pose(model.zero_params().replace(translation=[0.0, 0.0, -6.0])).mesh
    contact = contact_maps(under_finger, hand, CapsuleConfig())
    shared = nearest_hand_vertices(under_finger, hand, contact)
    fresh = nearest_hand_vertices(under_finger, hand)
    np.testing.assert_array_equal(shared.indices, fresh.indices)
    np.testing.assert_array_equal(shared.interior, fresh.interior)
    assert loss_penetration(under_finger, hand, shared, LOSS) > 0


def test_optimize_keeps_a_fixed_point(model, under_finger):
    init = model.zero_params()
    targets = resolve_targets(FromReferencePose(init), under_finger, model)
    result = optimize(model, under_finger, init, targets, optim_cfg=OptimConfig(iterations=5))
    assert result.final_loss == 0.0
    assert result.restart_index == 0
    np.testing.assert_array_equal(result.params.to_vector(), init.to_vector())
    assert result.loss_trace == [0.0] * 6


def test_optimize_recovers_lifted_hand(model, under_finger):
    truth = model.zero_params()
    targets = resolve_targets(FromReferencePose(truth), under_finger, model)
    start = truth.replace(translation=[0.0, 0.0, 3.0])
    frozen = ComponentScale(theta=0.0, beta=0.0, translation=1.0, rotation=0.0)
    cfg = OptimConfig(iterations=80, grad_scale=frozen, lr_scale=ComponentScale(translation=10.0))
    result = optimize(model, under_finger, start, targets, optim_cfg=cfg)

    true_joints = model.pose(truth).keypoints
    before = mpjpe(model.pose(start).keypoints, true_joints)
    after = mpjpe(model.pose(result.params).keypoints, true_joints)
    assert before == pytest.approx(3.0)
    assert after < 0.5 * before
    assert result.final_loss < result.initial_loss
    np.testing.assert_array_equal(result.params.theta, truth.theta)


def test_restart_returns_final_iterate_by_default(model, under_finger):
    assert OptimConfig().keep_best is False
    truth = model.zero_params()
    targets = resolve_targets(FromReferencePose(truth), under_finger, model)
    start = truth.replace(translation=[0.0, 0.0, 3.0])
    objective = ContactObjective(model, under_finger, targets, LOSS, CapsuleConfig(), start.layout)

    final = run_restart(objective, start, 0, OptimConfig(iterations=20))
    assert final.final_loss == final.loss_trace[-1]
    assert objective.loss(final.params.to_vector()) == pytest.approx(final.final_loss, rel=1e-12, abs=1e-12)

    best = run_restart(objective, start, 0, OptimConfig(iterations=20, keep_best=True))
    assert best.final_loss == min(best.loss_trace)
    assert best.loss_trace == final.loss_trace


def test_restart_threads_start_with_built_object_index(monkeypatch, model):
    obj = icosphere(15.0, subdivisions=3, center=(-10.0, 60.0, -23.5))
    truth = model.zero_params()
    targets = resolve_targets(FromReferencePose(truth), obj, model)
    obj = icosphere(15.0, subdivisions=3, center=(-10.0, 60.0, -23.5))
    assert "point_index" not in obj.__dict__

    seen = []
    guarded = optimizer_module._guarded_restart

    def recording(objective, init, restart, cfg):
        seen.append("point_index" in objective.object_mesh.__dict__)
        return guarded(objective, init, restart, cfg)

    monkeypatch.setattr(optimizer_module, "_guarded_restart", recording)
    start = truth.replace(translation=[0.0, 1.0, 2.0])
    optimize(model, obj, start, targets, optim_cfg=OptimConfig(iterations=2, n_restart=4, workers=4))
    assert seen == [True] * 4


def test_optimize_is_deterministic(model, under_finger):
    truth = model.zero_params()
    targets = resolve_targets(FromReferencePose(truth), under_finger, model)
    start = truth.replace(translation=[1.0, -2.0, 4.0])
    serial = optimize(model, under_finger, start, targets, optim_cfg=OptimConfig(iterations=5, n_restart=3, seed=4))
    threaded = optimize(
        model, under_finger, start, targets, optim_cfg=OptimConfig(iterations=5, n_restart=3, seed=4, workers=3)
    )
    np.testing.assert_array_equal(serial.params.to_vector(), threaded.params.to_vector())
    assert serial.restart_losses == threaded.restart_losses
    assert serial.restart_index == threaded.restart_index


def test_more_restarts_never_hurt(model, under_finger):
    truth = model.zero_params()
    targets = resolve_targets(FromReferencePose(truth), under_finger, model)
    start = truth.replace(translation=[0.0, 3.0, 5.0])
    one = optimize(model, under_finger, start, targets, optim_cfg=OptimConfig(iterations=5, n_restart=1))
    four = optimize(model, under_finger, start, targets, optim_cfg=OptimConfig(iterations=5, n_restart=4))
    assert four.restart_losses[0] == one.restart_losses[0]
    assert four.final_loss <= one.final_loss
    assert four.final_loss == min(four.restart_losses)


def test_restart_initialization():
    cfg = OptimConfig(seed=2)
    init = HandParams(theta=[0.1, 0.2], translation=[1.0, 2.0, 3.0])
    assert restart_initialization(init, 0, cfg) is init
    first = restart_initialization(init, 1, cfg)
    again = restart_initialization(init, 1, cfg)
    second = restart_initialization(init, 2, cfg)
    np.testing.assert_array_equal(first.to_vector(), again.to_vector())
    assert not np.array_equal(first.translation, second.translation)
    np.testing.assert_array_equal(first.theta, init.theta)
    quiet = OptimConfig(restart_translation_sigma=0.0, restart_rotation_sigma=0.0)
    np.testing.assert_array_equal(restart_initialization(init, 3, quiet).to_vector(), init.to_vector())


def test_non_finite_loss(monkeypatch, model, under_finger):
    init = model.zero_params()
    targets = resolve_targets(FromReferencePose(init), under_finger, model)

    def diverged(self, vector, with_gradient=True):
        terms = LossTerms(hand=0.0, object=float("nan"), penetration=0.0, total=float("nan"))
        return Evaluation(terms=terms, gradient=np.zeros(self.layout.size), contact=None)

    monkeypatch.setattr(ContactObjective, "evaluate", diverged)
    objective = ContactObjective(model, under_finger, targets, LOSS, CapsuleConfig(), init.layout)
    with pytest.raises(NonFiniteLoss):
        run_restart(objective, init, 0, OptimConfig(iterations=3))
    with pytest.raises(NonFiniteLoss):
        optimize(model, under_finger, init, targets, optim_cfg=OptimConfig(iterations=3, n_restart=2))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
