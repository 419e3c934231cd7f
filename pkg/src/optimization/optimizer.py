#!/usr/bin/env python3
"""
Hand pose refinement against target contact.

Every iteration poses the hand, recomputes both contact maps with their
correspondences and the penetration correspondence, then takes one ADAM
step on [theta, beta, translation, rotation]. Restarts begin from perturbed
copies of the initial pose and the lowest-loss restart wins.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import CapsuleConfig, LossConfig, OptimConfig
from contact.capsule import ContactResult, contact_maps, contact_maps_grad
from contact.targets import ResolvedTargets
from errors import DimensionMismatch, NonFiniteLoss
from geometry.mesh import TriMesh
from hand.model import HandModel, HandParams, ParamLayout
from hand.rotations import compose_left, random_axis_rotation
from optimization.adam import AdamState, adam_step
from optimization.losses import (
    LossTerms,
    contact_loss_grad,
    loss_hand,
    loss_object,
    loss_penetration,
    nearest_hand_vertices,
    penetration_grad,
    total_loss,
)

logger = logging.getLogger(__name__)

DEBUG_EVERY = 50


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Loss terms, gradient and the contact maps they came from, at one parameter vector."""

    terms: LossTerms
    gradient: np.ndarray
    contact: ContactResult


class ContactObjective:
    """E(P) and dE/dP for one object, target set and hand model."""

    def __init__(
        self,
        model: HandModel,
        object_mesh: TriMesh,
        targets: ResolvedTargets,
        loss_cfg: LossConfig,
        capsule_cfg: CapsuleConfig,
        layout: ParamLayout,
    ):
        self.logger = logging.getLogger(self.__class__.__name__)
        if len(targets.object_map) != object_mesh.n_vertices:
            raise DimensionMismatch(
                f"Object target has {len(targets.object_map)} values for {object_mesh.n_vertices} object vertices"
            )
        if targets.hand_map is not None and len(targets.hand_map) != model.n_vertices:
            raise DimensionMismatch(
                f"Hand target has {len(targets.hand_map)} values for {model.n_vertices} hand vertices"
            )
        self.model = model
        self.object_mesh = object_mesh
        self.targets = targets
        self.loss_cfg = loss_cfg
        self.capsule_cfg = capsule_cfg
        self.layout = layout

    def params(self, vector: np.ndarray) -> HandParams:
        return HandParams.from_vector(vector, self.layout)

    def loss(self, vector: np.ndarray) -> float:
        """Total loss only; correspondences recomputed at `vector`."""
        return self.evaluate(vector, with_gradient=False).terms.total

    def evaluate(self, vector: np.ndarray, with_gradient: bool = True) -> Evaluation:
        cfg = self.loss_cfg
        posed = self.model.pose(self.params(vector))
        hand = posed.mesh
        contact = contact_maps(self.object_mesh, hand, self.capsule_cfg)
        penetration = nearest_hand_vertices(self.object_mesh, hand, contact)

        e_obj = loss_object(contact.object_map, self.targets.object_map, cfg)
        e_hand = loss_hand(contact.hand_map, self.targets.hand_map, cfg)
        e_pen = loss_penetration(self.object_mesh, hand, penetration, cfg)
        terms = LossTerms(hand=e_hand, object=e_obj, penetration=e_pen, total=total_loss(e_hand, e_obj, e_pen, cfg))
        if not with_gradient:
            return Evaluation(terms=terms, gradient=np.zeros(self.layout.size), contact=contact)

        has_hand_target = self.targets.hand_map is not None
        jacobian = posed.jacobian(with_normals=has_hand_target)
        gradient = cfg.lambda_O * (
            contact_loss_grad(contact.object_map, self.targets.object_map, cfg)
            @ contact_maps_grad(contact.object_correspondence, jacobian)
        )
        if has_hand_target:
            gradient = gradient + (
                contact_loss_grad(contact.hand_map, self.targets.hand_map, cfg)
                @ contact_maps_grad(contact.hand_correspondence, jacobian)
            )
        gradient = gradient + cfg.lambda_pen * penetration_grad(
            self.object_mesh, hand, penetration, jacobian.vertices, cfg
        )
        return Evaluation(terms=terms, gradient=gradient, contact=contact)


@dataclass(frozen=True, eq=False)
class RestartResult:
    index: int
    params: HandParams
    final_loss: float
    initial_loss: float
    loss_trace: List[float]
    snapshots: Dict[int, HandParams] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass(frozen=True, eq=False)
class OptimResult:
    """
    params / final_loss / loss_trace / snapshots: from the winning restart
    restart_losses: final loss of every restart (inf for aborted ones)
    """

    params: HandParams
    final_loss: float
    loss_trace: List[float]
    restart_index: int
    restart_losses: List[float]
    initial_loss: float
    snapshots: Dict[int, HandParams] = field(default_factory=dict)

    def trace_rows(self) -> List[Tuple[int, float]]:
        return list(enumerate(self.loss_trace))


def restart_initialization(init: HandParams, restart: int, cfg: OptimConfig) -> HandParams:
    """Restart 0 is `init`; restart r > 0 draws from default_rng([seed, r])."""
    if restart == 0:
        return init
    rng = np.random.default_rng([cfg.seed, restart])
    translation = init.translation + rng.normal(0.0, cfg.restart_translation_sigma, size=3)
    rotation = init.rotation
    if cfg.restart_rotation_sigma > 0:
        rotation = compose_left(random_axis_rotation(cfg.restart_rotation_sigma, rng), init.rotation)
    return init.replace(translation=translation, rotation=rotation)


def _scales(layout: ParamLayout, cfg: OptimConfig) -> Tuple[np.ndarray, np.ndarray]:
    g, s = cfg.grad_scale, cfg.lr_scale
    # a zero beta scale still lets shape move when optimize_shape is set
    beta = (g.beta or 1.0) if cfg.optimize_shape else 0.0
    grad_scale = layout.blocks(g.theta, beta, g.translation, g.rotation)
    lr_scale = layout.blocks(s.theta, s.beta, s.translation, s.rotation)
    return grad_scale, lr_scale


def _check_finite(evaluation: Evaluation, restart: int, iteration: int) -> None:
    if not math.isfinite(evaluation.terms.total) or not np.all(np.isfinite(evaluation.gradient)):
        raise NonFiniteLoss(
            f"Restart {restart}: non-finite loss or gradient at iteration {iteration} "
            f"(terms {evaluation.terms.as_dict()})"
        )


def run_restart(objective: ContactObjective, start: HandParams, restart: int, cfg: OptimConfig) -> RestartResult:
    """ADAM from `start`; loss_trace[k] is the loss before step k, with one final entry after the last step."""
    layout = objective.layout
    grad_scale, lr_scale = _scales(layout, cfg)
    x = start.to_vector()
    state = AdamState.initial(layout.size)
    trace: List[float] = []
    snapshots: Dict[int, HandParams] = {}
    best_x, best_loss = x, math.inf

    for iteration in range(cfg.iterations + 1):
        evaluation = objective.evaluate(x)
        _check_finite(evaluation, restart, iteration)
        loss = evaluation.terms.total
        trace.append(loss)
        if loss < best_loss:
            best_x, best_loss = x, loss
        if cfg.snapshot_every and iteration % cfg.snapshot_every == 0:
            snapshots[iteration] = objective.params(x)
        if iteration % DEBUG_EVERY == 0:
            logger.debug(
                f"Restart {restart} iteration {iteration}: loss {loss:.6f} "
                f"(hand {evaluation.terms.hand:.4f}, object {evaluation.terms.object:.4f}, "
                f"penetration {evaluation.terms.penetration:.4f})"
            )
        if iteration == cfg.iterations:
            break
        x, state = adam_step(x, state, evaluation.gradient, cfg, grad_scale=grad_scale, lr_scale=lr_scale)
        x = objective.params(x).to_vector()

    if cfg.keep_best:
        final_x, final_loss = best_x, best_loss
    else:
        final_x, final_loss = x, trace[-1]
    return RestartResult(
        index=restart,
        params=objective.params(final_x),
        final_loss=final_loss,
        initial_loss=trace[0],
        loss_trace=trace,
        snapshots=snapshots,
    )


def _guarded_restart(objective: ContactObjective, init: HandParams, restart: int, cfg: OptimConfig) -> RestartResult:
    start = restart_initialization(init, restart, cfg)
    logger.info(f"Restart {restart}/{cfg.n_restart}: starting")
    try:
        result = run_restart(objective, start, restart, cfg)
    except NonFiniteLoss as e:
        logger.warning(f"Restart {restart} aborted: {e}")
        return RestartResult(
            index=restart,
            params=start,
            final_loss=math.inf,
            initial_loss=math.inf,
            loss_trace=[],
            error=str(e),
        )
    logger.info(f"Restart {restart}/{cfg.n_restart}: loss {result.initial_loss:.6f} -> {result.final_loss:.6f}")
    return result


def _warm_caches(model: HandModel, object_mesh: TriMesh) -> None:
    # cached_property values are built before restart threads share the objects
    _ = object_mesh.point_index
    _ = model.subtree
    _ = model.joint_regressor


def optimize(
    model: HandModel,
    object_mesh: TriMesh,
    init: HandParams,
    targets: ResolvedTargets,
    loss_cfg: Optional[LossConfig] = None,
    optim_cfg: Optional[OptimConfig] = None,
    capsule_cfg: Optional[CapsuleConfig] = None,
) -> OptimResult:
    """
    Refine `init` towards the target contact maps.

    Restarts run on `optim_cfg.workers` threads; the winner is the lowest final
    loss, ties going to the lowest restart index, so the result does not
    depend on completion order.

    Raises:
        DimensionMismatch: params or targets that do not fit the model and object
        NonFiniteLoss: if every restart diverged
    """
    loss_cfg = loss_cfg or LossConfig()
    optim_cfg = optim_cfg or OptimConfig()
    capsule_cfg = capsule_cfg or CapsuleConfig()
    model.check_params(init)
    objective = ContactObjective(model, object_mesh, targets, loss_cfg, capsule_cfg, init.layout)

    restarts = range(optim_cfg.n_restart)
    if optim_cfg.workers > 1 and optim_cfg.n_restart > 1:
        _warm_caches(model, object_mesh)
        with ThreadPoolExecutor(max_workers=optim_cfg.workers) as pool:
            results = list(pool.map(lambda r: _guarded_restart(objective, init, r, optim_cfg), restarts))
    else:
        results = [_guarded_restart(objective, init, r, optim_cfg) for r in restarts]

    losses = [r.final_loss for r in results]
    winner = results[int(np.argmin(losses))]
    if not math.isfinite(winner.final_loss):
        raise NonFiniteLoss(f"All {optim_cfg.n_restart} restarts produced non-finite losses")
    logger.info(f"Best restart {winner.index} with loss {winner.final_loss:.6f}")
    return OptimResult(
        params=winner.params,
        final_loss=winner.final_loss,
        loss_trace=winner.loss_trace,
        restart_index=winner.index,
        restart_losses=losses,
        initial_loss=results[0].initial_loss,
        snapshots=winner.snapshots,
    )
