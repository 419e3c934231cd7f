#!/usr/bin/env python3
"""
Parametric articulated hand.

A HandModel is a rest mesh bound to a joint tree by linear blend skinning.
Per-joint local rotations come from a linear pose subspace
(pose_mean + pose_basis @ theta); an optional shape basis displaces the rest
vertices. The posed hand is finally rotated and translated rigidly:

    v = R(rotation) @ sum_d w_vd (G_d (x_v - J_d) + p_d) + translation

where G_d, p_d are the global rotation and position of joint d. Jacobians of
the posed vertices (and of their normals) with respect to the flat parameter
vector [theta, beta, translation, rotation] are evaluated analytically.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionMismatch, HandModelError, InvalidParameters
from geometry.mesh import TriMesh, vertex_normal_jacobian
from hand.rotations import canonicalize_rotation, right_jacobian, rotvec_to_matrix, skew

logger = logging.getLogger(__name__)

MAX_INFLUENCES = 8
WEIGHT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class ParamLayout:
    """Where each parameter block sits in the flat vector [theta, beta, t, R]."""

    n_pose: int
    n_shape: int

    @property
    def size(self) -> int:
        return self.n_pose + self.n_shape + 6

    @property
    def theta(self) -> slice:
        return slice(0, self.n_pose)

    @property
    def beta(self) -> slice:
        return slice(self.n_pose, self.n_pose + self.n_shape)

    @property
    def translation(self) -> slice:
        start = self.n_pose + self.n_shape
        return slice(start, start + 3)

    @property
    def rotation(self) -> slice:
        start = self.n_pose + self.n_shape + 3
        return slice(start, start + 3)

    def blocks(self, theta: float, beta: float, translation: float, rotation: float) -> np.ndarray:
        """Vector holding one constant per block."""
        out = np.empty(self.size)
        out[self.theta] = theta
        out[self.beta] = beta
        out[self.translation] = translation
        out[self.rotation] = rotation
        return out


@dataclass(frozen=True, eq=False)
class HandParams:
    """Pose coefficients, shape coefficients, translation (mm) and axis-angle rotation."""

    theta: np.ndarray
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        values = {}
        for name in ("theta", "beta", "translation", "rotation"):
            array = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if not np.all(np.isfinite(array)):
                raise InvalidParameters(f"HandParams.{name} has non-finite entries")
            values[name] = array
        for name in ("translation", "rotation"):
            if values[name].shape != (3,):
                raise InvalidParameters(f"HandParams.{name} must have 3 entries, got {values[name].size}")
        # only wrapped rotations are rewritten so optimizer iterates stay continuous
        if np.linalg.norm(values["rotation"]) >= 2.0 * np.pi:
            values["rotation"] = canonicalize_rotation(values["rotation"])
        for name, array in values.items():
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @classmethod
    def zeros(cls, n_pose: int, n_shape: int = 0) -> "HandParams":
        return cls(theta=np.zeros(n_pose), beta=np.zeros(n_shape))

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(n_pose=len(self.theta), n_shape=len(self.beta))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.theta, self.beta, self.translation, self.rotation])

    @classmethod
    def from_vector(cls, vector: np.ndarray, layout: ParamLayout) -> "HandParams":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (layout.size,):
            raise DimensionMismatch(f"Parameter vector has {vector.size} entries, layout expects {layout.size}")
        return cls(
            theta=vector[layout.theta],
            beta=vector[layout.beta],
            translation=vector[layout.translation],
            rotation=vector[layout.rotation],
        )

    def replace(self, **changes: Any) -> "HandParams":
        values = {
            "theta": self.theta,
            "beta": self.beta,
            "translation": self.translation,
            "rotation": self.rotation,
        }
        values.update(changes)
        return HandParams(**values)

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "theta": self.theta.tolist(),
            "beta": self.beta.tolist(),
            "translation": self.translation.tolist(),
            "rotation": self.rotation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HandParams":
        try:
            return cls(
                theta=data["theta"],
                beta=data.get("beta", []),
                translation=data.get("translation", [0.0, 0.0, 0.0]),
                rotation=data.get("rotation", [0.0, 0.0, 0.0]),
            )
        except KeyError as e:
            raise InvalidParameters(f"Hand parameters missing key {e}") from e


@dataclass(frozen=True, eq=False)
class HandModel:
    """
    Rest mesh, joint tree, skinning weights and linear pose/shape bases.

    Joints are topologically ordered: joint 0 is the root and every other
    joint's parent has a smaller index.
    """

    rest_mesh: TriMesh
    joints_rest: np.ndarray
    parents: np.ndarray
    skinning_weights: np.ndarray
    pose_basis: np.ndarray
    pose_mean: np.ndarray
    shape_basis: Optional[np.ndarray] = None
    joint_names: Tuple[str, ...] = ()
    flexion_axes: Optional[np.ndarray] = None
    tip_vertices: Tuple[int, ...] = ()
    name: str = "hand"

    def __post_init__(self):
        V = self.rest_mesh.n_vertices
        parents = np.asarray(self.parents, dtype=np.int64).reshape(-1)
        J = len(parents)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "joints_rest", np.asarray(self.joints_rest, dtype=np.float64))
        object.__setattr__(self, "skinning_weights", np.asarray(self.skinning_weights, dtype=np.float64))
        object.__setattr__(self, "pose_basis", np.asarray(self.pose_basis, dtype=np.float64))
        object.__setattr__(self, "pose_mean", np.asarray(self.pose_mean, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "tip_vertices", tuple(int(i) for i in self.tip_vertices))
        if self.shape_basis is not None:
            object.__setattr__(self, "shape_basis", np.asarray(self.shape_basis, dtype=np.float64))
        if self.flexion_axes is not None:
            object.__setattr__(self, "flexion_axes", np.asarray(self.flexion_axes, dtype=np.float64))
        if not self.joint_names:
            object.__setattr__(self, "joint_names", tuple(f"joint_{j}" for j in range(J)))
        else:
            object.__setattr__(self, "joint_names", tuple(self.joint_names))
        if not self.rest_mesh.has_normals:
            object.__setattr__(self, "rest_mesh", TriMesh.from_arrays(self.rest_mesh.vertices, self.rest_mesh.faces))
        self._validate(V, J)

    def _validate(self, V: int, J: int) -> None:
        if J == 0:
            raise HandModelError("Hand model has no joints")
        if self.parents[0] != -1:
            raise HandModelError("Joint 0 must be the root (parent -1)")
        for j in range(1, J):
            if not 0 <= self.parents[j] < j:
                raise HandModelError(f"Joint {j} has parent {self.parents[j]}; parents must precede children")
        if self.joints_rest.shape != (J, 3):
            raise HandModelError(f"joints_rest must be ({J}, 3), got {self.joints_rest.shape}")

        weights = self.skinning_weights
        if weights.shape != (V, J):
            raise HandModelError(f"skinning_weights must be ({V}, {J}), got {weights.shape}")
        if np.any(weights < 0):
            raise HandModelError("skinning_weights must be nonnegative")
        row_error = np.abs(weights.sum(axis=1) - 1.0)
        if np.any(row_error > WEIGHT_TOLERANCE):
            raise HandModelError(f"skinning weight rows must sum to 1 (worst error {row_error.max():.2e})")
        influences = np.count_nonzero(weights, axis=1)
        if np.any(influences > MAX_INFLUENCES):
            raise HandModelError(f"At most {MAX_INFLUENCES} joints may influence a vertex, found {influences.max()}")

        basis = self.pose_basis
        if basis.ndim != 2 or basis.shape[0] != 3 * J:
            raise HandModelError(f"pose_basis must have {3 * J} rows, got shape {basis.shape}")
        if basis.shape[1] > 3 * J:
            raise HandModelError("pose_basis has more columns than rotational degrees of freedom")
        if basis.shape[1] and np.linalg.matrix_rank(basis) < basis.shape[1]:
            raise HandModelError("pose_basis columns are linearly dependent")
        if self.pose_mean.shape != (3 * J,):
            raise HandModelError(f"pose_mean must have {3 * J} entries, got {self.pose_mean.size}")

        if self.shape_basis is not None and (self.shape_basis.ndim != 3 or self.shape_basis.shape[:2] != (V, 3)):
            raise HandModelError(f"shape_basis must be ({V}, 3, S), got {self.shape_basis.shape}")
        if self.flexion_axes is not None and self.flexion_axes.shape != (J, 3):
            raise HandModelError(f"flexion_axes must be ({J}, 3), got {self.flexion_axes.shape}")
        if len(self.joint_names) != J:
            raise HandModelError(f"{len(self.joint_names)} joint names for {J} joints")
        if any(not 0 <= i < V for i in self.tip_vertices):
            raise HandModelError("tip vertex index out of range")

    @property
    def n_vertices(self) -> int:
        return self.rest_mesh.n_vertices

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    @property
    def n_pose(self) -> int:
        return self.pose_basis.shape[1]

    @property
    def n_shape(self) -> int:
        return 0 if self.shape_basis is None else self.shape_basis.shape[2]

    @property
    def n_keypoints(self) -> int:
        """Joints followed by fingertip vertices."""
        return self.n_joints + len(self.tip_vertices)

    def zero_params(self, with_shape: bool = False) -> HandParams:
        return HandParams.zeros(self.n_pose, self.n_shape if with_shape else 0)

    def check_params(self, params: HandParams) -> None:
        if len(params.theta) != self.n_pose:
            raise DimensionMismatch(f"theta has {len(params.theta)} coefficients, model expects {self.n_pose}")
        if len(params.beta) not in (0, self.n_shape):
            raise DimensionMismatch(f"beta has {len(params.beta)} coefficients, model expects 0 or {self.n_shape}")

    @cached_property
    def subtree(self) -> np.ndarray:
        """(J, J) boolean: subtree[j, d] when d is j or a descendant of j."""
        J = self.n_joints
        out = np.eye(J, dtype=bool)
        for d in range(J - 1, 0, -1):
            out[self.parents[d]] |= out[d]
        return out

    @cached_property
    def joint_regressor(self) -> np.ndarray:
        """(J, V) weights locating each joint from the vertices it skins."""
        column_sums = self.skinning_weights.sum(axis=0)
        safe = np.where(column_sums > 0, column_sums, 1.0)
        return (self.skinning_weights / safe).T

    def children(self, joint: int) -> List[int]:
        return [int(c) for c in np.flatnonzero(self.parents == joint)]

    def finger_chains(self) -> List[List[int]]:
        """Joint chains hanging off the root, each followed down its first child."""
        chains = []
        for start in self.children(0):
            chain = [start]
            kids = self.children(start)
            while kids:
                chain.append(kids[0])
                kids = self.children(kids[0])
            chains.append(chain)
        return chains

    def chain_vertices(self, joints: Sequence[int], min_weight: float = 0.5) -> np.ndarray:
        """Vertices whose total skinning weight on `joints` is at least `min_weight`."""
        weight = self.skinning_weights[:, list(joints)].sum(axis=1)
        return np.flatnonzero(weight >= min_weight)

    def pose(self, params: HandParams) -> "PosedHand":
        return PosedHand.evaluate(self, params)


@dataclass(frozen=True, eq=False)
class HandJacobian:
    """Derivatives of posed vertices (and optionally normals) w.r.t. the parameter vector."""

    indices: np.ndarray
    vertices: np.ndarray
    layout: ParamLayout
    normals: Optional[np.ndarray] = None

    @property
    def n_vertices(self) -> int:
        return len(self.indices)

    @property
    def matrix(self) -> np.ndarray:
        """(3N, D) stacked form, rows x0, y0, z0, x1, ..."""
        return self.vertices.reshape(-1, self.layout.size)


@dataclass(frozen=True, eq=False)
class PosedHand:
    """A hand evaluated at one parameter set, with what its Jacobian needs."""

    model: HandModel
    params: HandParams
    mesh: TriMesh
    keypoints: np.ndarray
    local_rotvecs: np.ndarray
    global_rotations: np.ndarray
    joint_positions: np.ndarray
    shaped_joints: np.ndarray
    blended: np.ndarray
    skinned: np.ndarray
    root_rotation: np.ndarray

    @classmethod
    def evaluate(cls, model: HandModel, params: HandParams) -> "PosedHand":
        model.check_params(params)
        J = model.n_joints
        parents = model.parents

        rest = model.rest_mesh.vertices
        joints = model.joints_rest
        if len(params.beta):
            displacement = model.shape_basis @ params.beta
            rest = rest + displacement
            joints = joints + model.joint_regressor @ displacement

        local_rotvecs = (model.pose_mean + model.pose_basis @ params.theta).reshape(J, 3)
        local = rotvec_to_matrix(local_rotvecs)
        G = np.empty((J, 3, 3))
        p = np.empty((J, 3))
        G[0] = local[0]
        p[0] = joints[0]
        for j in range(1, J):
            par = parents[j]
            G[j] = G[par] @ local[j]
            p[j] = p[par] + G[par] @ (joints[j] - joints[par])

        # blended[v, d] = G_d (x_v - J_d) + p_d
        blended = np.einsum("dab,vdb->vda", G, rest[:, None, :] - joints[None, :, :]) + p[None]
        skinned = np.einsum("vd,vda->va", model.skinning_weights, blended)

        R = rotvec_to_matrix(params.rotation)
        vertices = skinned @ R.T + params.translation
        joint_out = p @ R.T + params.translation
        mesh = TriMesh.from_arrays(vertices, model.rest_mesh.faces)
        keypoints = np.vstack([joint_out, vertices[list(model.tip_vertices)]]) if model.tip_vertices else joint_out
        return cls(
            model=model,
            params=params,
            mesh=mesh,
            keypoints=keypoints,
            local_rotvecs=local_rotvecs,
            global_rotations=G,
            joint_positions=p,
            shaped_joints=joints,
            blended=blended,
            skinned=skinned,
            root_rotation=R,
        )

    def jacobian(self, vertex_subset: Optional[np.ndarray] = None, with_normals: bool = False) -> HandJacobian:
        """
        d(posed vertex)/d[theta, beta, translation, rotation] for a vertex subset.

        With `with_normals`, the derivative of the area-weighted unit vertex
        normals is included; it needs every vertex, so the full Jacobian is
        formed first and then sliced.
        """
        model = self.model
        layout = self.params.layout
        if vertex_subset is None:
            indices = np.arange(model.n_vertices)
        else:
            indices = np.asarray(vertex_subset, dtype=np.int64).reshape(-1)
            if indices.size and (indices.min() < 0 or indices.max() >= model.n_vertices):
                raise DimensionMismatch("vertex subset index out of range")
        rows = np.arange(model.n_vertices) if with_normals else indices
        full = self._vertex_jacobian(rows, layout)
        if not with_normals:
            return HandJacobian(indices=indices, vertices=full, layout=layout)
        normals = vertex_normal_jacobian(self.mesh, full)
        return HandJacobian(indices=indices, vertices=full[indices], normals=normals[indices], layout=layout)

    def _vertex_jacobian(self, rows: np.ndarray, layout: ParamLayout) -> np.ndarray:
        model = self.model
        R = self.root_rotation
        G = self.global_rotations
        p = self.joint_positions
        W = model.skinning_weights[rows]
        blended = self.blended[rows]
        subtree = model.subtree.astype(np.float64)
        out = np.zeros((len(rows), 3, layout.size))

        # pose: rotating joint j by omega moves every vertex by omega x S_vj (pre-root frame)
        S = np.einsum("nd,jd,nda->nja", W, subtree, blended) - np.einsum("nd,jd->nj", W, subtree)[..., None] * p[None]
        M = G @ right_jacobian(self.local_rotvecs)
        d_local = -np.einsum("ab,njbc,jcd->njad", R, skew(S), M)
        d_rotvec = d_local.transpose(0, 2, 1, 3).reshape(len(rows), 3, -1)
        out[:, :, layout.theta] = d_rotvec @ model.pose_basis

        if layout.n_shape:
            out[:, :, layout.beta] = self._shape_jacobian(rows, W)

        out[:, :, layout.translation] = np.eye(3)
        pre = self.skinned[rows]
        out[:, :, layout.rotation] = -np.einsum("ab,nbc,cd->nad", R, skew(pre), right_jacobian(self.params.rotation))
        return out

    def _shape_jacobian(self, rows: np.ndarray, W: np.ndarray) -> np.ndarray:
        model = self.model
        G = self.global_rotations
        basis = model.shape_basis
        d_rest = basis[rows]
        d_joints = np.einsum("jv,vas->jas", model.joint_regressor, basis)
        d_pos = np.empty_like(d_joints)
        d_pos[0] = d_joints[0]
        for j in range(1, model.n_joints):
            par = model.parents[j]
            d_pos[j] = d_pos[par] + G[par] @ (d_joints[j] - d_joints[par])
        blend_rot = np.einsum("nd,dab->nab", W, G)
        offsets = np.einsum("dab,dbs->das", G, d_joints) - d_pos
        d_pre = np.einsum("nab,nbs->nas", blend_rot, d_rest) - np.einsum("nd,das->nas", W, offsets)
        return np.einsum("ab,nbs->nas", self.root_rotation, d_pre)


def pose_hand(model: HandModel, params: HandParams) -> Tuple[TriMesh, np.ndarray]:
    """
    Posed hand mesh (normals recomputed) and keypoints (joints, then fingertips).

    Raises:
        DimensionMismatch: if params do not fit the model
    """
    posed = PosedHand.evaluate(model, params)
    return posed.mesh, posed.keypoints


def pose_jacobian(
    model: HandModel,
    params: HandParams,
    vertex_subset: Optional[np.ndarray] = None,
    with_normals: bool = False,
) -> HandJacobian:
    """Analytic Jacobian of the posed vertices in `vertex_subset` (all if None)."""
    return PosedHand.evaluate(model, params).jacobian(vertex_subset, with_normals=with_normals)
