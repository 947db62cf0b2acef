"""
Denavit-Hartenberg forward kinematics for serial revolute chains
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionError

logger = logging.getLogger(__name__)

_OFFSET_BOUND = 2.0 * math.pi + 1e-12


def check_dimension(values, n: int, what: str = "q") -> np.ndarray:
    """Return ``values`` as a float vector of length ``n`` or raise DimensionError"""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise DimensionError(f"{what} must have {n} entries, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DHRow:
    """One row of a DH table; the joint angle is ``sign * q + theta_offset``"""

    sign: int
    theta_offset: float
    d: float
    alpha: float
    a: float

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ValueError(f"DH sign must be -1 or +1, got {self.sign!r}")
        for name in ("theta_offset", "d", "alpha", "a"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"DH {name} must be finite")
        if abs(self.theta_offset) > _OFFSET_BOUND:
            raise ValueError(f"theta_offset {self.theta_offset} outside [-2pi, 2pi]")


@dataclass(frozen=True)
class Transform:
    """Rigid transform: rotation (3x3) and translation (3,)"""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.eye(3), np.zeros(3))

    @property
    def origin(self) -> np.ndarray:
        return self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form"""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: "Transform") -> "Transform":
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True)
class LinkInertia:
    """Point-mass inertial data of one link; ``com`` is expressed in the link frame"""

    mass: float
    com: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        com = np.asarray(self.com, dtype=float).reshape(-1)
        if com.shape != (3,) or not np.all(np.isfinite(com)):
            raise ValueError("link com must be 3 finite numbers")
        if not math.isfinite(self.mass) or self.mass < 0:
            raise ValueError(f"link mass must be finite and >= 0, got {self.mass}")
        object.__setattr__(self, "com", com)


@dataclass(frozen=True)
class RobotModel:
    """DH chain, per-link inertia and the gravity vector (base frame)"""

    name: str
    dh: Tuple[DHRow, ...]
    links: Tuple[LinkInertia, ...]
    gravity: np.ndarray
    joint_limits: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "dh", tuple(self.dh))
        object.__setattr__(self, "links", tuple(self.links))
        gravity = np.asarray(self.gravity, dtype=float).reshape(-1)
        if gravity.shape != (3,) or not np.all(np.isfinite(gravity)):
            raise ValueError("gravity must be 3 finite numbers")
        object.__setattr__(self, "gravity", gravity)

        if len(self.dh) < 1:
            raise ValueError("robot needs at least one joint")
        if len(self.dh) != len(self.links):
            raise DimensionError(
                f"{len(self.dh)} DH rows but {len(self.links)} links"
            )
        if self.joint_limits is not None:
            limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
            if len(limits) != len(self.dh):
                raise DimensionError(
                    f"{len(limits)} joint limits for {len(self.dh)} joints"
                )
            for k, (lo, hi) in enumerate(limits):
                if not lo < hi:
                    raise ValueError(f"joint {k + 1}: limit lo={lo} is not below hi={hi}")
            object.__setattr__(self, "joint_limits", limits)

    @property
    def n(self) -> int:
        return len(self.dh)

    @property
    def signs(self) -> np.ndarray:
        return np.array([row.sign for row in self.dh], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([link.mass for link in self.links])

    @property
    def coms(self) -> np.ndarray:
        return np.array([link.com for link in self.links])

    @cached_property
    def dh_arrays(self) -> Tuple[np.ndarray, ...]:
        """(signs, theta_offsets, d, alpha, a) as float vectors"""
        return tuple(
            np.array([getattr(row, name) for row in self.dh], dtype=float)
            for name in ("sign", "theta_offset", "d", "alpha", "a")
        )

    def with_gravity(self, gravity) -> "RobotModel":
        return RobotModel(self.name, self.dh, self.links, gravity, self.joint_limits)

    def with_params(self, values) -> "RobotModel":
        """Rebuild link masses/COMs from a 4n vector of [m, m*cx, m*cy, m*cz] blocks"""
        blocks = check_dimension(values, 4 * self.n, "params").reshape(self.n, 4)
        links = []
        for k, (mass, *moment) in enumerate(blocks):
            moment = np.asarray(moment)
            if mass > 0:
                com = moment / mass
            elif np.allclose(moment, 0.0):
                com = np.zeros(3)
            else:
                raise ValueError(
                    f"link {k + 1}: first moment without mass has no physical COM"
                )
            links.append(LinkInertia(float(mass), com))
        return RobotModel(self.name, self.dh, tuple(links), self.gravity, self.joint_limits)


@dataclass(frozen=True)
class JointState:
    """Joint positions and velocities as measured; finiteness is checked by consumers"""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        qdot = np.asarray(self.qdot, dtype=float).reshape(-1)
        if q.shape != qdot.shape:
            raise DimensionError(f"q has {q.size} entries but qdot has {qdot.size}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @classmethod
    def at_rest(cls, q) -> "JointState":
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros_like(q))


def dh_theta(row: DHRow, qi: float) -> float:
    return row.sign * qi + row.theta_offset


def dh_transform(row: DHRow, qi: float) -> Transform:
    """RotZ(theta) . TransZ(d) . TransX(a) . RotX(alpha) (distal convention)"""
    theta = dh_theta(row, qi)
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    rotation = np.array([
        [ct, -st * ca, st * sa],
        [st, ct * ca, -ct * sa],
        [0.0, sa, ca],
    ])
    translation = np.array([row.a * ct, row.a * st, row.d])
    return Transform(rotation, translation)


def forward_kinematics(model: RobotModel, q: Sequence[float]) -> List[Transform]:
    """Base-frame transforms T_0^i for i = 1..n"""
    q = check_dimension(q, model.n)
    frames = []
    T = Transform.identity()
    for row, qi in zip(model.dh, q):
        T = T @ dh_transform(row, qi)
        frames.append(T)
    return frames


@dataclass(frozen=True)
class FrameBatch:
    """Frames 0..n for a batch of poses

    rotations: (B, n+1, 3, 3), origins: (B, n+1, 3); index 0 is the base frame.
    """

    rotations: np.ndarray
    origins: np.ndarray


def chain_frames(model: RobotModel, Q) -> FrameBatch:
    """Vectorised forward kinematics over a (B, n) array of poses"""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.ndim != 2 or Q.shape[1] != model.n:
        raise DimensionError(f"poses must have {model.n} columns, got shape {Q.shape}")
    B, n = Q.shape

    signs, offsets, d, alpha, a = model.dh_arrays
    theta = Q * signs + offsets
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)

    A = np.empty((B, n, 3, 3))
    A[..., 0, 0] = ct
    A[..., 0, 1] = -st * ca
    A[..., 0, 2] = st * sa
    A[..., 1, 0] = st
    A[..., 1, 1] = ct * ca
    A[..., 1, 2] = -ct * sa
    A[..., 2, 0] = 0.0
    A[..., 2, 1] = sa
    A[..., 2, 2] = ca
    t = np.stack([a * ct, a * st, np.broadcast_to(d, (B, n))], axis=-1)

    R = np.empty((B, n + 1, 3, 3))
    O = np.empty((B, n + 1, 3))
    R[:, 0] = np.eye(3)
    O[:, 0] = 0.0
    for i in range(n):
        R[:, i + 1] = R[:, i] @ A[:, i]
        O[:, i + 1] = O[:, i] + np.einsum("bjk,bk->bj", R[:, i], t[:, i])
    return FrameBatch(R, O)


def com_positions_batch(model: RobotModel, frames: FrameBatch) -> np.ndarray:
    """(B, n, 3) base-frame COM positions"""
    return np.einsum("bnij,nj->bni", frames.rotations[:, 1:], model.coms) + frames.origins[:, 1:]


def com_jacobians_batch(model: RobotModel, frames: FrameBatch,
                        points: Optional[np.ndarray] = None) -> np.ndarray:
    """(B, n_links, 3, n_joints) translational Jacobians of the link COMs"""
    if points is None:
        points = com_positions_batch(model, frames)
    axes = frames.rotations[:, :-1, :, 2]
    joint_origins = frames.origins[:, :-1]
    lever = points[:, :, None, :] - joint_origins[:, None, :, :]
    cols = np.cross(axes[:, None, :, :], lever)
    # distal joints cannot move proximal COMs
    mask = np.tril(np.ones((model.n, model.n)))
    cols = cols * (mask * model.signs)[None, :, :, None]
    return cols.transpose(0, 1, 3, 2)


def com_positions(model: RobotModel, q: Sequence[float]) -> np.ndarray:
    """(n, 3) array; row i is R_i com_i + o_i"""
    q = check_dimension(q, model.n)
    return com_positions_batch(model, chain_frames(model, q))[0]


def com_jacobian(model: RobotModel, q: Sequence[float], i: int) -> np.ndarray:
    """3 x n Jacobian of link ``i``'s COM (1-based link index)"""
    q = check_dimension(q, model.n)
    if not 1 <= i <= model.n:
        raise IndexError(f"link index {i} outside 1..{model.n}")
    return com_jacobians_batch(model, chain_frames(model, q))[0, i - 1]
