"""
Gravity potential, gravity torque and the linear regressor factorization

The parameter vector holds four entries per link, ``[m, m*cx, m*cy, m*cz]``,
with the COM expressed in the link's own DH frame. Every quantity here is
linear in that vector.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg

from config import config
from dynamics_kernels import dh_frames, gravity_from_frames
from errors import DimensionError
from kinematics import FrameBatch, RobotModel, chain_frames, check_dimension
from logging_config import LogExecutionTime

logger = logging.getLogger(__name__)

PARAMS_PER_LINK = 4
PARAM_NAMES = ("m", "mcx", "mcy", "mcz")


@dataclass(frozen=True)
class GravityParams:
    """Full gravity parameter vector, 4 entries per link"""

    full: np.ndarray

    def __post_init__(self):
        full = np.asarray(self.full, dtype=float).reshape(-1)
        if full.size == 0 or full.size % PARAMS_PER_LINK:
            raise DimensionError(f"parameter vector length {full.size} is not a multiple of 4")
        if not np.all(np.isfinite(full)):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "full", full)

    @property
    def n(self) -> int:
        return self.full.size // PARAMS_PER_LINK

    @classmethod
    def zeros(cls, n: int) -> "GravityParams":
        return cls(np.zeros(PARAMS_PER_LINK * n))

    @classmethod
    def unit(cls, n: int, j: int) -> "GravityParams":
        full = np.zeros(PARAMS_PER_LINK * n)
        full[j] = 1.0
        return cls(full)

    @classmethod
    def from_model(cls, model: RobotModel) -> "GravityParams":
        masses = model.masses
        return cls(np.column_stack([masses, masses[:, None] * model.coms]).reshape(-1))

    def names(self) -> list:
        return [f"{name}{i + 1}" for i in range(self.n) for name in PARAM_NAMES]


ParamsLike = Union[GravityParams, np.ndarray, list]


def as_param_vector(params: ParamsLike, n: int) -> np.ndarray:
    if isinstance(params, GravityParams):
        params = params.full
    return check_dimension(params, PARAMS_PER_LINK * n, "params")


def _first_moments(model: RobotModel, frames: FrameBatch, full: np.ndarray) -> np.ndarray:
    """(B, n, 3) base-frame first moments m_i o_i + R_i (m c)_i"""
    blocks = full.reshape(model.n, PARAMS_PER_LINK)
    masses, moments = blocks[:, 0], blocks[:, 1:]
    return (masses[None, :, None] * frames.origins[:, 1:]
            + np.einsum("bnij,nj->bni", frames.rotations[:, 1:], moments))


def _torque_from_frames(model: RobotModel, frames: FrameBatch, full: np.ndarray) -> np.ndarray:
    """(B, n) gravity torque, dP/dq, for precomputed frames"""
    masses = full.reshape(model.n, PARAMS_PER_LINK)[:, 0]
    moments = _first_moments(model, frames, full)
    # outboard sums: everything from link k to the tip moves with joint k
    outboard_moment = np.cumsum(moments[:, ::-1], axis=1)[:, ::-1]
    outboard_mass = np.cumsum(masses[::-1])[::-1]
    lever = outboard_moment - outboard_mass[None, :, None] * frames.origins[:, :-1]
    axes = frames.rotations[:, :-1, :, 2]
    return -model.signs * np.einsum("j,bkj->bk", model.gravity, np.cross(axes, lever))


def potential_energy(model: RobotModel, q, params: ParamsLike) -> float:
    """P = -g . sum_i (m_i o_i + R_i (m c)_i), i.e. g * sum m_i h_i"""
    q = check_dimension(q, model.n)
    full = as_param_vector(params, model.n)
    moments = _first_moments(model, chain_frames(model, q), full)
    return float(-model.gravity @ moments[0].sum(axis=0))


def gravity_torque_batch(model: RobotModel, Q, params: ParamsLike) -> np.ndarray:
    full = as_param_vector(params, model.n)
    return _torque_from_frames(model, chain_frames(model, Q), full)


def gravity_torque(model: RobotModel, q, params: ParamsLike) -> np.ndarray:
    """Static holding torque dP/dq at pose ``q`` (compiled kernel shared with the plant)"""
    q = np.ascontiguousarray(check_dimension(q, model.n))
    blocks = np.ascontiguousarray(as_param_vector(params, model.n).reshape(model.n, PARAMS_PER_LINK))
    R, O = dh_frames(*model.dh_arrays, q)
    return gravity_from_frames(R, O, model.dh_arrays[0], blocks, model.gravity)


def gravity_regressor_batch(model: RobotModel, Q) -> np.ndarray:
    """(B, n, 4n) regressors; column j is the torque produced by unit parameter j"""
    frames = chain_frames(model, Q)
    p = PARAMS_PER_LINK * model.n
    Y = np.empty((frames.origins.shape[0], model.n, p))
    for j in range(p):
        Y[:, :, j] = _torque_from_frames(model, frames, GravityParams.unit(model.n, j).full)
    return Y


def gravity_regressor(model: RobotModel, q) -> np.ndarray:
    """n x 4n matrix Y(q) with Y(q) @ params == gravity_torque(q, params)"""
    q = check_dimension(q, model.n)
    return gravity_regressor_batch(model, q)[0]


def sample_poses(model: RobotModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform poses within joint limits, else within [-pi, pi]"""
    if model.joint_limits is not None:
        lo, hi = np.array(model.joint_limits).T
    else:
        lo, hi = np.full(model.n, -np.pi), np.full(model.n, np.pi)
    return rng.uniform(lo, hi, size=(count, model.n))


@dataclass(frozen=True)
class BaseParamMap:
    """Identifiable (base) combinations of the full parameter vector

    ``recombination @ full`` gives the base parameters; the regressor restricted
    to ``independent_columns`` times those base parameters reproduces the
    full-regressor torque.
    """

    independent_columns: np.ndarray
    recombination: np.ndarray
    rank: int
    condition_number: float

    @property
    def n_full(self) -> int:
        return self.recombination.shape[1]

    def to_base(self, params: ParamsLike) -> np.ndarray:
        full = check_dimension(
            params.full if isinstance(params, GravityParams) else params, self.n_full, "params"
        )
        return self.recombination @ full

    def from_base(self, base) -> GravityParams:
        """Minimum-norm full vector with the given base parameters"""
        base = check_dimension(base, self.rank, "base params")
        if self.rank == 0:
            return GravityParams(np.zeros(self.n_full))
        return GravityParams(np.linalg.pinv(self.recombination) @ base)

    def column_names(self, names: list) -> list:
        return [names[j] for j in self.independent_columns]


def base_map_from_regressor(Y: np.ndarray, tol: Optional[float] = None) -> BaseParamMap:
    """Rank-revealing QR (column pivoting) on a stacked regressor"""
    if tol is None:
        tol = config.rank_tol
    if tol <= 0:
        raise ValueError("rank tolerance must be positive")
    p = Y.shape[1]
    _, R, piv = scipy.linalg.qr(Y, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))

    rank = 0
    if diag.size and diag[0] > 0:
        keep = diag > tol * diag[0]
        rank = int(np.argmin(keep)) if not keep.all() else int(keep.size)

    if rank == 0:
        logger.warning("Regressor has rank 0: no gravity parameter is identifiable")
        return BaseParamMap(np.array([], dtype=int), np.zeros((0, p)), 0, float("inf"))

    independent, dependent = piv[:rank], piv[rank:]
    recombination = np.zeros((rank, p))
    recombination[:, independent] = np.eye(rank)
    if dependent.size:
        recombination[:, dependent] = scipy.linalg.solve_triangular(
            R[:rank, :rank], R[:rank, rank:]
        )

    order = np.argsort(independent)
    independent = independent[order]
    recombination = recombination[order]
    condition_number = float(np.linalg.cond(Y[:, independent]))
    return BaseParamMap(independent, recombination, rank, condition_number)


def base_reduction(model: RobotModel, n_poses: Optional[int] = None, seed: int = 0,
                   tol: Optional[float] = None) -> BaseParamMap:
    """Numerically find the identifiable parameter combinations of ``model``"""
    if n_poses is None:
        n_poses = config.base_poses
    if n_poses < 1:
        raise ValueError(f"n_poses must be >= 1, got {n_poses}")
    if n_poses < PARAMS_PER_LINK * model.n:
        logger.warning(
            f"{n_poses} poses for {PARAMS_PER_LINK * model.n} parameters; "
            f"at least {PARAMS_PER_LINK * model.n} recommended"
        )

    with LogExecutionTime(f"base reduction ({n_poses} poses)", logger):
        Q = sample_poses(model, n_poses, np.random.default_rng(seed))
        Y = gravity_regressor_batch(model, Q).reshape(-1, PARAMS_PER_LINK * model.n)
        base_map = base_map_from_regressor(Y, tol)

    logger.info(
        f"{model.name}: {base_map.rank} base parameters out of "
        f"{PARAMS_PER_LINK * model.n} (seed={seed})"
    )
    return base_map
