"""
Least-squares identification of gravity parameters from (pose, torque) data
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Literal, Optional, Tuple

import numpy as np

from config import config
from errors import DimensionError
from gravity_model import (
    PARAMS_PER_LINK,
    BaseParamMap,
    GravityParams,
    ParamsLike,
    base_map_from_regressor,
    gravity_regressor,
    gravity_regressor_batch,
    gravity_torque_batch,
    sample_poses,
)
from kinematics import RobotModel, check_dimension
from logging_config import LogExecutionTime

logger = logging.getLogger(__name__)

SolveMethod = Literal["svd", "normal"]


@dataclass(frozen=True)
class Dataset:
    """Ordered (q, tau) samples; row k of ``q`` pairs with row k of ``tau``"""

    q: np.ndarray
    tau: np.ndarray
    meta: str = ""

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        if q.shape != tau.shape:
            raise DimensionError(f"pose block {q.shape} and torque block {tau.shape} differ")
        if q.shape[0] < 1 or q.shape[1] < 1:
            raise DimensionError("dataset has no samples")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(tau))):
            raise ValueError("dataset values must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "tau", tau)

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.q[index], self.tau[index], self.meta)


@dataclass
class IdentReport:
    """Outcome of one least-squares fit"""

    params_full: GravityParams
    params_base: np.ndarray
    base_columns: np.ndarray
    residual_rms: float
    per_joint_rms: np.ndarray
    condition_number: float
    rank: int
    n_samples: int
    method: str = "svd"
    base_relative_std: Optional[np.ndarray] = None
    validation_rms: Optional[float] = None
    validation_per_joint_rms: Optional[np.ndarray] = None
    n_validation: int = 0
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        def listify(value):
            return None if value is None else np.asarray(value).tolist()

        return {
            "params_full": self.params_full.full.tolist(),
            "params_base": listify(self.params_base),
            "base_columns": [int(j) for j in self.base_columns],
            "residual_rms": self.residual_rms,
            "per_joint_rms": listify(self.per_joint_rms),
            "condition_number": self.condition_number,
            "rank": self.rank,
            "n_samples": self.n_samples,
            "method": self.method,
            "base_relative_std": listify(self.base_relative_std),
            "validation_rms": self.validation_rms,
            "validation_per_joint_rms": listify(self.validation_per_joint_rms),
            "n_validation": self.n_validation,
            **self.extra,
        }


def _check_dataset(model: RobotModel, data: Dataset) -> None:
    if data.n != model.n:
        raise DimensionError(f"dataset has {data.n} joints, robot '{model.name}' has {model.n}")


def stack(model: RobotModel, data: Dataset, jobs: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Stacked regressor (N*n x 4n) and torque vector (N*n), in dataset order"""
    _check_dataset(model, data)
    if jobs > 1 and data.n_samples > 1:
        chunks = np.array_split(np.arange(data.n_samples), min(jobs, data.n_samples))
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            # map() yields in submission order, so assembly is deterministic
            blocks = list(pool.map(lambda idx: gravity_regressor_batch(model, data.q[idx]), chunks))
        Y = np.concatenate(blocks, axis=0)
    else:
        Y = gravity_regressor_batch(model, data.q)
    return Y.reshape(-1, PARAMS_PER_LINK * model.n), data.tau.reshape(-1)


def _per_joint_rms(residual: np.ndarray, n_joints: Optional[int]) -> np.ndarray:
    if not n_joints or residual.size % n_joints:
        return np.array([np.sqrt(np.mean(residual ** 2))]) if residual.size else np.zeros(1)
    return np.sqrt(np.mean(residual.reshape(-1, n_joints) ** 2, axis=0))


def _relative_std(Yb: np.ndarray, beta: np.ndarray, residual: np.ndarray) -> Optional[np.ndarray]:
    """Relative standard deviation (%) of base parameters from the residual variance"""
    dof = Yb.shape[0] - Yb.shape[1]
    if dof <= 0 or Yb.shape[1] == 0:
        return None
    sigma2 = float(residual @ residual) / dof
    try:
        cov = sigma2 * np.linalg.inv(Yb.T @ Yb)
    except np.linalg.LinAlgError:
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = 100.0 * np.sqrt(np.clip(np.diag(cov), 0.0, None)) / np.abs(beta)
    return np.where(np.isfinite(rel), rel, np.inf)


def solve(stacked: np.ndarray, torques: np.ndarray, tol: Optional[float] = None, *,
          n_joints: Optional[int] = None, base_map: Optional[BaseParamMap] = None,
          method: SolveMethod = "svd") -> IdentReport:
    """Minimum-norm least squares ``stacked @ params ~= torques``

    ``method="svd"`` zeroes singular values below ``tol * sigma_max``;
    ``method="normal"`` solves (Yb^T Yb) beta = Yb^T tau on the base columns
    and lifts beta to the minimum-norm full vector.
    """
    if tol is None:
        tol = config.svd_tol
    if method not in ("svd", "normal"):
        raise ValueError(f"unknown solve method {method!r}")
    Y = np.asarray(stacked, dtype=float)
    tau = np.asarray(torques, dtype=float).reshape(-1)
    if Y.ndim != 2 or Y.shape[0] != tau.size:
        raise DimensionError(f"regressor {Y.shape} does not match {tau.size} torques")
    rows, cols = Y.shape
    if base_map is None:
        base_map = base_map_from_regressor(Y)

    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    retained = s > tol * s[0] if s.size and s[0] > 0 else np.zeros(s.size, dtype=bool)
    rank = int(retained.sum())

    if rank == 0:
        logger.warning("All-zero regressor: returning zero parameters")
        estimate = np.zeros(cols)
        condition_number = float("inf")
    elif method == "svd":
        estimate = Vt[:rank].T @ ((U[:, :rank].T @ tau) / s[:rank])
        condition_number = float(s[0] / s[rank - 1])
    else:
        Yb = Y[:, base_map.independent_columns]
        beta = np.linalg.solve(Yb.T @ Yb, Yb.T @ tau)
        estimate = base_map.from_base(beta).full
        condition_number = float(s[0] / s[rank - 1])

    residual = Y @ estimate - tau
    residual_rms = float(np.linalg.norm(residual) / np.sqrt(rows)) if rows else 0.0
    params_base = base_map.to_base(estimate) if base_map.rank else np.zeros(0)

    return IdentReport(
        params_full=GravityParams(estimate),
        params_base=params_base,
        base_columns=base_map.independent_columns,
        residual_rms=residual_rms,
        per_joint_rms=_per_joint_rms(residual, n_joints),
        condition_number=condition_number,
        rank=rank,
        n_samples=rows // n_joints if n_joints else rows,
        method=method,
        base_relative_std=(
            _relative_std(Y[:, base_map.independent_columns], params_base, residual)
            if base_map.rank else None
        ),
    )


def _validation_split(data: Dataset, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Train/held-out indices independent of the sample order in the file"""
    canonical = np.lexsort(np.hstack([data.q, data.tau]).T[::-1])
    shuffled = canonical[np.random.default_rng(seed).permutation(data.n_samples)]
    n_hold = int(round(fraction * data.n_samples))
    return np.sort(shuffled[n_hold:]), np.sort(shuffled[:n_hold])


def identify(model: RobotModel, data: Dataset, tol: Optional[float] = None, *,
             validation_fraction: Optional[float] = None, seed: int = 0,
             method: SolveMethod = "svd", jobs: int = 1,
             base_map: Optional[BaseParamMap] = None) -> IdentReport:
    """Fit on all samples and report a held-out residual from a separate split fit"""
    if validation_fraction is None:
        validation_fraction = config.validation_fraction

    with LogExecutionTime(f"identification ({data.n_samples} samples)", logger):
        Y, tau = stack(model, data, jobs=jobs)
        report = solve(Y, tau, tol, n_joints=model.n, base_map=base_map, method=method)

        n_hold = int(round(validation_fraction * data.n_samples))
        if n_hold >= config.min_validation_samples and data.n_samples - n_hold >= 1:
            train, held = _validation_split(data, validation_fraction, seed)
            Yt, taut = Y.reshape(data.n_samples, model.n, -1)[train], data.tau[train]
            fit = solve(Yt.reshape(-1, Y.shape[1]), taut.reshape(-1), tol,
                        n_joints=model.n, method=method)
            held_residual = gravity_torque_batch(model, data.q[held], fit.params_full) - data.tau[held]
            report.validation_rms = float(np.sqrt(np.mean(held_residual ** 2)))
            report.validation_per_joint_rms = np.sqrt(np.mean(held_residual ** 2, axis=0))
            report.n_validation = len(held)

    logger.info(
        f"Identified rank {report.rank}, residual rms {report.residual_rms:.3e} N*m, "
        f"cond {report.condition_number:.3e}"
    )
    return report


def synth_dataset(model: RobotModel, params_true: ParamsLike, n_poses: int,
                  noise_std: float = 0.0, seed: int = 0) -> Dataset:
    """Simulated hold-pose measurements with i.i.d. Gaussian torque noise"""
    if n_poses < 1:
        raise ValueError(f"n_poses must be >= 1, got {n_poses}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    rng = np.random.default_rng(seed)
    q = sample_poses(model, n_poses, rng)
    tau = gravity_torque_batch(model, q, params_true)
    if noise_std > 0:
        tau = tau + rng.normal(0.0, noise_std, size=tau.shape)
    meta = f"synthetic: robot={model.name} poses={n_poses} noise_std={noise_std:g} seed={seed}"
    logger.debug(meta)
    return Dataset(q, tau, meta)


def predict(model: RobotModel, report: IdentReport, q) -> np.ndarray:
    """Gravity torque at ``q`` from identified parameters"""
    q = check_dimension(q, model.n)
    if report.params_full.n != model.n:
        raise DimensionError(
            f"report holds parameters for {report.params_full.n} joints, robot has {model.n}"
        )
    return gravity_regressor(model, q) @ report.params_full.full
