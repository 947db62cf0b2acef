"""
Point-mass rigid-body plant: mass matrix, Coriolis terms, forward dynamics
and fixed-step integration under a torque controller
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from tqdm import tqdm

from config import config
from dynamics_kernels import dh_frames, gravity_from_frames, mass_and_velocity_torque
from errors import DimensionError, SimulationDivergence, SingularMassMatrixError
from gravity_model import PARAMS_PER_LINK, ParamsLike, as_param_vector, potential_energy
from kinematics import (
    FrameBatch,
    JointState,
    RobotModel,
    chain_frames,
    check_dimension,
    com_jacobians_batch,
)
from logging_config import LogExecutionTime

logger = logging.getLogger(__name__)

INTEGRATORS = ("semi_implicit_euler", "rk4")

PerJoint = Union[float, Sequence[float], np.ndarray]


def _per_joint(value: PerJoint, n: int, what: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return check_dimension(arr, n, what)


@dataclass(frozen=True)
class SimConfig:
    dt: float = field(default_factory=lambda: config.sim_dt)
    duration: float = field(default_factory=lambda: config.sim_duration)
    integrator: str = field(default_factory=lambda: config.integrator)
    armature: PerJoint = field(default_factory=lambda: config.armature)
    viscous_friction: PerJoint = field(default_factory=lambda: config.viscous_friction)
    actuation_delay: int = 0
    locked: Optional[Tuple[bool, ...]] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.dt > self.duration:
            raise ValueError(f"dt={self.dt} exceeds duration={self.duration}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}, got {self.integrator!r}")
        if self.actuation_delay < 0:
            raise ValueError("actuation_delay must be >= 0")
        if np.any(np.asarray(self.armature) < 0):
            raise ValueError("armature must be >= 0")
        if np.any(np.asarray(self.viscous_friction) < 0):
            raise ValueError("viscous_friction must be >= 0")
        if self.locked is not None:
            object.__setattr__(self, "locked", tuple(bool(v) for v in self.locked))

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def armature_for(self, n: int) -> np.ndarray:
        return _per_joint(self.armature, n, "armature")

    def viscous_for(self, n: int) -> np.ndarray:
        return _per_joint(self.viscous_friction, n, "viscous_friction")

    def locked_mask(self, n: int) -> np.ndarray:
        if self.locked is None:
            return np.zeros(n, dtype=bool)
        return check_dimension(self.locked, n, "locked").astype(bool)


@dataclass(frozen=True)
class PlantState:
    t: float
    joint: JointState

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"time must be >= 0, got {self.t}")


@dataclass(frozen=True)
class TrajectoryLog:
    """Uniformly sampled rows of (t, q, qdot, applied torque)"""

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        arrays = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.q, self.qdot, self.tau)]
        for arr in arrays:
            if arr.shape != arrays[0].shape or arr.shape[0] != t.size:
                raise DimensionError("log columns must share the row count and joint count")
        if t.size > 1:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise ValueError("log time stamps must be strictly increasing")
            if not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12):
                raise ValueError("log time stamps must be uniformly spaced")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", arrays[0])
        object.__setattr__(self, "qdot", arrays[1])
        object.__setattr__(self, "tau", arrays[2])

    @classmethod
    def from_signal(cls, t, q) -> "TrajectoryLog":
        """Log carrying only positions (velocities/torques zero), e.g. a measured signal"""
        q = np.asarray(q, dtype=float)
        if q.ndim == 1:
            q = q[:, None]
        return cls(t, q, np.zeros_like(q), np.zeros_like(q))

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    def __len__(self) -> int:
        return self.t.size


class Controller(Protocol):
    def __call__(self, t: float, measured: JointState, dt: float) -> np.ndarray:
        ...


def plant_model(model: RobotModel, params_plant: ParamsLike) -> RobotModel:
    """Plant whose point masses carry ``params_plant`` so M(q) and G(q) agree"""
    return model.with_params(as_param_vector(params_plant, model.n))


def _mass_matrices(model: RobotModel, frames: FrameBatch, armature: np.ndarray) -> np.ndarray:
    J = com_jacobians_batch(model, frames)
    M = np.einsum("i,bixk,bixl->bkl", model.masses, J, J)
    return M + np.diag(armature)


def mass_matrix(model: RobotModel, q, armature: Optional[PerJoint] = None) -> np.ndarray:
    """M(q) = sum_i m_i J_i^T J_i + diag(armature)"""
    q = check_dimension(q, model.n)
    if armature is None:
        armature = config.armature
    return _mass_matrices(model, chain_frames(model, q), _per_joint(armature, model.n, "armature"))[0]


def coriolis_torque(model: RobotModel, q, qdot, armature: Optional[PerJoint] = None,
                    h: Optional[float] = None) -> np.ndarray:
    """C(q, qdot) qdot via Christoffel symbols of central-difference dM/dq

    Reference form of the velocity-product term; ``PointMassPlant`` evaluates
    the same quantity in closed form.
    """
    n = model.n
    q = check_dimension(q, n)
    qdot = check_dimension(qdot, n, "qdot")
    if armature is None:
        armature = config.armature
    if not qdot.any():
        return np.zeros(n)
    h = h or config.fd_step
    steps = h * np.eye(n)
    M = _mass_matrices(model, chain_frames(model, np.vstack([q + steps, q - steps])),
                       _per_joint(armature, n, "armature"))
    dM = (M[:n] - M[n:]) / (2.0 * h)  # dM[l] = dM/dq_l
    # Christoffel contraction; the two symmetric first-kind terms coincide
    return (np.einsum("ikj,i,j->k", dM, qdot, qdot)
            - 0.5 * np.einsum("kij,i,j->k", dM, qdot, qdot))


class PointMassPlant:
    """Single-pose dynamics of ``model`` with the chain constants unpacked once

    M and the velocity-product torque come from the model's own point masses,
    gravity from ``params_plant``.
    """

    def __init__(self, model: RobotModel, params_plant: ParamsLike, sim_config: SimConfig):
        n = model.n
        self.model = model
        self.sim_config = sim_config
        self._dh = model.dh_arrays
        self._masses = np.ascontiguousarray(model.masses, dtype=float)
        self._coms = np.ascontiguousarray(model.coms, dtype=float).reshape(n, 3)
        self._blocks = as_param_vector(params_plant, n).reshape(n, PARAMS_PER_LINK).copy()
        self._armature = np.ascontiguousarray(sim_config.armature_for(n))
        self._viscous = sim_config.viscous_for(n)
        self._free = ~sim_config.locked_mask(n)

    def terms(self, q: np.ndarray, qdot: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """M(q), C(q, qdot) qdot and G(q)"""
        R, O = dh_frames(*self._dh, q)
        M, c = mass_and_velocity_torque(R, O, self._dh[0], self._masses, self._coms, self._armature, qdot)
        return M, c, gravity_from_frames(R, O, self._dh[0], self._blocks, self.model.gravity)

    def acceleration(self, q: np.ndarray, qdot: np.ndarray, tau: np.ndarray,
                     t: Optional[float] = None) -> np.ndarray:
        M, c, G = self.terms(q, qdot)
        rhs = tau - c - G - self._viscous * qdot
        free = self._free
        if free.all():
            return self._solve(M, rhs, q, t)
        qddot = np.zeros(self.model.n)
        if free.any():
            qddot[free] = self._solve(M[np.ix_(free, free)], rhs[free], q, t)
        return qddot

    @staticmethod
    def _solve(M: np.ndarray, rhs: np.ndarray, q: np.ndarray, t: Optional[float]) -> np.ndarray:
        try:
            factor = scipy.linalg.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise SingularMassMatrixError(q, t) from None
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def forward_dynamics(model: RobotModel, q, qdot, tau_applied, params_plant: ParamsLike,
                     sim_config: SimConfig, t: Optional[float] = None) -> np.ndarray:
    """qddot = M^-1 (tau - C qdot - G - B qdot); locked joints have zero acceleration"""
    n = model.n
    q = np.ascontiguousarray(check_dimension(q, n))
    qdot = np.ascontiguousarray(check_dimension(qdot, n, "qdot"))
    tau_applied = check_dimension(tau_applied, n, "tau")
    return PointMassPlant(model, params_plant, sim_config).acceleration(q, qdot, tau_applied, t)


def step(state: PlantState, tau, model: RobotModel, params_plant: ParamsLike,
         sim_config: SimConfig, plant: Optional[PointMassPlant] = None) -> PlantState:
    """Advance one dt with the torque held constant over the step"""
    dt = sim_config.dt
    q, qd = state.joint.q, state.joint.qdot
    tau = check_dimension(tau, model.n, "tau")
    if not np.all(np.isfinite(tau)):
        raise SimulationDivergence("non-finite torque command", state.t)
    if plant is None:
        plant = PointMassPlant(model, params_plant, sim_config)

    def accel(q_, qd_):
        return plant.acceleration(q_, qd_, tau, state.t)

    if sim_config.integrator == "semi_implicit_euler":
        qd_next = qd + dt * accel(q, qd)
        q_next = q + dt * qd_next
    else:
        k1q, k1v = qd, accel(q, qd)
        k2q, k2v = qd + 0.5 * dt * k1v, accel(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v)
        k3q, k3v = qd + 0.5 * dt * k2v, accel(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v)
        k4q, k4v = qd + dt * k3v, accel(q + dt * k3q, qd + dt * k3v)
        q_next = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        qd_next = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)

    limit = config.divergence_limit
    if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(qd_next))):
        raise SimulationDivergence("state became non-finite", state.t + dt)
    if np.max(np.abs(q_next)) > limit or np.max(np.abs(qd_next)) > limit:
        raise SimulationDivergence(f"state exceeded {limit:g}", state.t + dt)
    return PlantState(state.t + dt, JointState(q_next, qd_next))


def total_energy(model: RobotModel, params_plant: ParamsLike, joint: JointState,
                 armature: Optional[PerJoint] = None) -> float:
    """Kinetic (incl. armature) plus gravitational potential energy"""
    M = mass_matrix(model, joint.q, armature)
    return float(0.5 * joint.qdot @ M @ joint.qdot + potential_energy(model, joint.q, params_plant))


def simulate(model: RobotModel, params_plant: ParamsLike, controller: Controller,
             sim_config: SimConfig, q0, qdot0=None) -> TrajectoryLog:
    """Closed-loop run; one log row per control tick, t = 0 .. duration"""
    n = model.n
    q0 = check_dimension(q0, n, "q0")
    qdot0 = np.zeros(n) if qdot0 is None else check_dimension(qdot0, n, "qdot0").copy()
    qdot0[sim_config.locked_mask(n)] = 0.0
    if not (np.all(np.isfinite(q0)) and np.all(np.isfinite(qdot0))):
        raise ValueError("initial state must be finite")

    plant = plant_model(model, params_plant)
    params = as_param_vector(params_plant, n)
    dynamics = PointMassPlant(plant, params, sim_config)
    dt, steps = sim_config.dt, sim_config.steps

    t_log = np.arange(steps + 1) * dt
    q_log = np.empty((steps + 1, n))
    qd_log = np.empty((steps + 1, n))
    tau_log = np.empty((steps + 1, n))

    pending = deque(maxlen=sim_config.actuation_delay + 1)
    state = PlantState(0.0, JointState(q0, qdot0))

    with LogExecutionTime(f"simulation ({steps} steps, {sim_config.integrator})", logger):
        for k in tqdm(range(steps + 1), desc="Simulating", disable=not config.show_progress):
            command = check_dimension(controller(t_log[k], state.joint, dt), n, "controller torque")
            pending.append(command)
            applied = pending[0]

            q_log[k], qd_log[k], tau_log[k] = state.joint.q, state.joint.qdot, applied
            if k < steps:
                advanced = step(state, applied, plant, params, sim_config, dynamics)
                state = PlantState(t_log[k + 1], advanced.joint)

    return TrajectoryLog(t_log, q_log, qd_log, tau_log)
