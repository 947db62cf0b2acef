"""
Gravity feedforward + PID joint controller, oscillation-based gain tuning and
trajectory metrics
"""
import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import find_peaks

from config import config
from errors import DimensionError, NonFiniteMeasurementError, SimulationDivergence, TuningError
from gravity_model import ParamsLike, as_param_vector, gravity_torque
from kinematics import JointState, RobotModel, check_dimension
from logging_config import LogExecutionTime
from plant_sim import SimConfig, TrajectoryLog, simulate

logger = logging.getLogger(__name__)

TorqueLimit = Optional[Union[float, Sequence[float], np.ndarray]]


@dataclass(frozen=True)
class Gains:
    """Diagonal kp, ki, kv per joint"""

    kp: np.ndarray
    ki: np.ndarray
    kv: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(g, dtype=float).reshape(-1) for g in (self.kp, self.ki, self.kv)]
        if len({a.size for a in arrays}) != 1:
            raise DimensionError("kp, ki and kv must have the same length")
        for name, arr in zip(("kp", "ki", "kv"), arrays):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} gains must be finite and >= 0")
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.kp.size

    @classmethod
    def zeros(cls, n: int) -> "Gains":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def to_dict(self) -> dict:
        return {"kp": self.kp.tolist(), "ki": self.ki.tolist(), "kv": self.kv.tolist()}


@dataclass(frozen=True)
class ControllerState:
    integral: np.ndarray
    target_q: np.ndarray
    target_qdot: np.ndarray
    zero_mask: np.ndarray
    windup_limit: float = 1.0

    def __post_init__(self):
        n = np.asarray(self.target_q).size
        for name in ("integral", "target_q", "target_qdot"):
            object.__setattr__(self, name, check_dimension(getattr(self, name), n, name))
        object.__setattr__(
            self, "zero_mask", check_dimension(self.zero_mask, n, "zero_mask").astype(bool)
        )
        if not self.windup_limit > 0:
            raise ValueError("windup_limit must be positive")
        if np.any(np.abs(self.integral) > self.windup_limit):
            raise ValueError("integral exceeds windup_limit")

    @classmethod
    def initial(cls, n: int, target_q=None, target_qdot=None, zero_mask=None,
                windup_limit: Optional[float] = None) -> "ControllerState":
        """Zero integral; regulation to ``target_q`` (default the zero pose) at rest"""
        return cls(
            integral=np.zeros(n),
            target_q=np.zeros(n) if target_q is None else target_q,
            target_qdot=np.zeros(n) if target_qdot is None else target_qdot,
            zero_mask=np.zeros(n, dtype=bool) if zero_mask is None else zero_mask,
            windup_limit=config.windup_limit if windup_limit is None else windup_limit,
        )


def _check_measurement(measured: JointState, n: int) -> None:
    check_dimension(measured.q, n, "measured q")
    for field_name in ("q", "qdot"):
        bad = np.flatnonzero(~np.isfinite(getattr(measured, field_name)))
        if bad.size:
            raise NonFiniteMeasurementError(int(bad[0]), field_name)


def control_torque(gains: Gains, model: RobotModel, params_hat: ParamsLike,
                   ctl_state: ControllerState, measured: JointState, dt: float,
                   torque_limit: TorqueLimit = None) -> Tuple[np.ndarray, ControllerState]:
    """tau = G(q_m) + kp e + kv (qd_d - qd_m) + ki * clamp(sum e dt)

    Masked joints output exactly 0 and keep a zero integral.
    """
    n = model.n
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if gains.n != n:
        raise DimensionError(f"gains are for {gains.n} joints, robot has {n}")
    _check_measurement(measured, n)

    error = ctl_state.target_q - measured.q
    integral = np.clip(ctl_state.integral + error * dt, -ctl_state.windup_limit, ctl_state.windup_limit)
    integral[ctl_state.zero_mask] = 0.0

    tau = (gravity_torque(model, measured.q, params_hat)
           + gains.kp * error
           + gains.kv * (ctl_state.target_qdot - measured.qdot)
           + gains.ki * integral)
    if torque_limit is not None:
        limit = np.broadcast_to(np.asarray(torque_limit, dtype=float), (n,))
        tau = np.clip(tau, -limit, limit)
    tau[ctl_state.zero_mask] = 0.0

    return tau, dataclasses.replace(ctl_state, integral=integral)


class GravityPIDController:
    """Stateful controller callable driven by ``plant_sim.simulate``"""

    def __init__(self, model: RobotModel, params_hat: ParamsLike, gains: Gains,
                 state: Optional[ControllerState] = None, torque_limit: TorqueLimit = None):
        self.model = model
        self.params_hat = as_param_vector(params_hat, model.n)
        self.gains = gains
        self.initial_state = state or ControllerState.initial(model.n)
        self.state = self.initial_state
        self.torque_limit = torque_limit

    def reset(self) -> None:
        self.state = self.initial_state

    def __call__(self, t: float, measured: JointState, dt: float) -> np.ndarray:
        tau, self.state = control_torque(
            self.gains, self.model, self.params_hat, self.state, measured, dt, self.torque_limit
        )
        return tau


# ---------------------------------------------------------------------------
# Gain tuning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TuningResult:
    joint: int
    kp_critical: float
    period: float
    ratio: float
    iterations: int
    bracket: Tuple[float, float]


def amplitude_ratio(t: np.ndarray, x: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    """Per-period amplitude ratio and period of an oscillating signal

    Uses the alternating peaks and troughs after the first half cycle.
    Returns (None, None) when fewer than three such extremes exist.
    """
    peaks, _ = find_peaks(x)
    troughs, _ = find_peaks(-x)
    extremes = np.sort(np.concatenate([peaks, troughs]))[1:]
    amplitudes = np.abs(x[extremes])
    keep = amplitudes > 1e-12
    extremes, amplitudes = extremes[keep], amplitudes[keep]
    if extremes.size < 3:
        return None, None
    half_cycles = extremes.size - 1
    ratio = (amplitudes[-1] / amplitudes[0]) ** (2.0 / half_cycles)
    period = 2.0 * float(np.mean(np.diff(t[extremes])))
    return float(ratio), period


def _tuning_config(sim_config: SimConfig, n: int, joint: int) -> SimConfig:
    viscous = sim_config.viscous_for(n).copy()
    if viscous[joint] <= 0:
        viscous[joint] = config.tuning_viscous_friction
        logger.info(
            f"Joint {joint + 1}: no viscous friction configured, tuning with "
            f"{viscous[joint]:g} N*m*s/rad"
        )
    return dataclasses.replace(
        sim_config,
        duration=max(config.tuning_duration, sim_config.dt),
        viscous_friction=viscous,
        actuation_delay=max(sim_config.actuation_delay, config.tuning_actuation_delay),
        locked=tuple(k != joint for k in range(n)),
    )


def _joint_response(model: RobotModel, params_plant: ParamsLike, params_hat: ParamsLike,
                    joint: int, gains: Gains, sim_config: SimConfig,
                    q0: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    start = q0.copy()
    start[joint] += config.tuning_perturbation
    controller = GravityPIDController(
        model, params_hat, gains, ControllerState.initial(model.n, target_q=q0)
    )
    try:
        log = simulate(model, params_plant, controller, sim_config, start)
    except SimulationDivergence:
        return math.inf, None
    return amplitude_ratio(log.t, log.q[:, joint] - q0[joint])


def _single_joint_gains(n: int, joint: int, kp: float = 0.0, ki: float = 0.0,
                        kv: float = 0.0) -> Gains:
    gains = [np.zeros(n) for _ in range(3)]
    for vec, value in zip(gains, (kp, ki, kv)):
        vec[joint] = value
    return Gains(*gains)


def _is_below(ratio: Optional[float]) -> bool:
    # a non-oscillating response counts as decaying
    return ratio is None or ratio < 1.0


def tune_kp_oscillation(model: RobotModel, params_plant: ParamsLike, params_hat: ParamsLike,
                        joint: int, sim_config: SimConfig, q0=None,
                        bracket: Optional[Tuple[float, float]] = None) -> TuningResult:
    """Bisect kp (ki = kv = 0, other joints locked) for a sustained oscillation

    ``joint`` is 0-based. The response starts ``tuning_perturbation`` rad away from
    ``q0`` and is judged by its amplitude ratio per period; the search stops once
    that ratio is within ``tuning_sustain_tol`` of 1.
    """
    n = model.n
    if not 0 <= joint < n:
        raise IndexError(f"joint index {joint} outside 0..{n - 1}")
    q0 = np.zeros(n) if q0 is None else check_dimension(q0, n, "q0").copy()
    lo, hi = bracket or config.tuning_kp_bracket
    if not 0 < lo < hi:
        raise ValueError(f"invalid kp bracket ({lo}, {hi})")
    tuning_sim = _tuning_config(sim_config, n, joint)

    def response_at(kp: float):
        return _joint_response(
            model, params_plant, params_hat, joint, _single_joint_gains(n, joint, kp=kp), tuning_sim, q0
        )

    with LogExecutionTime(f"kp tuning joint {joint + 1}", logger):
        ratio_lo, _ = response_at(lo)
        ratio_hi, _ = response_at(hi)
        if not _is_below(ratio_lo) or _is_below(ratio_hi):
            raise TuningError(
                f"joint {joint + 1}: no transition from decaying to growing oscillation "
                f"(ratio at bounds {ratio_lo}, {ratio_hi})",
                (lo, hi),
            )

        for iteration in range(1, config.tuning_max_iter + 1):
            kp = math.sqrt(lo * hi)
            ratio, period = response_at(kp)
            logger.debug(f"joint {joint + 1}: kp={kp:.6g} ratio={ratio} period={period}")
            if ratio is not None and period is not None and abs(ratio - 1.0) < config.tuning_sustain_tol:
                logger.info(
                    f"Joint {joint + 1}: critical kp {kp:.6g} N*m/rad, period {period:.4g} s "
                    f"after {iteration} iterations"
                )
                return TuningResult(joint, kp, period, ratio, iteration, (lo, hi))
            if _is_below(ratio):
                lo = kp
            else:
                hi = kp

    raise TuningError(f"joint {joint + 1}: no sustained oscillation found", (lo, hi))


def tune_gains(model: RobotModel, params_plant: ParamsLike, params_hat: ParamsLike,
               sim_config: SimConfig, q0=None, zero_mask=None) -> Tuple[Gains, List[TuningResult]]:
    """Critical kp per joint, then kv until the amplitude ratio per period drops
    to ``tuning_kv_ratio``, then ki sized from the period and halved until the
    response decays. Masked joints keep zero gains."""
    n = model.n
    q0 = np.zeros(n) if q0 is None else check_dimension(q0, n, "q0").copy()
    mask = np.zeros(n, dtype=bool) if zero_mask is None else check_dimension(zero_mask, n, "zero_mask").astype(bool)
    kp, ki, kv = np.zeros(n), np.zeros(n), np.zeros(n)
    results = []

    for joint in np.flatnonzero(~mask):
        joint = int(joint)
        result = tune_kp_oscillation(model, params_plant, params_hat, joint, sim_config, q0)
        results.append(result)
        tuning_sim = _tuning_config(sim_config, n, joint)
        kp[joint] = result.kp_critical

        def ratio_at(kv_j: float, ki_j: float = 0.0):
            gains = _single_joint_gains(n, joint, kp=kp[joint], ki=ki_j, kv=kv_j)
            return _joint_response(model, params_plant, params_hat, joint, gains, tuning_sim, q0)[0]

        kv_j = 1e-3 * kp[joint] * result.period
        for _ in range(config.tuning_max_iter):
            ratio = ratio_at(kv_j)
            if ratio is None or ratio <= config.tuning_kv_ratio:
                break
            kv_j *= 2.0
        else:
            raise TuningError(f"joint {joint + 1}: kv did not damp the oscillation", (kv_j, kv_j))
        kv[joint] = kv_j

        ki_j = config.tuning_ki_fraction * kp[joint] / result.period
        for _ in range(config.tuning_max_iter):
            if _is_below(ratio_at(kv_j, ki_j)):
                break
            ki_j *= 0.5
        else:
            ki_j = 0.0
            logger.warning(f"Joint {joint + 1}: no stable integral gain found, ki set to 0")
        ki[joint] = ki_j
        logger.info(f"Joint {joint + 1}: kp={kp[joint]:.6g} kv={kv_j:.6g} ki={ki_j:.6g}")

    return Gains(kp, ki, kv), results


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OscillationMetrics:
    amplitude: float
    frequency: float
    oscillatory: bool


def _window_index(log: TrajectoryLog, window: Optional[Tuple[float, float]]) -> np.ndarray:
    if window is None:
        return np.ones(len(log), dtype=bool)
    t0, t1 = window
    if t1 < t0:
        raise ValueError(f"window end {t1} precedes start {t0}")
    return (log.t >= t0) & (log.t <= t1)


def drift_metric(log: TrajectoryLog, release_t: float = 0.0) -> np.ndarray:
    """Per-joint max |q(t) - q(release_t)| for t >= release_t"""
    if not log.t[0] <= release_t <= log.t[-1]:
        raise ValueError(
            f"release_t={release_t} outside the logged interval [{log.t[0]}, {log.t[-1]}]"
        )
    start = int(np.searchsorted(log.t, release_t - 1e-9 * max(log.dt, 1.0)))
    after = log.q[start:]
    return np.max(np.abs(after - log.q[start]), axis=0)


def oscillation_metrics(log: TrajectoryLog, joint: int,
                        window: Optional[Tuple[float, float]] = None) -> OscillationMetrics:
    """Half peak-to-peak amplitude and zero-crossing frequency of joint ``joint`` (0-based)"""
    if not 0 <= joint < log.n:
        raise IndexError(f"joint index {joint} outside 0..{log.n - 1}")
    idx = _window_index(log, window)
    t, q = log.t[idx], log.q[idx, joint]
    if t.size < 2:
        return OscillationMetrics(0.0, math.nan, False)

    amplitude = float((q.max() - q.min()) / 2.0)
    x = q - q.mean()
    k = np.flatnonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))
    if k.size < 3:
        return OscillationMetrics(amplitude, math.nan, False)
    crossings = t[k] - x[k] * (t[k + 1] - t[k]) / (x[k + 1] - x[k])
    frequency = float(1.0 / (2.0 * np.mean(np.diff(crossings))))
    return OscillationMetrics(amplitude, frequency, True)


def settling_time(log: TrajectoryLog, target_q, tol: float = 5e-3) -> np.ndarray:
    """Per joint, the first time after which |q - target| stays within ``tol`` (inf if never)"""
    target_q = check_dimension(target_q, log.n, "target_q")
    outside = np.abs(log.q - target_q) >= tol
    times = np.full(log.n, math.inf)
    for j in range(log.n):
        bad = np.flatnonzero(outside[:, j])
        if bad.size == 0:
            times[j] = log.t[0]
        elif bad[-1] < len(log) - 1:
            times[j] = log.t[bad[-1] + 1]
    return times


def steady_state_error(log: TrajectoryLog, target_q,
                       window: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Per-joint mean |q - target| over ``window`` (default: last 10% of the log)"""
    target_q = check_dimension(target_q, log.n, "target_q")
    if window is None:
        window = (log.t[0] + 0.9 * (log.t[-1] - log.t[0]), log.t[-1])
    idx = _window_index(log, window)
    if not idx.any():
        raise ValueError(f"window {window} contains no samples")
    return np.mean(np.abs(log.q[idx] - target_q), axis=0)
