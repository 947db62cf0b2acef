"""
File models for robot descriptions and simulation experiments
"""
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictBool,
    StrictInt,
    ValidationError,
    field_validator,
    model_validator,
)

from controller import Gains
from errors import ParseError
from gravity_model import PARAMS_PER_LINK, GravityParams
from kinematics import DHRow, LinkInertia, RobotModel
from plant_sim import INTEGRATORS, SimConfig
from storage import read_json

logger = logging.getLogger(__name__)

_PI_EXPR = re.compile(
    r"^(?P<sign>[+-]?)\s*(?:(?P<num>\d+(?:\.\d*)?)\s*\*\s*)?pi(?:\s*/\s*(?P<den>\d+(?:\.\d*)?))?$"
)


def parse_angle(value: Any) -> float:
    """Number, or a multiple of pi such as ``"pi"``, ``"-pi/2"``, ``"3*pi/4"``, ``"0.5*pi"``"""
    if isinstance(value, bool):
        raise ValueError("angle must be a number or a multiple of pi")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError("angle must be a number or a multiple of pi")
    match = _PI_EXPR.match(value.strip())
    if match is None:
        raise ValueError(f"unsupported angle expression {value!r}")
    factor = float(match["num"]) if match["num"] else 1.0
    denominator = float(match["den"]) if match["den"] else 1.0
    if denominator == 0:
        raise ValueError(f"division by zero in {value!r}")
    angle = factor * math.pi / denominator
    return -angle if match["sign"] == "-" else angle


# ---------------------------------------------------------------------------
# Robot description
# ---------------------------------------------------------------------------

class JointSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sign: int
    theta_offset: float = 0.0
    d: float
    alpha: float
    a: float
    limit_lo: Optional[float] = None
    limit_hi: Optional[float] = None

    @field_validator("theta_offset", "alpha", mode="before")
    @classmethod
    def _symbolic_angle(cls, value):
        return parse_angle(value)

    @field_validator("sign")
    @classmethod
    def _unit_sign(cls, value):
        if value not in (-1, 1):
            raise ValueError("sign must be -1 or +1")
        return value

    @model_validator(mode="after")
    def _limits_pair(self):
        if (self.limit_lo is None) != (self.limit_hi is None):
            raise ValueError("limit_lo and limit_hi must be given together")
        return self


class LinkSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mass: float = Field(ge=0)
    com: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)


class RobotDescriptionFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    gravity: List[float] = Field(min_length=3, max_length=3)
    joints: List[JointSpec] = Field(min_length=1)
    links: List[LinkSpec]
    notes: Optional[str] = None

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.joints) != len(self.links):
            raise ValueError(f"{len(self.joints)} joints but {len(self.links)} links")
        return self

    def to_model(self) -> RobotModel:
        dh = [DHRow(j.sign, j.theta_offset, j.d, j.alpha, j.a) for j in self.joints]
        links = [LinkInertia(link.mass, np.array(link.com)) for link in self.links]
        limits = None
        if any(j.limit_lo is not None for j in self.joints):
            if not all(j.limit_lo is not None for j in self.joints):
                raise ValueError("joint limits must be given for every joint or none")
            limits = tuple((j.limit_lo, j.limit_hi) for j in self.joints)
        return RobotModel(self.name, dh, links, np.array(self.gravity), limits)


# ---------------------------------------------------------------------------
# Experiment description
# ---------------------------------------------------------------------------

PerJointValue = Union[float, List[float]]
ParamsRef = Union[str, List[float]]


class GainsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kp: List[float]
    ki: List[float]
    kv: List[float]


class SimSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dt: Optional[float] = Field(None, gt=0)
    duration: Optional[float] = Field(None, gt=0)
    integrator: Optional[str] = None
    armature: Optional[PerJointValue] = None
    viscous: Optional[PerJointValue] = None
    actuation_delay: int = Field(0, ge=0)

    @field_validator("integrator")
    @classmethod
    def _known_integrator(cls, value):
        if value is not None and value not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        return value


class InitialSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: List[float]
    qdot: Optional[List[float]] = None


class TargetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: List[float]
    qdot: Optional[List[float]] = None


class PerturbationSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    relative: float = Field(ge=0)
    seed: int = 0


class ExperimentFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    robot: str
    plant_params: Optional[ParamsRef] = None
    controller_params: Optional[ParamsRef] = None
    plant_perturbation: Optional[PerturbationSpec] = None
    gains: Optional[Union[str, GainsSpec]] = None
    tune_gains: bool = False
    zero_mask: List[Union[StrictBool, StrictInt]] = Field(default_factory=list)
    sim: SimSpec = Field(default_factory=SimSpec)
    initial: InitialSpec
    target: Optional[TargetSpec] = None
    release_t: float = Field(0.0, ge=0)
    metrics_window: Optional[Tuple[float, float]] = None
    torque_limit: Optional[PerJointValue] = None
    windup_limit: Optional[float] = Field(None, gt=0)
    notes: Optional[str] = None


@dataclass(frozen=True)
class Experiment:
    """Experiment file resolved against its robot: every array has length n"""

    model: RobotModel
    params_plant: GravityParams
    params_hat: GravityParams
    gains: Optional[Gains]
    tune_gains: bool
    zero_mask: np.ndarray
    sim_config: SimConfig
    q0: np.ndarray
    qdot0: np.ndarray
    target_q: np.ndarray
    target_qdot: np.ndarray
    release_t: float
    metrics_window: Optional[Tuple[float, float]]
    torque_limit: Optional[np.ndarray]
    windup_limit: Optional[float]
    source: Path


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _validation_message(path: Path, error: ValidationError) -> str:
    problems = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{location}: {item['msg']}")
    return f"{path}: " + "; ".join(problems)


def load_robot(path: Union[str, Path]) -> RobotModel:
    """Parse and validate a robot description file"""
    path = Path(path)
    raw = read_json(path)
    try:
        description = RobotDescriptionFile.model_validate(raw)
        model = description.to_model()
    except ValidationError as e:
        raise ParseError(_validation_message(path, e)) from e
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e
    logger.debug(f"Loaded robot '{model.name}' with {model.n} joints from {path}")
    return model


def _resolve_path(reference: str, base_dir: Path) -> Path:
    candidate = Path(reference)
    return candidate if candidate.is_absolute() else base_dir / candidate


def load_params(reference: Optional[ParamsRef], model: RobotModel, base_dir: Path = Path("."),
                key: str = "params") -> GravityParams:
    """Resolve a parameter reference: omitted, inline list, or a JSON file path

    A file may hold a bare list, ``{"params": [...]}`` or an identification
    report with ``params_full``.
    """
    expected = PARAMS_PER_LINK * model.n
    if reference is None:
        return GravityParams.from_model(model)
    if isinstance(reference, str):
        path = _resolve_path(reference, base_dir)
        content = read_json(path)
        if isinstance(content, dict):
            values = content.get("params_full", content.get("params"))
            if values is None:
                raise ParseError(f"{path}: expected a 'params' or 'params_full' entry")
        else:
            values = content
    else:
        values = reference
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ParseError(f"{key}: expected a list of numbers")
    if len(values) != expected:
        raise ParseError(f"{key}: expected {expected} values for {model.n} joints, got {len(values)}")
    try:
        return GravityParams(np.array(values, dtype=float))
    except ValueError as e:
        raise ParseError(f"{key}: {e}") from e


def _vector(values: Optional[List[float]], n: int, key: str, default: float = 0.0) -> np.ndarray:
    if values is None:
        return np.full(n, default)
    if len(values) != n:
        raise ParseError(f"{key}: expected {n} values, got {len(values)}")
    return np.array(values, dtype=float)


def _per_joint(value: Optional[PerJointValue], n: int, key: str) -> Optional[np.ndarray]:
    if value is None:
        return None
    if isinstance(value, list):
        return _vector(value, n, key)
    return np.full(n, float(value))


def _zero_mask(entries: list, n: int) -> np.ndarray:
    """Booleans per joint, or a list of 1-based joint numbers"""
    mask = np.zeros(n, dtype=bool)
    if not entries:
        return mask
    if all(isinstance(v, bool) for v in entries):
        if len(entries) != n:
            raise ParseError(f"zero_mask: expected {n} booleans, got {len(entries)}")
        return np.array(entries, dtype=bool)
    if any(isinstance(v, bool) for v in entries):
        raise ParseError("zero_mask: mix of booleans and joint numbers")
    for joint in entries:
        if not 1 <= joint <= n:
            raise ParseError(f"zero_mask: joint {joint} outside 1..{n}")
        mask[joint - 1] = True
    return mask


def perturb_params(params: GravityParams, relative: float, seed: int) -> GravityParams:
    """Multiplicative Gaussian perturbation; masses stay non-negative"""
    rng = np.random.default_rng(seed)
    scaled = params.full * (1.0 + relative * rng.standard_normal(params.full.size))
    blocks = scaled.reshape(-1, PARAMS_PER_LINK)
    blocks[:, 0] = np.abs(blocks[:, 0])
    return GravityParams(blocks.reshape(-1))


def load_experiment(path: Union[str, Path]) -> Experiment:
    """Parse an experiment file and resolve every reference against its robot"""
    path = Path(path)
    raw = read_json(path)
    try:
        parsed = ExperimentFile.model_validate(raw)
    except ValidationError as e:
        raise ParseError(_validation_message(path, e)) from e

    base_dir = path.parent
    model = load_robot(_resolve_path(parsed.robot, base_dir))
    n = model.n

    params_plant = load_params(parsed.plant_params, model, base_dir, "plant_params")
    params_hat = load_params(parsed.controller_params, model, base_dir, "controller_params")
    if parsed.plant_perturbation is not None:
        params_plant = perturb_params(
            params_plant, parsed.plant_perturbation.relative, parsed.plant_perturbation.seed
        )

    gains = None
    if parsed.gains is not None:
        gains_spec = parsed.gains
        if isinstance(gains_spec, str):
            gains_path = _resolve_path(gains_spec, base_dir)
            content = read_json(gains_path)
            if isinstance(content, dict):
                # tune output carries per-joint diagnostics next to the gains
                content = {key: content.get(key) for key in ("kp", "ki", "kv")}
            try:
                gains_spec = GainsSpec.model_validate(content)
            except ValidationError as e:
                raise ParseError(_validation_message(gains_path, e)) from e
        try:
            gains = Gains(
                _vector(gains_spec.kp, n, "gains.kp"),
                _vector(gains_spec.ki, n, "gains.ki"),
                _vector(gains_spec.kv, n, "gains.kv"),
            )
        except ValueError as e:
            raise ParseError(f"gains: {e}") from e

    sim_kwargs = {"actuation_delay": parsed.sim.actuation_delay}
    if parsed.sim.dt is not None:
        sim_kwargs["dt"] = parsed.sim.dt
    if parsed.sim.duration is not None:
        sim_kwargs["duration"] = parsed.sim.duration
    if parsed.sim.integrator is not None:
        sim_kwargs["integrator"] = parsed.sim.integrator
    armature = _per_joint(parsed.sim.armature, n, "sim.armature")
    if armature is not None:
        sim_kwargs["armature"] = armature
    viscous = _per_joint(parsed.sim.viscous, n, "sim.viscous")
    if viscous is not None:
        sim_kwargs["viscous_friction"] = viscous
    try:
        sim_config = SimConfig(**sim_kwargs)
    except ValueError as e:
        raise ParseError(f"{path}: sim: {e}") from e

    target = parsed.target or TargetSpec(q=[0.0] * n)
    duration = sim_config.steps * sim_config.dt
    if parsed.release_t > duration:
        raise ParseError(f"release_t={parsed.release_t} exceeds the simulated duration {duration:g}")

    torque_limit = _per_joint(parsed.torque_limit, n, "torque_limit")
    if torque_limit is not None and np.any(torque_limit <= 0):
        raise ParseError("torque_limit: entries must be positive")

    return Experiment(
        model=model,
        params_plant=params_plant,
        params_hat=params_hat,
        gains=gains,
        tune_gains=parsed.tune_gains,
        zero_mask=_zero_mask(parsed.zero_mask, n),
        sim_config=sim_config,
        q0=_vector(parsed.initial.q, n, "initial.q"),
        qdot0=_vector(parsed.initial.qdot, n, "initial.qdot"),
        target_q=_vector(target.q, n, "target.q"),
        target_qdot=_vector(target.qdot, n, "target.qdot"),
        release_t=parsed.release_t,
        metrics_window=parsed.metrics_window,
        torque_limit=torque_limit,
        windup_limit=parsed.windup_limit,
        source=path,
    )
