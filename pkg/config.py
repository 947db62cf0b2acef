"""
Configuration module for the gravity-compensation toolkit
"""
from pathlib import Path
from typing import Literal, Tuple

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class AppConfig(BaseSettings):
    """Application configuration"""

    model_config = SettingsConfigDict(
        env_prefix="GRAVCOMP_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Data Configuration
    data_dir: Path = Field(Path("data"))
    default_robot: Path = Field(Path("data/mtm.json"))

    # Kinematics / gravity model
    fd_step: float = Field(1e-6, gt=0)
    rank_tol: float = Field(1e-8, gt=0)
    base_poses: int = Field(200, ge=1)

    # Identification
    svd_tol: float = Field(1e-10, gt=0)
    validation_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    min_validation_samples: int = Field(5, ge=1)

    # Simulation
    sim_dt: float = Field(1e-3, gt=0)
    sim_duration: float = Field(1.0, gt=0)
    integrator: Literal["semi_implicit_euler", "rk4"] = "semi_implicit_euler"
    armature: float = Field(1e-4, ge=0)
    viscous_friction: float = Field(0.0, ge=0)
    divergence_limit: float = Field(1e6, gt=0)

    # Controller
    windup_limit: float = Field(1.0, gt=0)

    # Gain tuning
    tuning_kp_bracket: Tuple[float, float] = (1e-2, 1e4)
    tuning_duration: float = Field(6.0, gt=0)
    tuning_perturbation: float = Field(0.05, gt=0)
    tuning_actuation_delay: int = Field(1, ge=0)
    tuning_viscous_friction: float = Field(0.5, gt=0)
    tuning_sustain_tol: float = Field(0.05, gt=0)
    tuning_max_iter: int = Field(40, ge=1)
    tuning_kv_ratio: float = Field(0.5, gt=0, lt=1)
    tuning_ki_fraction: float = Field(0.5, gt=0)

    # Logging
    log_level: str = "INFO"
    log_dir: Path = Field(Path("logs"))
    enable_file_logging: bool = True
    show_progress: bool = False


# Create global config instance
config = AppConfig()
