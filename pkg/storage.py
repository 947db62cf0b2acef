"""
CSV and JSON persistence with atomic writes
"""
import json
import logging
import math
import os
import tempfile
from pathlib import Path
from typing import Any, List, Optional, Union

import numpy as np
import pandas as pd

from errors import DimensionError, ParseError, StorageError
from identification import Dataset, IdentReport
from plant_sim import TrajectoryLog

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write to a temporary sibling and rename over ``path``"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(text)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_name, path)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
    except OSError as e:
        raise StorageError(f"cannot write '{path}': {e.strerror or e}") from e
    logger.debug(f"Wrote {path}")
    return path


def dataset_columns(n: int) -> List[str]:
    return [f"q{i}" for i in range(1, n + 1)] + [f"tau{i}" for i in range(1, n + 1)]


def trajectory_columns(n: int) -> List[str]:
    return (["t"] + [f"q{i}" for i in range(1, n + 1)]
            + [f"qd{i}" for i in range(1, n + 1)] + [f"tau{i}" for i in range(1, n + 1)])


def _to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _read_csv(path: PathLike) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=float, float_precision="round_trip")
    except FileNotFoundError as e:
        raise StorageError(f"cannot read '{path}': file not found") from e
    except OSError as e:
        raise StorageError(f"cannot read '{path}': {e.strerror or e}") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{path}: file is empty (no header)") from e
    except (ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"{path}: {e}") from e


def _joint_count(columns: List[str], path: PathLike, per_joint: int, leading: int = 0) -> int:
    body = len(columns) - leading
    if body <= 0 or body % per_joint:
        raise ParseError(f"{path}: unexpected header {','.join(columns)}")
    return body // per_joint


def write_dataset(path: PathLike, data: Dataset) -> Path:
    frame = pd.DataFrame(np.hstack([data.q, data.tau]), columns=dataset_columns(data.n))
    return atomic_write_text(path, _to_csv(frame))


def read_dataset(path: PathLike, n: Optional[int] = None) -> Dataset:
    """Read ``q1..qn,tau1..taun``; ``n`` (if given) must match the header"""
    frame = _read_csv(path)
    columns = list(frame.columns)
    found = _joint_count(columns, path, per_joint=2)
    if columns != dataset_columns(found):
        raise ParseError(f"{path}: expected header {','.join(dataset_columns(found))}")
    if n is not None and found != n:
        raise DimensionError(f"{path}: dataset has {found} joints, robot has {n}")
    values = frame.to_numpy(dtype=float)
    if len(values) == 0:
        raise DimensionError(f"{path}: dataset has no samples")
    return Dataset(values[:, :found], values[:, found:], meta=str(path))


def write_trajectory(path: PathLike, log: TrajectoryLog) -> Path:
    frame = pd.DataFrame(np.column_stack([log.t, log.q, log.qdot, log.tau]),
                         columns=trajectory_columns(log.n))
    return atomic_write_text(path, _to_csv(frame))


def read_trajectory(path: PathLike) -> TrajectoryLog:
    frame = _read_csv(path)
    columns = list(frame.columns)
    n = _joint_count(columns, path, per_joint=3, leading=1)
    if columns != trajectory_columns(n):
        raise ParseError(f"{path}: expected header {','.join(trajectory_columns(n))}")
    values = frame.to_numpy(dtype=float)
    try:
        return TrajectoryLog(values[:, 0], values[:, 1:n + 1],
                             values[:, n + 1:2 * n + 1], values[:, 2 * n + 1:])
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e


def _json_safe(value: Any) -> Any:
    """Replace NaN/inf with None and numpy scalars/arrays with Python types"""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: PathLike, payload: Any) -> Path:
    text = json.dumps(_json_safe(payload), indent=2, allow_nan=False)
    return atomic_write_text(path, text + "\n")


def write_report(path: PathLike, report: IdentReport) -> Path:
    return write_json(path, report.to_dict())


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read '{path}': {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from e
