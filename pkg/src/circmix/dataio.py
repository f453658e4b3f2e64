"""Trial-level CSV ingestion, derived responses, and self-describing artifacts.

Column names are mapped through a small INI file so the loader does not
depend on any particular export of the raw data::

    [schema]
    true_direction = true_angle
    reported_direction = reported_angle
    condition = condition
    target_distance = target_distance
    reported_distance = reported_distance
    participant_id = participant
    angle_unit = degrees
    distance_unit = feet
    condition_order = Control, Preview, Forward Facing, Auditory, Deprivation
"""

from __future__ import annotations

import configparser
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from circmix.circ_core import wrap_pi
from circmix.estimator import MixedSample

DEFAULT_CONDITION_ORDER = ("Control", "Preview", "Forward Facing", "Auditory", "Deprivation")
PREDICTORS = ("target_distance", "distance_error")
CONFIG_PREFIX = "# run-config: "
FLOAT_FORMAT = "%.12g"


class SchemaError(ValueError):
    """The column mapping is invalid or does not match the input file."""


class EmptyDatasetError(ValueError):
    pass


class SmallSampleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrialSchema:
    true_direction: str
    reported_direction: str
    condition: str
    target_distance: str
    reported_distance: str | None = None
    participant_id: str | None = None
    angle_unit: str = "degrees"
    distance_unit: str = ""
    condition_order: tuple[str, ...] = ()

    def __post_init__(self):
        if self.angle_unit not in ("degrees", "radians"):
            raise SchemaError(f"angle_unit must be 'degrees' or 'radians', got {self.angle_unit!r}")
        object.__setattr__(self, "condition_order", tuple(self.condition_order))

    @classmethod
    def from_file(cls, path) -> "TrialSchema":
        cp = configparser.ConfigParser()
        if not cp.read(path, encoding="utf-8"):
            raise SchemaError(f"cannot read schema file {path}")
        if "schema" not in cp:
            raise SchemaError(f"{path} has no [schema] section")
        sec = dict(cp["schema"])
        if "angle_unit" not in sec:
            raise SchemaError("angle_unit must be declared explicitly")
        order = tuple(s.strip() for s in sec.pop("condition_order", "").split(",") if s.strip())
        try:
            return cls(**sec, condition_order=order)
        except TypeError as exc:
            raise SchemaError(f"bad schema keys in {path}: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["condition_order"] = list(self.condition_order)
        return d


@dataclass
class LoadReport:
    """Provenance of a load: rows read, rows dropped, levels, preprocessing."""

    path: str
    n_read: int
    n_dropped: int
    n_used: int
    levels: list
    predictors: list
    angle_unit: str
    preprocessing: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def derive_response(true_dir, reported_dir):
    """Signed angular error ``wrap(reported - true)`` in (-pi, pi], radians in and out."""
    return wrap_pi(np.asarray(reported_dir, dtype=float) - np.asarray(true_dir, dtype=float))


def derive_distance_error(true_d, reported_d):
    """Reported minus true distance; negative values are underestimates."""
    out = np.asarray(reported_d, dtype=float) - np.asarray(true_d, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError("distances must be finite")
    return float(out) if out.ndim == 0 else out


def order_levels(labels, explicit=()) -> list:
    present = sorted(set(labels))
    if explicit:
        missing = [lv for lv in present if lv not in explicit]
        if missing:
            raise SchemaError(f"condition levels {missing} are not in the configured order")
        return [lv for lv in explicit if lv in present]
    if set(present) <= set(DEFAULT_CONDITION_ORDER):
        return [lv for lv in DEFAULT_CONDITION_ORDER if lv in present]
    return present


def load_trials(path, schema: TrialSchema, predictors=("target_distance",)) -> tuple[MixedSample, LoadReport]:
    """Read a trial CSV into a one-factor :class:`MixedSample`.

    The response is the signed angular error; predictors are drawn from
    ``target_distance`` and ``distance_error``. Rows missing any needed field
    are dropped and counted.
    """
    predictors = list(predictors)
    if not predictors:
        raise SchemaError("at least one predictor is required")
    bad = [p for p in predictors if p not in PREDICTORS]
    if bad:
        raise SchemaError(f"unknown predictors {bad}; choose from {PREDICTORS}")
    df = pd.read_csv(path)
    need = {"true_direction": schema.true_direction, "reported_direction": schema.reported_direction,
            "condition": schema.condition, "target_distance": schema.target_distance}
    if "distance_error" in predictors:
        if not schema.reported_distance:
            raise SchemaError("distance_error needs a reported_distance column in the schema")
        need["reported_distance"] = schema.reported_distance
    for role, col in need.items():
        if col not in df.columns:
            raise SchemaError(f"column {col!r} (mapped to {role}) is not in {path}")
    n_read = len(df)
    df = df.dropna(subset=list(need.values()))
    if df.empty:
        raise EmptyDatasetError(f"no usable rows in {path}")

    scale = np.pi / 180.0 if schema.angle_unit == "degrees" else 1.0
    true_dir = df[schema.true_direction].to_numpy(float) * scale
    rep_dir = df[schema.reported_direction].to_numpy(float) * scale
    theta = derive_response(true_dir, rep_dir)
    cols = []
    for p in predictors:
        if p == "target_distance":
            cols.append(df[schema.target_distance].to_numpy(float))
        else:
            cols.append(derive_distance_error(df[schema.target_distance].to_numpy(float),
                                              df[schema.reported_distance].to_numpy(float)))
    X = np.column_stack(cols)
    labels = df[schema.condition].astype(str).str.strip().tolist()
    levels = order_levels(labels, schema.condition_order)
    code = {lv: i for i, lv in enumerate(levels)}
    Z = np.array([code[lv] for lv in labels], dtype=int)
    if len(df) < 2:
        warnings.warn("fewer than two usable rows; bandwidth selection is not possible", SmallSampleWarning,
                      stacklevel=2)
    sample = MixedSample(X, Z, theta, (max(len(levels), 1),), (tuple(levels),))
    prep = [f"angles converted from {schema.angle_unit} to radians",
            "response = wrap(reported - true direction) to (-pi, pi]",
            "no covariate standardization"]
    report = LoadReport(str(path), n_read, n_read - len(df), len(df), levels, predictors, schema.angle_unit, prep)
    return sample, report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_csv_artifact(path, frame: pd.DataFrame, config: dict) -> Path:
    """CSV whose first line is ``# run-config: {json}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CONFIG_PREFIX + json.dumps(_jsonable(config), sort_keys=True) + "\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT)
    return path


def write_json_artifact(path, payload: dict, config: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = {"config": config, **payload}
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_artifact(path) -> tuple[dict, object]:
    """Return ``(config, content)`` for a CSV or JSON artifact."""
    path = Path(path)
    if path.suffix == ".json":
        body = json.loads(path.read_text(encoding="utf-8"))
        return body.pop("config"), body
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith(CONFIG_PREFIX):
            raise ValueError(f"{path} is not a run artifact")
        config = json.loads(first[len(CONFIG_PREFIX):])
        frame = pd.read_csv(fh)
    return config, frame


__all__ = [
    "DEFAULT_CONDITION_ORDER",
    "EmptyDatasetError",
    "LoadReport",
    "SchemaError",
    "TrialSchema",
    "derive_distance_error",
    "derive_response",
    "load_trials",
    "order_levels",
    "read_artifact",
    "write_csv_artifact",
    "write_json_artifact",
]
