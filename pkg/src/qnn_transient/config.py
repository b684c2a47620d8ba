"""Run configuration: YAML file -> validated :class:`RunConfig`.

Schema (every key except ``system`` and ``model`` is optional)::

    system: smib | wscc
    model: sfq-ry | sfq-arcsin | pfq
    span: 8.0                 # seconds simulated
    output_dir: runs/smib     # overridden by $QNN_TRANSIENT_OUTPUT_DIR
    output_step: 0.01         # spacing of trajectory.csv / oracle.csv
    emit_plots: false
    training: {time_span, num_points, lambda1, lambda2, max_iterations,
               gradient_tolerance, restarts, seed, init_angle_range}
    model_options: {layers, num_qubits, rotations, train_scale}
    oracle: {step, fault_step}
    smib: {k1, k2, k3, delta0, domega0}
    wscc_file: path/to/system.yaml
    sweep: {axis: time_span | num_points, values: [...]}

Errors are raised as :class:`ConfigError` whose message starts with the
dotted path of the offending key.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .training import ModelSpec, TrainingConfig

__all__ = ["ConfigError", "OUTPUT_DIR_ENV", "OracleConfig", "RunConfig", "SweepSpec", "load_config", "parse_config"]

OUTPUT_DIR_ENV = "QNN_TRANSIENT_OUTPUT_DIR"
SYSTEMS = ("smib", "wscc")
SWEEP_AXES = ("time_span", "num_points")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class OracleConfig:
    step: float = 1e-4
    fault_step: float = 1e-5


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple


@dataclass(frozen=True)
class RunConfig:
    system: str
    model: str
    span: float
    output_dir: Path
    training: TrainingConfig = field(default_factory=TrainingConfig)
    model_options: ModelSpec = field(default_factory=ModelSpec)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output_step: float = 0.01
    emit_plots: bool = False
    smib: dict = field(default_factory=dict)
    wscc_file: Optional[Path] = None
    sweep: Optional[SweepSpec] = None

    def resolved(self) -> dict:
        """Every setting actually in force, defaults included, as plain data."""
        out = {
            "system": self.system,
            "model": self.model,
            "span": self.span,
            "output_dir": str(self.output_dir),
            "output_step": self.output_step,
            "emit_plots": self.emit_plots,
            "training": dataclasses.asdict(self.training),
            "model_options": {
                "layers": self.model_options.layers,
                "num_qubits": self.model_options.num_qubits,
                "rotations": list(self.model_options.rotations),
                "train_scale": self.model_options.train_scale,
            },
            "oracle": dataclasses.asdict(self.oracle),
            "wscc_file": None if self.wscc_file is None else str(self.wscc_file),
        }
        if self.system == "smib":
            from .systems import SmibParams

            out["smib"] = dataclasses.asdict(SmibParams(**self.smib))
        if self.sweep is not None:
            out["sweep"] = {"axis": self.sweep.axis, "values": list(self.sweep.values)}
        return out


def _expect_mapping(value, key) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(key, "expected a mapping")
    return value


def _check_keys(section: dict, allowed, prefix: str) -> None:
    for k in section:
        if k not in allowed:
            raise ConfigError(f"{prefix}{k}", f"unknown key; expected one of {', '.join(sorted(allowed))}")


def _number(value, key, positive=False, integer=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    if positive and not value > 0:
        raise ConfigError(key, "must be positive")
    if nonneg and value < 0:
        raise ConfigError(key, "must be non-negative")
    return int(value) if integer else float(value)


_TRAINING_RULES = {
    "time_span": dict(positive=True),
    "num_points": dict(integer=True),
    "lambda1": dict(nonneg=True),
    "lambda2": dict(nonneg=True),
    "max_iterations": dict(integer=True, positive=True),
    "gradient_tolerance": dict(positive=True),
    "restarts": dict(integer=True, positive=True),
    "seed": dict(integer=True, nonneg=True),
    "init_angle_range": dict(nonneg=True),
}


def _training(section: dict) -> TrainingConfig:
    _check_keys(section, _TRAINING_RULES, "training.")
    kw = {k: _number(v, f"training.{k}", **_TRAINING_RULES[k]) for k, v in section.items()}
    if kw.get("num_points", 2) < 2:
        raise ConfigError("training.num_points", "need at least 2 collocation points")
    try:
        return TrainingConfig(**kw)
    except ValueError as exc:
        raise ConfigError("training", str(exc)) from None


def _model_spec(kind, section: dict) -> ModelSpec:
    if kind not in ModelSpec.KINDS:
        raise ConfigError("model", f"unknown model {kind!r}; expected one of {', '.join(ModelSpec.KINDS)}")
    _check_keys(section, {"layers", "num_qubits", "rotations", "train_scale"}, "model_options.")
    kw: dict[str, Any] = {"kind": kind}
    if "layers" in section:
        kw["layers"] = _number(section["layers"], "model_options.layers", positive=True, integer=True)
    if "num_qubits" in section:
        kw["num_qubits"] = _number(section["num_qubits"], "model_options.num_qubits", positive=True, integer=True)
    if "rotations" in section:
        rot = section["rotations"]
        if not isinstance(rot, list) or not rot or any(r not in ("RotY", "RotZ") for r in rot):
            raise ConfigError("model_options.rotations", "expected a non-empty list of RotY/RotZ")
        kw["rotations"] = tuple(rot)
    if "train_scale" in section:
        if not isinstance(section["train_scale"], bool):
            raise ConfigError("model_options.train_scale", "expected true or false")
        kw["train_scale"] = section["train_scale"]
    return ModelSpec(**kw)


def _sweep(section) -> Optional[SweepSpec]:
    if section is None:
        return None
    section = _expect_mapping(section, "sweep")
    _check_keys(section, {"axis", "values"}, "sweep.")
    axis = section.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError("sweep.axis", f"expected one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    return SweepSpec(axis, parse_sweep_values(axis, section.get("values")))


def parse_sweep_values(axis: str, values) -> tuple:
    if not isinstance(values, (list, tuple)) or not values:
        raise ConfigError("sweep.values", "expected a non-empty list")
    integer = axis == "num_points"
    out = tuple(_number(v, "sweep.values", positive=True, integer=integer) for v in values)
    if integer and min(out) < 2:
        raise ConfigError("sweep.values", "num_points values must be at least 2")
    return out


def parse_config(raw: dict, base_dir: Optional[Path] = None, environ=None) -> RunConfig:
    """Validate a decoded config mapping."""
    environ = os.environ if environ is None else environ
    raw = _expect_mapping(raw, "<root>")
    allowed = {"system", "model", "span", "output_dir", "output_step", "emit_plots", "training",
               "model_options", "oracle", "smib", "wscc_file", "sweep"}
    _check_keys(raw, allowed, "")
    system = raw.get("system")
    if system not in SYSTEMS:
        raise ConfigError("system", f"unknown system {system!r}; expected one of {', '.join(SYSTEMS)}")
    if "model" not in raw:
        raise ConfigError("model", "missing required key")
    spec = _model_spec(raw["model"], _expect_mapping(raw.get("model_options"), "model_options"))
    training = _training(_expect_mapping(raw.get("training"), "training"))

    default_span = 8.0 if system == "smib" else 20.0
    span = _number(raw.get("span", default_span), "span", positive=True)
    output_step = _number(raw.get("output_step", 0.01), "output_step", positive=True)

    oracle_sec = _expect_mapping(raw.get("oracle"), "oracle")
    _check_keys(oracle_sec, {"step", "fault_step"}, "oracle.")
    oracle = OracleConfig(**{k: _number(v, f"oracle.{k}", positive=True) for k, v in oracle_sec.items()})

    emit_plots = raw.get("emit_plots", False)
    if not isinstance(emit_plots, bool):
        raise ConfigError("emit_plots", "expected true or false")

    smib = _expect_mapping(raw.get("smib"), "smib")
    _check_keys(smib, {"k1", "k2", "k3", "delta0", "domega0"}, "smib.")
    smib = {k: _number(v, f"smib.{k}") for k, v in smib.items()}

    base_dir = Path(".") if base_dir is None else Path(base_dir)
    wscc_file = raw.get("wscc_file")
    if wscc_file is not None:
        if not isinstance(wscc_file, str):
            raise ConfigError("wscc_file", "expected a path string")
        wscc_file = base_dir / wscc_file
        if not wscc_file.is_file():
            raise ConfigError("wscc_file", f"no such file: {wscc_file}")

    out_dir = environ.get(OUTPUT_DIR_ENV) or raw.get("output_dir", "runs")
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir", "expected a path string")
    out_path = Path(out_dir)
    if not out_path.is_absolute() and not environ.get(OUTPUT_DIR_ENV):
        out_path = base_dir / out_path

    return RunConfig(
        system=system,
        model=spec.kind,
        span=span,
        output_dir=out_path,
        training=training,
        model_options=spec,
        oracle=oracle,
        output_step=output_step,
        emit_plots=emit_plots,
        smib=smib,
        wscc_file=wscc_file,
        sweep=_sweep(raw.get("sweep")),
    )


def load_config(path, environ=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return parse_config(raw, base_dir=path.parent, environ=environ)
