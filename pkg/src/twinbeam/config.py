"""Strict scenario configuration.

A config is a JSON object.  Keys not listed for the chosen scenario are
rejected, so a typo such as ``half_wdith`` fails loudly instead of silently
falling back to a default.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError, TwinBeamError
from .source import TwinBeamModel

SCENARIOS = ("histograms", "bandwidth_sweep", "gemellity_sweep", "multiband", "calibrate")
WIDTH_CONVENTIONS = ("half", "full")
SHOT_REFERENCES = ("calibration", "ideal")

_COMMON = {
    "scenario", "n", "seeds", "model", "width_convention", "quantizer", "shot_reference",
    "subtract_dark", "sample_rate_hz", "demod_frequency_hz", "min_accepted", "calibration_n",
}
_SCENARIO_KEYS = {
    "histograms": {"center", "half_width", "bin_width", "conditioned_bin_width"},
    "bandwidth_sweep": {"center", "half_widths"},
    "gemellity_sweep": {"center", "half_width", "loss_grid", "gemellity_db_grid"},
    "multiband": {"centers", "half_width", "partition_range", "partition_count"},
    "calibrate": {"bin_width"},
}
_REQUIRED = {
    "bandwidth_sweep": ({"half_widths"},),
    "gemellity_sweep": ({"loss_grid"}, {"gemellity_db_grid"}),
    "multiband": ({"centers"},),
}
_MODEL_KEYS = {f.name for f in fields(TwinBeamModel)}
_SEED_KEYS = {"trace", "dark", "calibration"}
_QUANTIZER_KEYS = {"bits", "full_scale", "headroom"}


@dataclass(frozen=True)
class Seeds:
    trace: int = 1
    dark: int = 2
    calibration: int = 3


@dataclass(frozen=True)
class QuantizerConfig:
    bits: int = 12
    full_scale: float | None = None
    headroom: float = 4.0


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    model: TwinBeamModel = field(default_factory=TwinBeamModel)
    n: int = 200_000
    seeds: Seeds = field(default_factory=Seeds)
    width_convention: str = "half"
    quantizer: QuantizerConfig | None = None
    shot_reference: str = "calibration"
    subtract_dark: bool = False
    sample_rate_hz: float = 200e3
    demod_frequency_hz: float = 3.5e6
    min_accepted: int = 500
    calibration_n: int | None = None
    center: float = 0.0
    half_width: float = 0.1
    half_widths: tuple[float, ...] = ()
    centers: tuple[float, ...] = ()
    loss_grid: tuple[float, ...] = ()
    gemellity_db_grid: tuple[float, ...] = ()
    partition_range: float = 5.0
    partition_count: int = 100
    bin_width: float = 0.5
    conditioned_bin_width: float = 0.1

    def to_dict(self) -> dict[str, Any]:
        """Canonical form: common keys plus the keys this scenario accepts."""
        full = asdict(self)
        keep = (_COMMON | _SCENARIO_KEYS[self.scenario]) - {"scenario"}
        out = {"scenario": self.scenario}
        for key in sorted(keep):
            value = full[key]
            if isinstance(value, tuple):
                value = list(value)
            out[key] = value
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def half_width_of(self, width: float) -> float:
        """Convert a configured width to a half-width under ``width_convention``."""
        return width if self.width_convention == "half" else width / 2.0

    @property
    def n_calibration(self) -> int:
        return self.n if self.calibration_n is None else self.calibration_n


def _check_keys(where: str, given: dict, allowed: set) -> None:
    if not isinstance(given, dict):
        raise ConfigError(f"{where} must be an object, got {type(given).__name__}")
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _number(where: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{where} must be an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where} must be finite")
    return float(value)


def _numbers(where: str, value) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{where} must be a list")
    return tuple(_number(f"{where}[{k}]", v) for k, v in enumerate(value))


def parse_config(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {scenario!r}")
    _check_keys("config", data, _COMMON | _SCENARIO_KEYS[scenario])
    required = _REQUIRED.get(scenario)
    if required and not any(opt <= set(data) for opt in required):
        names = " or ".join("/".join(sorted(opt)) for opt in required)
        raise ConfigError(f"scenario {scenario} requires {names}")

    kw: dict[str, Any] = {"scenario": scenario}
    if "model" in data:
        _check_keys("model", data["model"], _MODEL_KEYS)
        params = {k: _number(f"model.{k}", v) for k, v in data["model"].items()}
        try:
            kw["model"] = TwinBeamModel(**params)
        except TwinBeamError as err:
            raise ConfigError(f"model: {err}") from err
    if "seeds" in data:
        _check_keys("seeds", data["seeds"], _SEED_KEYS)
        kw["seeds"] = Seeds(**{k: _number(f"seeds.{k}", v, integer=True) for k, v in data["seeds"].items()})
    if data.get("quantizer") is not None:
        q = data["quantizer"]
        _check_keys("quantizer", q, _QUANTIZER_KEYS)
        qkw = {}
        if "bits" in q:
            qkw["bits"] = _number("quantizer.bits", q["bits"], integer=True)
        if q.get("full_scale") is not None:
            qkw["full_scale"] = _number("quantizer.full_scale", q["full_scale"])
        if "headroom" in q:
            qkw["headroom"] = _number("quantizer.headroom", q["headroom"])
        kw["quantizer"] = QuantizerConfig(**qkw)

    for key in ("n", "min_accepted", "partition_count"):
        if key in data:
            kw[key] = _number(key, data[key], integer=True)
    if data.get("calibration_n") is not None:
        kw["calibration_n"] = _number("calibration_n", data["calibration_n"], integer=True)
    for key in ("sample_rate_hz", "demod_frequency_hz", "center", "half_width",
                "partition_range", "bin_width", "conditioned_bin_width"):
        if key in data:
            kw[key] = _number(key, data[key])
    for key in ("half_widths", "centers", "loss_grid", "gemellity_db_grid"):
        if key in data:
            kw[key] = _numbers(key, data[key])
    if "width_convention" in data:
        kw["width_convention"] = data["width_convention"]
    if "shot_reference" in data:
        kw["shot_reference"] = data["shot_reference"]
    if "subtract_dark" in data:
        if not isinstance(data["subtract_dark"], bool):
            raise ConfigError("subtract_dark must be true or false")
        kw["subtract_dark"] = data["subtract_dark"]
    return validate(ScenarioConfig(**kw))


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.width_convention not in WIDTH_CONVENTIONS:
        raise ConfigError(f"width_convention must be half or full, got {cfg.width_convention!r}")
    if cfg.shot_reference not in SHOT_REFERENCES:
        raise ConfigError(f"shot_reference must be calibration or ideal, got {cfg.shot_reference!r}")
    if cfg.n < 2:
        raise ConfigError("n must be >= 2")
    if cfg.n_calibration < 2:
        raise ConfigError("calibration_n must be >= 2")
    if cfg.min_accepted < 2:
        raise ConfigError("min_accepted must be >= 2")
    if cfg.half_width <= 0:
        raise ConfigError("half_width must be positive")
    if cfg.bin_width <= 0 or cfg.conditioned_bin_width <= 0:
        raise ConfigError("bin widths must be positive")
    if cfg.quantizer is not None:
        if cfg.quantizer.bits < 1:
            raise ConfigError("quantizer.bits must be >= 1")
        if cfg.quantizer.full_scale is not None and cfg.quantizer.full_scale <= 0:
            raise ConfigError("quantizer.full_scale must be positive")
        if cfg.quantizer.headroom <= 0:
            raise ConfigError("quantizer.headroom must be positive")
    if cfg.scenario == "bandwidth_sweep":
        w = cfg.half_widths
        if not w or any(x <= 0 for x in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ConfigError("half_widths must be positive and strictly ascending")
    if cfg.scenario == "gemellity_sweep":
        if cfg.loss_grid and cfg.gemellity_db_grid:
            raise ConfigError("give either loss_grid or gemellity_db_grid, not both")
        if any(not 0 <= x <= 1 for x in cfg.loss_grid):
            raise ConfigError("loss_grid values must lie in [0, 1]")
    if cfg.scenario == "multiband":
        if cfg.partition_range <= 0 or cfg.partition_count < 1:
            raise ConfigError("partition_range and partition_count must be positive")
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}: invalid JSON: {err.msg}") from err
    try:
        return parse_config(data)
    except ConfigError as err:
        raise ConfigError(f"{path}: {err}") from err


def with_overrides(cfg: ScenarioConfig, seed: int | None = None, width_convention: str | None = None) -> ScenarioConfig:
    """Apply command-line overrides; ``seed`` replaces the trace seed."""
    if seed is not None:
        cfg = replace(cfg, seeds=replace(cfg.seeds, trace=seed))
    if width_convention is not None:
        cfg = replace(cfg, width_convention=width_convention)
    return validate(cfg)
