"""Flat ``key = value`` experiment configuration.

Every key has a typed default; files and ``--set`` overrides may only touch
known keys.  The resolved text is canonical (sorted, fully spelled out) and
its hash is the config fingerprint carried by every trial record.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 42,
    "track": "curves",
    "duration": 10.0,
    "sim.substep": 0.001,
    "sim.initial_offset_sigma": 0.004,
    "sim.initial_heading_sigma": 0.03,
    "sim.initial_offset": 0.0,
    "sim.initial_heading": 0.0,
    "fsm.enabled": False,
    "controller.kind": "pid",
    "controller.period": 0.05,
    "pid.kp": 28.0,
    "pid.ki": 121.0,
    "pid.kd": 7.0,
    "pid.base_pwm": 150,
    "onoff.v_turn": 60,
    "plant.wheel_base": 0.14,
    "plant.tau_m": 0.08,
    "plant.deadzone": 30,
    "plant.gain_left": 1.0,
    "plant.gain_right": 1.0,
    "plant.sensor_forward_offset": 0.10,
    "plant.sensor_spacing": 0.03,
    "plant.ultrasonic_offset": 0.10,
    "plant.ir_left_side": -1,
    "ir.gain": 900.0,
    "ir.noise_sigma": 6.0,
    "ir.threshold_left": 450,
    "ir.threshold_right": 450,
    "ir.edge_blend": False,
    "ir.median_mode": "burst",
    "us.temperature": 25.0,
    "us.jitter_sigma": 50e-6,
    "us.max_range": 4.0,
    "us.min_range": 0.02,
    "fsm.turn_pwm_left": 40,
    "fsm.turn_pwm_right": 125,
    "fsm.reverse_pwm": 120,
    "fsm.forward_pwm": 150,
    "fsm.search_pwm": 100,
    "fsm.spiral_pwm": 120,
    "power.capacity_mah": 2200.0,
    "power.derating": 1.0,
}

_BOOL = {"true": True, "false": False, "yes": True, "no": False, "on": True, "off": False,
         "1": True, "0": False}


def _coerce(key: str, raw: Any) -> Any:
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        try:
            return _BOOL[str(raw).strip().lower()]
        except KeyError:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}") from None
    if isinstance(default, int):
        try:
            f = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
        if f != int(f):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(f)
    if isinstance(default, float):
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return str(raw).strip()


def parse_assignments(lines: Iterable[str], source: str = "<config>") -> dict[str, Any]:
    out = {}
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


class Config(Mapping):
    """Immutable resolved configuration."""

    def __init__(self, values: Optional[Mapping[str, Any]] = None):
        merged = dict(DEFAULTS)
        for k, v in (values or {}).items():
            if k not in DEFAULTS:
                raise ConfigError(f"unknown key {k!r}")
            merged[k] = _coerce(k, v)
        self._values = merged

    @classmethod
    def load(cls, path: Union[str, Path, None] = None,
             overrides: Iterable[str] = ()) -> "Config":
        values: dict[str, Any] = {}
        if path is not None:
            p = Path(path)
            try:
                text = p.read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config {p}: {exc}") from None
            values.update(parse_assignments(text.splitlines(), str(p)))
        values.update(parse_assignments(overrides, "--set"))
        return cls(values)

    def __getitem__(self, key):
        return self._values[key]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def replace(self, **changes) -> "Config":
        """Copy with keys replaced; dots in keys are spelled as ``__``."""
        values = dict(self._values)
        for k, v in changes.items():
            values[k.replace("__", ".")] = v
        return Config(values)

    def updated(self, changes: Mapping[str, Any]) -> "Config":
        values = dict(self._values)
        values.update(changes)
        return Config(values)

    def dumps(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self._values.items()))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:12]

    def __repr__(self):
        return f"Config({self.fingerprint})"


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
