"""Scenario files (YAML or JSON) and the shipped presets."""

from __future__ import annotations

from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .model import Channel, Scenario, ScenarioError, as_fraction

PRESETS = ("gradual", "steep", "lossy")


class ConfigError(ScenarioError):
    pass


def load_scenario(source: str | Path) -> Scenario:
    """Load a preset name (``gradual``/``steep``/``lossy``) or a config path."""
    if str(source) in PRESETS:
        text = resources.files("osa_transfer.presets").joinpath(f"{source}.yaml").read_text()
        return parse_scenario(text, origin=str(source))
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"no such scenario file or preset {str(source)!r}", "scenario")
    return parse_scenario(path.read_text(), origin=str(path))


def parse_scenario(text: str, origin: str = "<string>") -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{origin}: malformed config at {where}: {exc.problem}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{origin}: top level must be a mapping")
    return scenario_from_dict(doc, origin)


def scenario_from_dict(doc: dict[str, Any], origin: str = "<dict>") -> Scenario:
    known = {"name", "slot_ms", "switching_delay_ms", "quantum_mb", "channels"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"{origin}: unknown key", str(key))
    slot = _number(doc, "slot_ms", origin) / 1000
    delay = _number(doc, "switching_delay_ms", origin, default=0) / 1000
    quantum = _number(doc, "quantum_mb", origin, default=Fraction(1, 1000))
    raw_channels = doc.get("channels")
    if not isinstance(raw_channels, list) or not raw_channels:
        raise ConfigError(f"{origin}: expected a non-empty list", "channels")
    channels = [_channel(entry, idx, origin) for idx, entry in enumerate(raw_channels)]
    try:
        return Scenario(slot, channels, switching_delay=delay, quantum=quantum, name=str(doc.get("name", "")))
    except ScenarioError as exc:
        raise ConfigError(f"{origin}: {exc.message}", exc.field) from None


def _channel(entry: Any, idx: int, origin: str) -> Channel:
    where = f"channels[{idx}]"
    if not isinstance(entry, dict):
        raise ConfigError(f"{origin}: each channel must be a mapping", where)
    allowed = {"id", "rate_mbps", "p", "q_up", "q_down", "c0", "misdetect"}
    for key in entry:
        if key not in allowed:
            raise ConfigError(f"{origin}: unknown key", f"{where}.{key}")
    if "id" not in entry or not isinstance(entry["id"], int):
        raise ConfigError(f"{origin}: integer id required", f"{where}.id")
    rate = _number(entry, "rate_mbps", origin, prefix=where)
    try:
        if "p" in entry:
            return Channel.bernoulli(entry["id"], rate, _number(entry, "p", origin, prefix=where),
                                     _number(entry, "misdetect", origin, default=0, prefix=where))
        q_up = _number(entry, "q_up", origin, prefix=where)
        q_down = _number(entry, "q_down", origin, prefix=where)
        c0 = _number(entry, "c0", origin, default=None, prefix=where)
        if "misdetect" in entry and as_fraction(entry["misdetect"]) != 0:
            raise ConfigError(f"{origin}: misdetect is only supported on Bernoulli channels",
                              f"{where}.misdetect")
        return Channel.markov(entry["id"], rate, q_up, q_down, c0)
    except ScenarioError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{origin}: {exc.message}", exc.field) from None


_MISSING = object()


def _number(doc: dict, key: str, origin: str, default: Any = _MISSING, prefix: str = "") -> Any:
    name = f"{prefix}.{key}" if prefix else key
    if key not in doc:
        if default is _MISSING:
            raise ConfigError(f"{origin}: missing required field", name)
        return default
    try:
        return as_fraction(doc[key])
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(f"{origin}: not a number: {doc[key]!r}", name) from None


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    chans = []
    for ch in scenario.channels:
        entry: dict[str, Any] = {"id": ch.id, "rate_mbps": float(ch.rate)}
        if ch.is_markov:
            entry.update(q_up=float(ch.q_up), q_down=float(ch.q_down), c0=float(ch.c0))
        else:
            entry["p"] = float(ch.p)
            if ch.misdetect:
                entry["misdetect"] = float(ch.misdetect)
        chans.append(entry)
    return {
        "name": scenario.name,
        "slot_ms": float(scenario.slot_seconds * 1000),
        "switching_delay_ms": float(scenario.switching_delay * 1000),
        "quantum_mb": float(scenario.quantum),
        "channels": chans,
    }
