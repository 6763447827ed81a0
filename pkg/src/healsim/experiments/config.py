"""JSON configuration parsing with key-level error reporting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..gossip import GossipConfig
from ..simkernel import FaultProfileSpec, SimConfig


class ConfigError(Exception):
    """Invalid configuration; the message names the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DataError(Exception):
    """Invalid input data (consumption CSV and friends)."""


def _require(obj: Mapping[str, Any], key: str, kind, where: str):
    if key not in obj:
        raise ConfigError(f"{where}.{key}", "missing required key")
    return _typed(obj, key, kind, where)


def _typed(obj: Mapping[str, Any], key: str, kind, where: str):
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{where}.{key}", "expected an integer")
    if not isinstance(value, kind):
        raise ConfigError(f"{where}.{key}", f"expected {kind.__name__}")
    return value


def _check_known(obj: Mapping[str, Any], allowed: set[str], where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}", "unknown key")


def parse_gossip(obj: Mapping[str, Any], where: str = "gossip") -> GossipConfig:
    _check_known(
        obj,
        {"view_capacity", "healer_h", "swap_s", "peer_selection", "buffer_fraction"},
        where,
    )
    kwargs: dict[str, Any] = {}
    if "view_capacity" in obj:
        kwargs["view_capacity"] = _typed(obj, "view_capacity", int, where)
    if "healer_h" in obj:
        kwargs["healer_h"] = _typed(obj, "healer_h", int, where)
    if "swap_s" in obj:
        kwargs["swap_s"] = _typed(obj, "swap_s", int, where)
    if "peer_selection" in obj:
        kwargs["peer_selection"] = _typed(obj, "peer_selection", str, where)
    if "buffer_fraction" in obj:
        kwargs["buffer_fraction"] = _typed(obj, "buffer_fraction", float, where)
    try:
        return GossipConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


@dataclass(frozen=True)
class RunSpec:
    """One fully specified run: simulation parameters plus the fault shape."""

    sim: SimConfig
    profile: str
    fault_scale: float

    def fault_spec(self) -> FaultProfileSpec:
        return FaultProfileSpec(
            profile_id=self.profile,
            fault_scale=self.fault_scale,
            epochs=self.sim.epochs,
        )


SIM_KEYS = {
    "n_nodes",
    "epochs",
    "bootstrap_epochs",
    "seed",
    "threshold",
    "monitoring_mode",
    "epoch_duration_label",
    "gossip",
    "fault",
}


def parse_run_config(obj: Mapping[str, Any], where: str = "config") -> RunSpec:
    if not isinstance(obj, Mapping):
        raise ConfigError(where, "expected a JSON object")
    _check_known(obj, SIM_KEYS, where)
    gossip = parse_gossip(obj.get("gossip", {}), f"{where}.gossip")
    kwargs: dict[str, Any] = {
        "n_nodes": _require(obj, "n_nodes", int, where),
        "epochs": _require(obj, "epochs", int, where),
        "gossip": gossip,
    }
    for key, kind in (
        ("bootstrap_epochs", int),
        ("seed", int),
        ("threshold", int),
        ("monitoring_mode", str),
        ("epoch_duration_label", str),
    ):
        if key in obj:
            kwargs[key] = _typed(obj, key, kind, where)
    try:
        sim = SimConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc

    fault = obj.get("fault", {"profile": "P1", "scale": 0.0})
    if not isinstance(fault, Mapping):
        raise ConfigError(f"{where}.fault", "expected an object")
    _check_known(fault, {"profile", "scale"}, f"{where}.fault")
    profile = _require(fault, "profile", str, f"{where}.fault")
    scale = _require(fault, "scale", float, f"{where}.fault")
    spec = RunSpec(sim=sim, profile=profile, fault_scale=float(scale))
    try:
        spec.fault_spec()
    except ValueError as exc:
        raise ConfigError(f"{where}.fault", str(exc)) from exc
    return spec


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid of settings over one base configuration."""

    fault_scales: tuple[float, ...]
    profiles: tuple[str, ...]
    thresholds: tuple[int, ...]
    base: RunSpec
    parallelism: int = 1
    data: str = "synthetic"

    def settings(self) -> list[tuple[str, float, int]]:
        return [
            (profile, scale, threshold)
            for profile in self.profiles
            for scale in self.fault_scales
            for threshold in self.thresholds
        ]


def parse_sweep_spec(obj: Mapping[str, Any], where: str = "spec") -> SweepSpec:
    if not isinstance(obj, Mapping):
        raise ConfigError(where, "expected a JSON object")
    _check_known(
        obj,
        {"fault_scales", "profiles", "thresholds", "base", "parallelism", "data"},
        where,
    )
    for key in ("fault_scales", "profiles", "thresholds"):
        value = _require(obj, key, list, where)
        if not value:
            raise ConfigError(f"{where}.{key}", "must not be empty")
    scales = tuple(float(x) for x in obj["fault_scales"])
    profiles = tuple(str(x) for x in obj["profiles"])
    thresholds_raw = obj["thresholds"]
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in thresholds_raw):
        raise ConfigError(f"{where}.thresholds", "expected integers")
    thresholds = tuple(int(x) for x in thresholds_raw)
    base_obj = dict(_require(obj, "base", dict, where))
    base_obj.setdefault("fault", {"profile": profiles[0], "scale": scales[0]})
    base = parse_run_config(base_obj, f"{where}.base")
    parallelism = _typed(obj, "parallelism", int, where) if "parallelism" in obj else 1
    if parallelism < 1:
        raise ConfigError(f"{where}.parallelism", "must be at least 1")
    data = _typed(obj, "data", str, where) if "data" in obj else "synthetic"
    return SweepSpec(
        fault_scales=scales,
        profiles=profiles,
        thresholds=thresholds,
        base=base,
        parallelism=parallelism,
        data=data,
    )


def load_json(path: str | Path, where: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(where, f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(where, f"invalid JSON: {exc}") from exc
