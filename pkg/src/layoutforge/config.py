"""Application configuration: one JSON document, validated on load.

Every setting has a default; a config file overrides a subset. Unknown keys
are rejected with the offending key path so typos fail loudly. The config
path may also come from the LAYOUTFORGE_CONFIG environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Optional

from .denoiser import CTX_DIM, HIDDEN_DIM, TEMB_DIM, TrainConfig
from .rules import RuleConfig

ENV_VAR = "LAYOUTFORGE_CONFIG"

DEFAULTS: dict[str, Any] = {
    "schedule": {"T": 200, "beta_start": 1e-4, "beta_end": 0.02},
    "net": {"hidden": HIDDEN_DIM, "context": CTX_DIM, "time_embedding": TEMB_DIM},
    "train": {
        "epochs": 30,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "condition_dropout_p": 0.1,
        "design_penalty_lambda": 0.1,
        "seed": 0,
    },
    "rules": {
        "tau_align": 0.01,
        "tau_snap": 0.02,
        "g_min": 0.01,
        "lambda_weight": 0.1,
        "hue_sigma": 60.0,
    },
    "sampler": {"projection_every": 25},
    "paths": {"corpus": None, "weights": None, "static_dir": None},
    "server": {"host": "127.0.0.1", "port": 8787},
    "seeds": {"sample": 0, "eval": 0, "split": 0},
    "eval": {"split_ratio": 0.8, "max_items": None, "apply_feedback": True},
}


class ConfigError(ValueError):
    pass


def _check_and_merge(base: dict, override: dict, path: str) -> dict:
    merged = dict(base)
    for key, value in override.items():
        key_path = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {key_path}")
        default = base[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {key_path} must be an object")
            merged[key] = _check_and_merge(default, value, key_path)
        else:
            if isinstance(default, bool) and not isinstance(value, bool):
                raise ConfigError(f"config key {key_path} must be a boolean")
            if isinstance(default, (int, float)) and not isinstance(default, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"config key {key_path} must be a number")
            if isinstance(default, str) and not isinstance(value, str):
                raise ConfigError(f"config key {key_path} must be a string")
            merged[key] = value
    return merged


@dataclass(frozen=True)
class AppConfig:
    doc: dict

    def __getitem__(self, key: str) -> Any:
        return self.doc[key]

    def schedule_args(self) -> tuple[int, float, float]:
        s = self.doc["schedule"]
        return int(s["T"]), float(s["beta_start"]), float(s["beta_end"])

    def train_config(self, **overrides) -> TrainConfig:
        t = dict(self.doc["train"])
        t.update(overrides)
        cfg = TrainConfig(
            epochs=int(t["epochs"]),
            batch_size=int(t["batch_size"]),
            learning_rate=float(t["learning_rate"]),
            beta1=float(t["beta1"]),
            beta2=float(t["beta2"]),
            epsilon=float(t["epsilon"]),
            condition_dropout_p=float(t["condition_dropout_p"]),
            design_penalty_lambda=float(t["design_penalty_lambda"]),
            seed=int(t["seed"]),
        )
        cfg.validate()
        return cfg

    def rule_config(self) -> RuleConfig:
        r = self.doc["rules"]
        cfg = RuleConfig(
            tau_align=float(r["tau_align"]),
            tau_snap=float(r["tau_snap"]),
            g_min=float(r["g_min"]),
            lambda_weight=float(r["lambda_weight"]),
            hue_sigma=float(r["hue_sigma"]),
        )
        cfg.validate()
        return cfg


def load_config(path: Optional[str] = None) -> AppConfig:
    """Load and validate a config file; no file means pure defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    doc = DEFAULTS
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path) as fh:
                override = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(override, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        doc = _check_and_merge(DEFAULTS, override, "")
    net = doc["net"]
    expected = DEFAULTS["net"]
    if dict(net) != expected:
        raise ConfigError(
            f"net dims {net} not supported by this build; expected {expected}"
        )
    return AppConfig(doc=doc)
