"""Run configuration: a flat, commented key-value file with sections.

Every key has a documented default; parsing is strict in both directions:
unknown sections or keys are rejected, and so are values that fail their
type or range checks, all before any compute starts. Command-line flags
are funneled through the same typed path as file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .env import CartPoleConfig
from .distill import DistillConfig
from .errors import ConfigError, ContractViolation
from .ppo import PpoHyperparams

_NONE_WORDS = ("none", "")

# section -> key -> (type tag, default)
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "run": {
        "out_dir": ("str", "runs/out"),
        "master_seed": ("int", 0),
        "workers": ("int", 1),
    },
    "env": {
        "n_dims": ("int", 1),
        "gravity": ("float", 9.8),
        "cart_mass": ("float", 1.0),
        "pole_mass": ("float", 0.1),
        "pole_half_length": ("float", 0.5),
        "force_mag": ("float", 10.0),
        "integration_dt": ("float", 0.02),
        "angle_threshold": ("float", 0.20943951023931953),
        "position_threshold": ("float", 2.4),
        "max_steps": ("int", 500),
        "rollout_truncation": ("int", 200),
    },
    "distill": {
        "k": ("int", 2),
        "meta_epoch_budget": ("int", 3000),
        "distiller_lr": ("float", 2.5e-4),
        "initial_inner_lr": ("float", 2e-2),
        "inner_steps": ("int", 1),
        "split_layer": ("optional_int", None),
        "inner_lr_floor": ("float", 2e-3),
        "convergence_window": ("int", 100),
        "convergence_patience": ("int", 300),
        "convergence_min_improvement": ("float", 0.01),
    },
    "ppo": {
        "clip_epsilon": ("float", 0.2),
        "discount_gamma": ("float", 0.99),
        "gae_lambda": ("float", 0.95),
        "policy_epochs": ("int", 4),
        "batch_size": ("int", 512),
        "episodes_per_epoch": ("int", 10),
        "critic_lr": ("float", 2.5e-4),
        "normalize_advantages": ("bool", True),
    },
    "rl": {
        "epochs": ("int", 1000),
        "actor_lr": ("float", 2.5e-4),
        "early_stop_reward": ("optional_float", None),
    },
    "eval": {
        "agents": ("int", 100),
        "episodes": ("int", 100),
        "distribution": ("str", "lambda"),
    },
    "kmin": {
        "k_range": ("str", ""),
        "success_reward": ("float", 250.0),
    },
}


def _convert(section: str, key: str, kind: str, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    where = f"{section}.{key}"
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "optional_int":
            return None if text.lower() in _NONE_WORDS else int(text)
        if kind == "optional_float":
            return None if text.lower() in _NONE_WORDS else float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {where}: {raw!r} (expected {kind})") from exc


@dataclass
class RunConfig:
    """All sections resolved to concrete values (defaults expanded)."""

    values: dict[str, dict[str, object]] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    @property
    def out_dir(self) -> str:
        return str(self.values["run"]["out_dir"])

    @property
    def master_seed(self) -> int:
        return int(self.values["run"]["master_seed"])

    @property
    def workers(self) -> int:
        return int(self.values["run"]["workers"])

    def env_config(self) -> CartPoleConfig:
        try:
            return CartPoleConfig(**self.values["env"])
        except ContractViolation as exc:
            raise ConfigError(f"invalid [env] config: {exc}") from exc

    def ppo_hyperparams(self) -> PpoHyperparams:
        try:
            return PpoHyperparams(**self.values["ppo"])
        except ContractViolation as exc:
            raise ConfigError(f"invalid [ppo] config: {exc}") from exc

    def distill_config(self) -> DistillConfig:
        d = self.values["distill"]
        try:
            return DistillConfig(
                k=d["k"],
                meta_epoch_budget=d["meta_epoch_budget"],
                ppo=self.ppo_hyperparams(),
                distiller_lr=d["distiller_lr"],
                initial_inner_lr=d["initial_inner_lr"],
                inner_steps=d["inner_steps"],
                convergence_window=d["convergence_window"],
                convergence_patience=d["convergence_patience"],
                convergence_min_improvement=d["convergence_min_improvement"],
                inner_lr_floor=d["inner_lr_floor"],
                seed=self.master_seed,
            )
        except ContractViolation as exc:
            raise ConfigError(f"invalid [distill] config: {exc}") from exc

    def split_layer(self) -> int | None:
        v = self.values["distill"]["split_layer"]
        return None if v is None else int(v)

    def to_dict(self) -> dict:
        return {s: dict(kv) for s, kv in self.values.items()}


def default_config() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})


def load_config(path: str | None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Parse a config file (optional) and apply 'section.key=value' overrides.

    Raises ConfigError on syntax errors (with line numbers, via the parser),
    unknown sections/keys, or mistyped values.
    """
    rc = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            with open(path) as fh:
                parser.read_file(fh, source=path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                kind = SCHEMA[section][key][0]
                rc.values[section][key] = _convert(section, key, kind, raw)
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        kind = SCHEMA[section][key][0]
        rc.values[section][key] = _convert(section, key, kind, raw)
    # construct the typed configs once so range violations surface now
    rc.env_config()
    rc.ppo_hyperparams()
    rc.distill_config()
    split = rc.split_layer()
    if split is not None and not 0 <= split <= 3:
        raise ConfigError("distill.split_layer must be none or in [0, 3]")
    if rc.workers < 1:
        raise ConfigError("run.workers must be >= 1")
    for key, lo in (("epochs", 1),):
        if int(rc.values["rl"][key]) < lo:
            raise ConfigError(f"rl.{key} must be >= {lo}")
    if int(rc.values["eval"]["agents"]) < 1 or int(rc.values["eval"]["episodes"]) < 1:
        raise ConfigError("eval.agents and eval.episodes must be >= 1")
    return rc


def parse_k_range(text: str) -> list[int]:
    """Inclusive 'LO:HI' range or comma list of k values."""
    text = text.strip()
    if not text:
        raise ConfigError("empty k range")
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError
            ks = list(range(lo_i, hi_i + 1))
        else:
            ks = [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad k range {text!r} (use LO:HI or k1,k2,...)") from exc
    if not ks or any(k < 1 for k in ks):
        raise ConfigError("k values must be >= 1")
    return ks
