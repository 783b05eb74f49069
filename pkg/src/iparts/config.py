"""Experiment configuration: one versioned JSON document checked against a schema."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import jsonschema

from .baselines import VARIANTS
from .market import ConfigError, ScenarioConfig
from .offline_game import PlannerParams
from .privacy import PrivacyCaps

SCHEMA_VERSION = 1

_range = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **{name: _range for name in ScenarioConfig.RANGE_FIELDS},
                "n_tasks": _posint,
                "n_workers": _posint,
                "data_variance": _nonneg,
                "intent_prior": {"type": "number", "minimum": 0, "maximum": 1},
                "price_resolution": _nonneg,
                "omega3": {"type": "number", "exclusiveMinimum": 0},
                "rho1": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "rho2": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "worker_counts": {"type": "array", "items": _posint, "minItems": 1},
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": _posint,
                "improve_eps": {"type": "number", "exclusiveMinimum": 0},
                "T_max": _posint,
                "R_max": {"type": ["integer", "null"], "minimum": 1},
                "enum_limit": {"type": "integer", "minimum": 0, "maximum": 20},
                "best_effort": {"type": "boolean"},
            },
        },
        "privacy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "Q_loss_max": {"type": ["number", "null"], "minimum": 0},
                "beta0": {"type": ["number", "null"], "minimum": 0},
                "gamma": _nonneg,
                "omega": {"oneOf": [_nonneg, {"type": "array", "items": _nonneg}]},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "epoch_length": _posint,
            },
        },
        "variants": {
            "type": "array",
            "items": {"enum": list(VARIANTS)},
            "minItems": 1,
            "uniqueItems": True,
        },
        "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "replications": _posint,
        "attack": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T_grid": {"type": "array", "items": _posint, "minItems": 1},
                "replications": _posint,
                "eps": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "variants": {
                    "type": "array",
                    "items": {"enum": ["iParts", "NoP", "NoMem"]},
                    "minItems": 1,
                },
                "attacker": {"enum": ["majority", "likelihood_ratio"]},
                "ledger_T": _posint,
            },
        },
        "output_dir": {"type": "string"},
    },
    "not": {"required": ["seeds", "replications"]},
}


@dataclass(frozen=True)
class AttackConfig:
    T_grid: tuple[int, ...] = (1, 10, 50, 200)
    replications: int = 100
    eps: float | None = None
    variants: tuple[str, ...] = ("iParts", "NoP", "NoMem")
    attacker: str = "majority"
    ledger_T: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    worker_counts: tuple[int, ...] | None = None
    planner: PlannerParams = field(default_factory=PlannerParams)
    caps: PrivacyCaps = field(default_factory=PrivacyCaps)
    step: float = 0.01
    epoch_length: int = 10
    variants: tuple[str, ...] = ("iParts",)
    seeds: tuple[int, ...] = (0,)
    attack: AttackConfig = field(default_factory=AttackConfig)
    output_dir: str = "results"

    def counts(self) -> tuple[int, ...]:
        return self.worker_counts or (self.scenario.n_workers,)

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        return replace(self, seeds=tuple(s + offset for s in self.seeds))


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate ``doc`` and build the typed configuration."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_path(e)}: {e.message}")
    sc = ScenarioConfig.from_dict(doc.get("scenario", {}))
    sc.validate()
    pl = PlannerParams(**doc.get("planner", {}))
    priv = dict(doc.get("privacy", {}))
    step = priv.pop("step", 0.01)
    epoch_length = priv.pop("epoch_length", 10)
    if isinstance(priv.get("omega"), list):
        priv["omega"] = tuple(priv["omega"])
        if len(priv["omega"]) != sc.n_tasks:
            raise ConfigError("config error at privacy/omega: needs one weight per task")
    caps = PrivacyCaps(**priv)
    if "seeds" in doc:
        seeds = tuple(doc["seeds"])
    else:
        seeds = tuple(range(doc.get("replications", 1)))
    att = dict(doc.get("attack", {}))
    for k in ("T_grid", "variants"):
        if k in att:
            att[k] = tuple(att[k])
    wc = doc.get("worker_counts")
    return ExperimentConfig(
        scenario=sc,
        worker_counts=tuple(wc) if wc else None,
        planner=pl,
        caps=caps,
        step=step,
        epoch_length=epoch_length,
        variants=tuple(doc.get("variants", ["iParts"])),
        seeds=seeds,
        attack=AttackConfig(**att),
        output_dir=doc.get("output_dir", "results"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return parse_config(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical JSON form; ``parse_config`` round-trips it."""
    pl = {f.name: getattr(cfg.planner, f.name) for f in fields(cfg.planner)
          if f.name != "tie_break"}
    caps = {f.name: getattr(cfg.caps, f.name) for f in fields(cfg.caps)}
    if isinstance(caps["omega"], tuple):
        caps["omega"] = list(caps["omega"])
    att = {f.name: getattr(cfg.attack, f.name) for f in fields(cfg.attack)}
    att = {k: list(v) if isinstance(v, tuple) else v for k, v in att.items()}
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario.to_dict(),
        "planner": pl,
        "privacy": {**caps, "step": cfg.step, "epoch_length": cfg.epoch_length},
        "variants": list(cfg.variants),
        "seeds": list(cfg.seeds),
        "attack": att,
        "output_dir": cfg.output_dir,
    }
    if cfg.worker_counts:
        doc["worker_counts"] = list(cfg.worker_counts)
    return doc
