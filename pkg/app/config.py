"""Run configuration: pydantic model tree loaded from flat ``key = value`` files."""

import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.errors import ConfigurationError

logger = logging.getLogger(__name__)

POLICY_KINDS = [
    "rpf",
    "rpf_no_visual_memory",
    "rpf_constant_increment",
    "rpf_no_recurrence",
    "gru_no_memory",
    "nearest_neighbor",
    "open_loop",
]


class SeedRange(BaseModel):
    """Inclusive integer seed range, written ``start-end`` in config files."""

    start: int = Field(..., ge=0)
    end: int = Field(..., ge=0)

    @model_validator(mode="before")
    @classmethod
    def _parse_text(cls, value: Any) -> Any:
        if isinstance(value, str):
            parts = value.replace(" ", "").split("-")
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise ValueError(f"seed range must look like 'start-end', got {value!r}")
            return {"start": int(parts[0]), "end": int(parts[1])}
        return value

    @model_validator(mode="after")
    def _ordered(self) -> "SeedRange":
        if self.end < self.start:
            raise ValueError(f"seed range end {self.end} precedes start {self.start}")
        return self

    def __len__(self) -> int:
        return self.end - self.start + 1

    def seed(self, index: int) -> int:
        """Seed at ``index``, wrapping around the range."""
        return self.start + index % len(self)

    def overlaps(self, other: "SeedRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    def text(self) -> str:
        return f"{self.start}-{self.end}"


class PolicySection(BaseModel):
    kind: str = Field("rpf", description="Policy implementation behind act()")
    increment: Literal["one_plus_tanh", "constant"] = "one_plus_tanh"

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {value!r}; expected one of {POLICY_KINDS}")
        return value


class SimSection(BaseModel):
    noise: float = Field(0.2, ge=0.0, le=1.0, description="Actuation noise level n")
    rot_sigma: float = Field(57.3, gt=0.0)
    trans_sigma: float = Field(0.05, gt=0.0)
    agent_radius: float = Field(0.15, gt=0.0, lt=0.2)


class WorldSection(BaseModel):
    width: int = Field(80, ge=16)
    height: int = Field(80, ge=16)
    cell_m: float = Field(0.2, gt=0.0)
    rooms: int = Field(4, ge=1, le=16)
    object_count: int = Field(12, ge=0)
    door_width: int = Field(8, ge=2)


class DemoSection(BaseModel):
    length: int = Field(30, ge=2, description="Target reference trajectory length J")
    clearance: float = Field(0.6, ge=0.0)
    retries: int = Field(200, ge=1)


class ChangeSection(BaseModel):
    r_demo: float = Field(0.0, ge=0.0, le=1.0)
    r_exec: float = Field(0.0, ge=0.0, le=1.0)


class HomingSection(BaseModel):
    memory: Literal["synthesized", "rotated"] = "synthesized"


class EncoderSection(BaseModel):
    width: int = Field(64, ge=4)


class GruSection(BaseModel):
    hidden: int = Field(128, ge=4)


class AttentionSection(BaseModel):
    span: int = Field(0, ge=0, description="0 keeps every memory entry")


class TrainerSection(BaseModel):
    # long runs use 120000 iterations with a wider encoder
    iterations: int = Field(20000, ge=1)
    batch: int = Field(8, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    checkpoint_every: int = Field(1000, ge=1)
    val_trials: int = Field(50, ge=0)
    seed: int = Field(0, ge=0)


class EvalSection(BaseModel):
    horizon: int = Field(40, ge=1)
    trials: int = Field(500, ge=1)
    bootstrap: int = Field(1000, ge=1)
    level: float = Field(0.95, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)


class SeedsSection(BaseModel):
    train: SeedRange = Field(default_factory=lambda: SeedRange(start=0, end=7999))
    val: SeedRange = Field(default_factory=lambda: SeedRange(start=8000, end=8999))
    test: SeedRange = Field(default_factory=lambda: SeedRange(start=9000, end=9999))

    @model_validator(mode="after")
    def _test_is_held_out(self) -> "SeedsSection":
        for name in ("train", "val"):
            if self.test.overlaps(getattr(self, name)):
                raise ValueError(
                    f"test seed range {self.test.text()} overlaps {name} range "
                    f"{getattr(self, name).text()}"
                )
        return self


class RunConfig(BaseModel):
    """Everything a run needs; serialized as a flat dotted-key file."""

    task: Literal["following", "homing"] = "following"
    policy: PolicySection = Field(default_factory=PolicySection)
    sim: SimSection = Field(default_factory=SimSection)
    world: WorldSection = Field(default_factory=WorldSection)
    demo: DemoSection = Field(default_factory=DemoSection)
    change: ChangeSection = Field(default_factory=ChangeSection)
    homing: HomingSection = Field(default_factory=HomingSection)
    encoder: EncoderSection = Field(default_factory=EncoderSection)
    gru: GruSection = Field(default_factory=GruSection)
    attention: AttentionSection = Field(default_factory=AttentionSection)
    trainer: TrainerSection = Field(default_factory=TrainerSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    seeds: SeedsSection = Field(default_factory=SeedsSection)
    workers: int = Field(default_factory=lambda: int(os.getenv("RPF_WORKERS", 1)), ge=1)
    out: str = Field(default_factory=lambda: os.getenv("RPF_OUT", "runs/default"))

    def to_flat(self) -> Dict[str, str]:
        """Flatten to dotted keys with string values."""
        flat: Dict[str, str] = {}
        _flatten(self, "", flat)
        return flat

    @classmethod
    def from_flat(cls, values: Dict[str, Any]) -> "RunConfig":
        nested: Dict[str, Any] = {}
        for key, value in values.items():
            node = nested
            parts = key.split(".")
            # seed ranges are leaves even though they are models
            if parts[0] == "seeds" and len(parts) == 2:
                nested.setdefault("seeds", {})[parts[1]] = value
                continue
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigurationError(f"config key {key!r} conflicts with a scalar key")
            node[parts[-1]] = value
        try:
            return cls.model_validate(nested)
        except ValidationError as e:
            raise ConfigurationError(f"malformed config: {e}") from e

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        flat = self.to_flat()
        unknown = [k for k in overrides if k not in flat]
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        flat.update({k: str(v) for k, v in overrides.items()})
        return RunConfig.from_flat(flat)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_flat(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _flatten(model: BaseModel, prefix: str, out: Dict[str, str]) -> None:
    for name in type(model).model_fields:
        value = getattr(model, name)
        key = f"{prefix}{name}"
        if isinstance(value, SeedRange):
            out[key] = value.text()
        elif isinstance(value, BaseModel):
            _flatten(value, f"{key}.", out)
        else:
            out[key] = repr(value) if isinstance(value, float) else str(value)


def parse_overrides(pairs: Optional[List[str]]) -> Dict[str, str]:
    """Turn ``["a.b=1", ...]`` into a dict."""
    overrides: Dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"override {pair!r} is not of the form key=value")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load a flat config file (python-dotenv syntax) and apply overrides."""
    config = RunConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"config file not found: {path}")
        values = {k: v for k, v in dotenv_values(path).items() if v is not None}
        config = config.with_overrides(values)
        logger.info(f"Loaded config from {path} ({len(values)} keys)")
    if overrides:
        config = config.with_overrides(overrides)
    return config


def save_config(config: RunConfig, path: str) -> None:
    lines = [f"{key}={value}" for key, value in sorted(config.to_flat().items())]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
