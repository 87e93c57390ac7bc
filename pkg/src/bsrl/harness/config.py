"""Run configuration: one JSON document, validated, unknown keys rejected."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core import DEFAULT_OPTION_LENGTHS, ConfigurationError
from ..envs.dungeon import CHANNELS

CONFIG_VERSION = 1

# per-channel learner-side scales for the dungeon channels (shaping magnitudes)
DUNGEON_CHANNEL_SCALES = {"scout": 1.0, "dlvl": 100.0, "ac": 250.0, "food": 0.1, "xp": 4.0}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChainSpec(_Strict):
    kind: Literal["chain"] = "chain"
    n_states: int = Field(5, ge=2)
    n_channels: int = Field(1, ge=1)
    layout_seed: int = 0  # picks the waypoint states of the extra channels
    slip: float = Field(0.0, ge=0.0, le=1.0)
    max_steps: int = Field(20, ge=1)

    @property
    def channel_count(self) -> int:
        return self.n_channels


class DungeonSpec(_Strict):
    kind: Literal["dungeon"] = "dungeon"
    floors: int = Field(6, ge=2)
    branch_floor: int = Field(2, ge=1)
    branch_levels: int = Field(2, ge=1)
    grid_size: int = Field(9, ge=5)
    reveal_radius: int = Field(1, ge=0)
    view_radius: int = Field(2, ge=1)
    hunger_max: int = Field(200, ge=1)
    food_per_floor: int = Field(1, ge=0)
    armour_per_floor: int = Field(1, ge=0)
    monsters_per_floor: int = Field(2, ge=0)
    carve_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    max_steps: int = Field(500, ge=1)
    channels: tuple[str, ...] = CHANNELS
    fixed_layout: bool = False

    @field_validator("channels")
    @classmethod
    def _known(cls, v):
        bad = [c for c in v if c not in CHANNELS]
        if bad or not v:
            raise ValueError(f"unknown channels {bad}; choose from {list(CHANNELS)}")
        if len(set(v)) != len(v):
            raise ValueError("channels must be unique")
        return v

    @model_validator(mode="after")
    def _branch(self):
        if self.branch_floor >= self.floors:
            raise ValueError("branch_floor must be below floors")
        return self

    @property
    def channel_count(self) -> int:
        return len(self.channels)


EnvSpec = Annotated[Union[ChainSpec, DungeonSpec], Field(discriminator="kind")]


class RunConfig(_Strict):
    version: Literal[1] = CONFIG_VERSION
    mode: Literal["hbs", "sol", "flat"] = "hbs"
    seed: int = 0
    env: EnvSpec = Field(default_factory=DungeonSpec)
    n_channels: int | None = Field(None, ge=1)  # redundant check against env when given

    bin_count: int = Field(3, ge=2)
    bin_spacing: Literal["linear"] = "linear"
    option_lengths: tuple[int, ...] = DEFAULT_OPTION_LENGTHS
    static_rho: tuple[float, ...] | None = None
    channel_scales: tuple[float, ...] | None = None  # None means 1 for every channel

    gamma_controller: float = Field(0.999, gt=0.0, lt=1.0)
    gamma_option: float = Field(0.999, gt=0.0, lt=1.0)
    gamma_flat: float = Field(0.999, gt=0.0, lt=1.0)
    gae_lambda: float = Field(0.95, ge=0.0, le=1.0)
    option_trace: Literal["continue", "cut"] = "continue"  # intra-option lambda trace at option ends
    use_vtrace: bool = True
    clip_epsilon: float = Field(0.2, gt=0.0)
    entropy_coef: float = Field(0.003, ge=0.0)
    controller_entropy_scale: float = Field(1.0, ge=0.0)  # multiplies entropy_coef for the controller heads
    value_coef: float = Field(0.5, ge=0.0)
    learning_rate: float = Field(2e-4, gt=0.0)
    batch_size: int = Field(2048, ge=1)  # primitive steps per update, rounded up to whole episodes
    num_minibatches: int = Field(1, ge=1)
    max_grad_norm: float | None = Field(4.0, gt=0.0)
    normalize_advantages: bool = True
    reward_scale: float = Field(0.01, gt=0.0)
    controller_reward_scale: float = Field(0.001, gt=0.0)
    reward_clip: float | None = Field(1e4, gt=0.0)

    hidden: int = Field(128, ge=1)
    option_hidden: int = Field(64, ge=1)

    total_steps: int = Field(1_000_000, ge=1)
    eval_every: int = Field(10, ge=0)  # updates between eval blocks; 0 disables intermediate evals
    eval_episodes: int = Field(10, ge=1)
    eval_greedy: bool = True  # argmax actions in eval; sampling suits envs where argmax policies loop
    checkpoint_every: int = Field(0, ge=0)  # updates; 0 keeps only the final checkpoint

    @field_validator("option_lengths")
    @classmethod
    def _lengths(cls, v):
        if not v or any(x < 1 for x in v) or len(set(v)) != len(v):
            raise ValueError("option_lengths must be distinct positive integers")
        return tuple(sorted(v))

    @model_validator(mode="after")
    def _consistent(self):
        n = self.env.channel_count
        if self.n_channels is not None and self.n_channels != n:
            raise ValueError(f"n_channels={self.n_channels} but env provides {n} channels")
        if self.channel_scales is not None and len(self.channel_scales) != n:
            raise ValueError(f"channel_scales needs {n} entries, got {len(self.channel_scales)}")
        if self.mode == "flat" and self.static_rho is None:
            raise ValueError("flat mode requires static_rho")
        if self.static_rho is not None:
            if len(self.static_rho) != n:
                raise ValueError(f"static_rho needs {n} entries, got {len(self.static_rho)}")
            if any(not 0.0 <= x <= 1.0 for x in self.static_rho):
                raise ValueError("static_rho entries must lie in [0, 1]")
        return self

    @property
    def channel_count(self) -> int:
        return self.env.channel_count

    @property
    def scales(self) -> tuple[float, ...]:
        return self.channel_scales if self.channel_scales is not None else (1.0,) * self.channel_count

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)


def format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def parse_config(data: dict) -> RunConfig:
    """Validate a config dict; raises ConfigurationError with one line per bad field."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigurationError("invalid config:\n" + format_errors(err)) from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(raw)
    return out


def set_path(data: dict, key: str, value) -> dict:
    out = copy.deepcopy(data)
    node = out
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def load_config(path, overrides=None, seed: int | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a JSON object")
    data = apply_overrides(data, overrides)
    if seed is not None:
        data["seed"] = seed
    return parse_config(data)
