"""Shared value types, reward combination and seeding utilities."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_OPTION_LENGTHS = (1, 2, 4, 8, 16, 32, 64, 128)


class ConfigurationError(ValueError):
    """Raised for invalid run or environment configuration."""


class ContractViolation(ValueError):
    """Raised when an operation's preconditions are not met."""


# --------------------------------------------------------------------------- #
# seeding
# --------------------------------------------------------------------------- #


def derive_seed(root: int, *names: object) -> int:
    """Child seed for a named component.

    The seed is the first 8 bytes of sha256("<root>/<name1>/<name2>...") read
    as an unsigned little-endian integer, so any component can be replayed in
    isolation from the root seed and its name path alone.
    """
    path = "/".join([str(int(root))] + [str(n) for n in names])
    digest = hashlib.sha256(path.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(root: int, *names: object) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, *names)))


# --------------------------------------------------------------------------- #
# value types
# --------------------------------------------------------------------------- #


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RewardVector:
    """Per-step channel rewards plus the scalar task reward."""

    channels: np.ndarray
    task: float

    def __post_init__(self):
        object.__setattr__(self, "channels", _frozen_array(self.channels))
        object.__setattr__(self, "task", float(self.task))
        if self.channels.ndim != 1:
            raise ContractViolation("reward channels must be a 1-d array")
        if not (np.all(np.isfinite(self.channels)) and np.isfinite(self.task)):
            raise ContractViolation("reward values must be finite")

    @property
    def n(self) -> int:
        return self.channels.shape[0]


@dataclass(frozen=True)
class BehaviourVector:
    """Quantized reward coefficients. ``coeffs[i] == bins[bin_indices[i]]``."""

    bin_indices: tuple
    bins: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.bin_indices)
        bins = tuple(float(b) for b in self.bins)
        for i in idx:
            if not 0 <= i < len(bins):
                raise ContractViolation(f"bin index {i} outside bin set of size {len(bins)}")
        object.__setattr__(self, "bin_indices", idx)
        object.__setattr__(self, "bins", bins)

    @property
    def coeffs(self) -> np.ndarray:
        return _frozen_array([self.bins[i] for i in self.bin_indices])

    @property
    def n(self) -> int:
        return len(self.bin_indices)

    @classmethod
    def from_coeffs(cls, coeffs: Iterable[float], bins: Sequence[float]) -> "BehaviourVector":
        bins = tuple(float(b) for b in bins)
        idx = []
        for c in coeffs:
            matches = [k for k, b in enumerate(bins) if b == float(c)]
            if not matches:
                raise ContractViolation(f"coefficient {c} is not a member of bin set {bins}")
            idx.append(matches[0])
        return cls(tuple(idx), bins)

    @classmethod
    def one_hot(cls, i: int, n: int, bins: Sequence[float]) -> "BehaviourVector":
        idx = [0] * n
        idx[i] = len(bins) - 1
        return cls(tuple(idx), tuple(bins))


@dataclass(frozen=True)
class OptionCommand:
    """A (behaviour vector, length) pair. ``length=None`` runs until episode end."""

    rho: BehaviourVector
    length: int | None

    def __post_init__(self):
        if self.length is not None and int(self.length) < 1:
            raise ContractViolation("option length must be >= 1")

    def validate(self, lengths: Sequence[int]) -> None:
        if self.length not in lengths:
            raise ContractViolation(f"option length {self.length} not in {tuple(lengths)}")


@dataclass(frozen=True)
class TrajectorySegment:
    """Primitive steps executed under one option command.

    Rewards are stored as an array of channel rewards (T, n) and task rewards
    (T,); ``rewards`` rebuilds the per-step RewardVector view.
    ``next_obs`` is the observation after the last executed step, or None when
    the segment ends the episode.
    """

    observations: np.ndarray
    actions: np.ndarray
    channel_rewards: np.ndarray
    task_rewards: np.ndarray
    dones: np.ndarray
    command: OptionCommand
    log_probs: np.ndarray = field(default=None)
    next_obs: np.ndarray | None = None

    def __post_init__(self):
        t = len(self.actions)
        if t < 1:
            raise ContractViolation("segment must contain at least one step")
        if self.command.length is not None and t > self.command.length:
            raise ContractViolation("segment longer than its command")
        if np.any(self.dones[:-1]):
            raise ContractViolation("steps follow a done flag inside a segment")
        if self.log_probs is None:
            object.__setattr__(self, "log_probs", np.zeros(t))

    @property
    def steps_executed(self) -> int:
        return len(self.actions)

    @property
    def rewards(self) -> list[RewardVector]:
        return [RewardVector(c, r) for c, r in zip(self.channel_rewards, self.task_rewards)]

    @property
    def terminal(self) -> bool:
        return bool(self.dones[-1])


# --------------------------------------------------------------------------- #
# operations
# --------------------------------------------------------------------------- #


def quantize_bins(bin_count: int, spacing: str = "linear") -> tuple:
    if spacing != "linear":
        raise ConfigurationError(f"unsupported bin spacing {spacing!r}")
    if int(bin_count) != bin_count or bin_count < 2:
        raise ConfigurationError(f"bin_count must be an integer >= 2, got {bin_count}")
    bin_count = int(bin_count)
    return tuple(k / (bin_count - 1) for k in range(bin_count))


def combine_rewards(rho, r: RewardVector | np.ndarray, scales) -> float:
    """Scaled linear combination ``sum_i rho_i * scale_i * r_i``."""
    coeffs = rho.coeffs if isinstance(rho, BehaviourVector) else np.asarray(rho, dtype=np.float64)
    channels = r.channels if isinstance(r, RewardVector) else np.asarray(r, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    if not (coeffs.shape == channels.shape == scales.shape):
        raise ContractViolation(
            f"length mismatch: rho {coeffs.shape}, rewards {channels.shape}, scales {scales.shape}"
        )
    return float(np.sum(coeffs * scales * channels))


def combine_reward_stream(rho: np.ndarray, channels: np.ndarray, scales) -> np.ndarray:
    """Row-wise ``combine_rewards`` for (T, n) coefficient and reward arrays."""
    return np.sum(rho * np.asarray(scales, dtype=np.float64) * channels, axis=-1)


def split_segments(
    observations: np.ndarray,
    actions: np.ndarray,
    channel_rewards: np.ndarray,
    task_rewards: np.ndarray,
    dones: np.ndarray,
    commands: Sequence[tuple[int, OptionCommand]],
    log_probs: np.ndarray | None = None,
) -> list[TrajectorySegment]:
    """Partition a primitive episode into option segments.

    ``commands`` holds ``(start_step, command)`` pairs. Each command runs for
    its length or until the episode's done flag, whichever comes first; the
    next command must start exactly where the previous one stopped.
    """
    T = len(actions)
    dones = np.asarray(dones, dtype=bool)
    if log_probs is None:
        log_probs = np.zeros(T)
    segments = []
    expected_start = 0
    for start, cmd in commands:
        if start != expected_start:
            kind = "gap" if start > expected_start else "overlap"
            raise ContractViolation(f"command {kind} at step {start}, expected {expected_start}")
        if start >= T:
            raise ContractViolation(f"command starts at step {start} after episode end ({T})")
        stop = T if cmd.length is None else min(T, start + cmd.length)
        hit = np.flatnonzero(dones[start:stop])
        if hit.size:
            stop = start + int(hit[0]) + 1
        segments.append(
            TrajectorySegment(
                observations=observations[start:stop],
                actions=actions[start:stop],
                channel_rewards=channel_rewards[start:stop],
                task_rewards=task_rewards[start:stop],
                dones=dones[start:stop],
                command=cmd,
                log_probs=log_probs[start:stop],
                next_obs=observations[stop] if stop < T else None,
            )
        )
        expected_start = stop
    if expected_start != T:
        raise ContractViolation(f"commands cover {expected_start} of {T} steps")
    return segments


def concat_segments(segments: Sequence[TrajectorySegment]) -> dict[str, np.ndarray]:
    return {
        "observations": np.concatenate([s.observations for s in segments]),
        "actions": np.concatenate([s.actions for s in segments]),
        "channel_rewards": np.concatenate([s.channel_rewards for s in segments]),
        "task_rewards": np.concatenate([s.task_rewards for s in segments]),
        "dones": np.concatenate([s.dones for s in segments]),
        "log_probs": np.concatenate([s.log_probs for s in segments]),
    }
