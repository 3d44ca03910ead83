"""Core value types shared across the simulator, plus dense index codecs
for discrete states and joint sensor actions."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple


class ModalityId(Enum):
    RGB = "rgb"
    THERMAL = "thermal"
    MMWAVE = "mmwave"
    DEPTH = "depth"


class RadarPreference(Enum):
    PREFER_RANGE = "range"
    PREFER_VELOCITY = "velocity"


@dataclass(frozen=True)
class Resolution:
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"resolution must be positive, got {self.width}x{self.height}")

    @property
    def pixels(self) -> int:
        return self.width * self.height

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


RGB_RESOLUTIONS = (Resolution(1280, 720), Resolution(960, 540), Resolution(640, 360))
THERMAL_RESOLUTIONS = (Resolution(160, 120), Resolution(320, 240))

RGB_MAX_PIXELS = max(r.pixels for r in RGB_RESOLUTIONS)
THERMAL_MAX_PIXELS = max(r.pixels for r in THERMAL_RESOLUTIONS)

# Hard synchronization bounds; the platform saturates at 27 of the nominal 30.
FPS_MIN = 1
FPS_MAX = 30
FPS_CAP = 27

DEFAULT_FPS_LADDER = (1, 5, 15, 27)


@dataclass(frozen=True)
class RadarParams:
    """Derived mmWave operating point: the four interdependent quantities."""

    range_resolution: float        # m
    max_unambiguous_range: float   # m
    max_radial_velocity: float     # m/s
    radial_velocity_resolution: float  # m/s

    def __post_init__(self):
        for name in ("range_resolution", "max_unambiguous_range",
                     "max_radial_velocity", "radial_velocity_resolution"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_unambiguous_range < self.range_resolution:
            raise ValueError("max_unambiguous_range < range_resolution")
        if self.max_radial_velocity < self.radial_velocity_resolution:
            raise ValueError("max_radial_velocity < radial_velocity_resolution")


@dataclass(frozen=True)
class SensorConfig:
    """One joint sensor configuration; doubles as the agent's action."""

    rgb_fps: int
    rgb_res: Resolution
    thermal_fps: int
    thermal_res: Resolution
    mmwave_fps: int
    mmwave_pref: RadarPreference

    def __post_init__(self):
        for name, fps in (("rgb_fps", self.rgb_fps),
                          ("thermal_fps", self.thermal_fps),
                          ("mmwave_fps", self.mmwave_fps)):
            if not FPS_MIN <= fps <= FPS_MAX:
                raise ValueError(f"{name}={fps} outside [{FPS_MIN}, {FPS_MAX}]")


@dataclass(frozen=True)
class ContributionVector:
    """Per-modality contribution shares; always normalized to sum 1."""

    rgb: float
    thermal: float
    mmwave: float
    depth: float

    def __post_init__(self):
        total = self.rgb + self.thermal + self.mmwave + self.depth
        for name, v in self.as_dict().items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"contribution {name}={v} outside [0, 1]")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"contributions sum to {total}, expected 1")

    def as_dict(self) -> dict[str, float]:
        return {"rgb": self.rgb, "thermal": self.thermal,
                "mmwave": self.mmwave, "depth": self.depth}

    @classmethod
    def from_utilities(cls, rgb: float, thermal: float, mmwave: float,
                       depth: float) -> "ContributionVector":
        """Normalize raw non-negative utilities into shares."""
        total = rgb + thermal + mmwave + depth
        if total <= 0:
            raise ValueError("utilities must have a positive sum")
        return cls(rgb / total, thermal / total, mmwave / total, depth / total)


@dataclass(frozen=True)
class DetectionSet:
    """Detection confidences for one tick, sorted descending."""

    confidences: tuple[float, ...] = ()

    def __post_init__(self):
        prev = 1.0
        for c in self.confidences:
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"confidence {c} outside [0, 1]")
            if c > prev:
                raise ValueError("confidences must be sorted descending")
            prev = c

    @property
    def count(self) -> int:
        return len(self.confidences)

    @classmethod
    def from_confidences(cls, values: Iterable[float]) -> "DetectionSet":
        return cls(tuple(sorted(values, reverse=True)))


class DiscreteState(NamedTuple):
    """Six ordinal factor bins, each in {0, 1, 2}."""

    illumination: int
    motion: int
    radar_density: int
    system_load: int
    sync_health: int
    detection_conf: int


STATE_FACTORS = 6
STATE_COUNT = 3 ** STATE_FACTORS  # 729


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0    # quality-delta gain
    beta: float = 0.02    # per watt
    gamma: float = 0.5    # per second of latency
    delta: float = 0.05   # switching penalty
    kappa: float = 0.2    # quality-delta clip bound

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")


def encode_state(s: DiscreteState) -> int:
    """Mixed-radix base-3 index with illumination as the most significant digit."""
    idx = 0
    for bin_value in s:
        if bin_value not in (0, 1, 2):
            raise ValueError(f"state bin {bin_value} outside {{0, 1, 2}}")
        idx = idx * 3 + bin_value
    return idx


def decode_state(index: int) -> DiscreteState:
    """Inverse of encode_state."""
    if not 0 <= index < STATE_COUNT:
        raise IndexError(f"state index {index} outside [0, {STATE_COUNT})")
    bins = []
    for _ in range(STATE_FACTORS):
        bins.append(index % 3)
        index //= 3
    return DiscreteState(*reversed(bins))


class UnknownActionError(KeyError):
    """Raised when a SensorConfig is not a member of the action ladder."""


@dataclass(frozen=True)
class ActionLadders:
    """The discrete menus the joint action space is built from."""

    fps: tuple[int, ...] = DEFAULT_FPS_LADDER
    rgb_resolutions: tuple[Resolution, ...] = RGB_RESOLUTIONS
    thermal_resolutions: tuple[Resolution, ...] = THERMAL_RESOLUTIONS

    def __post_init__(self):
        if not self.fps or not self.rgb_resolutions or not self.thermal_resolutions:
            raise ValueError("action ladders must be non-empty")
        for f in self.fps:
            if not FPS_MIN <= f <= FPS_MAX:
                raise ValueError(f"ladder fps {f} outside [{FPS_MIN}, {FPS_MAX}]")
        if tuple(sorted(self.fps)) != self.fps:
            raise ValueError("fps ladder must be sorted ascending")

    @property
    def num_actions(self) -> int:
        per_optical = len(self.fps)
        return (per_optical * len(self.rgb_resolutions)
                * per_optical * len(self.thermal_resolutions)
                * per_optical * len(RadarPreference))

    def content_hash(self) -> str:
        """Stable fingerprint used to guard persisted Q-tables."""
        payload = json.dumps({
            "fps": list(self.fps),
            "rgb": [[r.width, r.height] for r in self.rgb_resolutions],
            "thermal": [[r.width, r.height] for r in self.thermal_resolutions],
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


DEFAULT_LADDERS = ActionLadders()


_ACTION_CACHE: dict[ActionLadders, tuple[SensorConfig, ...]] = {}
_ACTION_INDEX_CACHE: dict[ActionLadders, dict[SensorConfig, int]] = {}


def enumerate_actions(ladders: ActionLadders = DEFAULT_LADDERS) -> tuple[SensorConfig, ...]:
    """Full Cartesian product of the ladders in a fixed order.

    rgb_fps varies slowest, then rgb_res, thermal_fps, thermal_res,
    mmwave_fps; mmwave_pref varies fastest. Defaults yield 768 actions.
    The tuple is cached per ladder set and shared; configs are immutable.
    """
    actions = _ACTION_CACHE.get(ladders)
    if actions is None:
        actions = tuple(
            SensorConfig(rf, rr, tf, tr, mf, mp)
            for rf, rr, tf, tr, mf, mp in itertools.product(
                ladders.fps, ladders.rgb_resolutions,
                ladders.fps, ladders.thermal_resolutions,
                ladders.fps, tuple(RadarPreference))
        )
        _ACTION_CACHE[ladders] = actions
    return actions


def _action_index(ladders: ActionLadders) -> dict[SensorConfig, int]:
    table = _ACTION_INDEX_CACHE.get(ladders)
    if table is None:
        table = {a: i for i, a in enumerate(enumerate_actions(ladders))}
        _ACTION_INDEX_CACHE[ladders] = table
    return table


def encode_action(action: SensorConfig, ladders: ActionLadders = DEFAULT_LADDERS) -> int:
    """Position of the action in enumerate_actions order."""
    try:
        return _action_index(ladders)[action]
    except KeyError:
        raise UnknownActionError(f"action {action} not in ladder enumeration") from None


def decode_action(index: int, ladders: ActionLadders = DEFAULT_LADDERS) -> SensorConfig:
    actions = enumerate_actions(ladders)
    if not 0 <= index < len(actions):
        raise IndexError(f"action index {index} outside [0, {len(actions)})")
    return actions[index]
