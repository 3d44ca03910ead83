"""Deterministic scenario-driven environment.

Each tick composes: scripted scene lookup -> contribution scores ->
detection confidences -> power/latency/GPU-load -> synchronization metrics,
and returns one Observation. With noise disabled (the default) a trace is a
pure function of (scenario, action sequence).
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .domain import (
    ContributionVector,
    DetectionSet,
    ModalityId,
    RadarPreference,
    RGB_MAX_PIXELS,
    SensorConfig,
    THERMAL_MAX_PIXELS,
)


class EpisodeFinished(Exception):
    """Signals that the scenario timeline has been exhausted."""


@dataclass(frozen=True)
class SceneCondition:
    """Ground-truth scene attributes for one scripted phase.

    Fractional fields are clamped into [0, 1] on construction; speeds are
    clamped at 0.
    """

    illumination: float = 0.9
    target_speed: float = 0.0
    occlusion: float = 0.0
    fog_density: float = 0.0
    target_present: bool = True
    radar_reflectivity: float = 0.5

    def __post_init__(self):
        for name in ("illumination", "occlusion", "fog_density", "radar_reflectivity"):
            v = getattr(self, name)
            object.__setattr__(self, name, min(1.0, max(0.0, v)))
        object.__setattr__(self, "target_speed", max(0.0, self.target_speed))


@dataclass(frozen=True)
class Scenario:
    name: str
    tick_rate: float
    phases: tuple[tuple[float, SceneCondition], ...]
    seed: int = 0

    def __post_init__(self):
        if not self.phases:
            raise ValueError("scenario needs at least one phase")
        if self.tick_rate <= 0:
            raise ValueError("tick_rate must be positive")
        for duration, _ in self.phases:
            if duration <= 0:
                raise ValueError("phase durations must be positive")

    @property
    def total_duration(self) -> float:
        return sum(d for d, _ in self.phases)

    @property
    def num_ticks(self) -> int:
        return math.ceil(self.total_duration * self.tick_rate)


def scene_at(scenario: Scenario, t: float) -> SceneCondition:
    """Piecewise-constant phase lookup; intervals are half-open [start, end)."""
    if t < 0 or t >= scenario.total_duration:
        raise EpisodeFinished(f"t={t} outside scenario of {scenario.total_duration}s")
    starts = []
    acc = 0.0
    for duration, _ in scenario.phases:
        starts.append(acc)
        acc += duration
    i = bisect_right(starts, t) - 1
    return scenario.phases[i][1]


@dataclass(frozen=True)
class Observation:
    """One synchronized environment tick."""

    time: float
    contributions: ContributionVector
    detections: DetectionSet
    power: float              # W
    latency: float            # s
    gpu_load: float           # fraction of capacity, clamped to [0, 1]
    timestamp_jitter: float   # s
    stale_frame_ratio: float  # fraction
    radar_point_count: int
    platform_speed: float     # m/s, sensed motion proxy
    illumination_estimate: float


# ---------------------------------------------------------------------------
# Contribution model
#
# A transparent parametric surrogate for the learned per-modality scores.
# Raw scene utilities are scaled by config fidelity and normalized to sum 1.
# The constants below were calibrated once against the published night /
# clear-day score ranges and then frozen; see tests for the exact anchors.
# ---------------------------------------------------------------------------

THERMAL_BASE_UTILITY = 0.22   # thermal floor in bright scenes
DEPTH_UTILITY = 0.005         # depth is a small constant side channel
MMWAVE_BASE = 0.03
MMWAVE_FOG_GAIN = 0.35
MMWAVE_MOTION_GAIN = 0.25

STALENESS_COEFF = 2.0         # motion-staleness strength (s/m scale)

DEPTH_FIXED_FPS = 30          # depth runs outside the action space
DEPTH_PIXELS = 640 * 480

# Radar compute/pixel equivalents per preference; velocity mode processes
# more chirps per frame, hence the 1.25x footprint.
MMWAVE_PIXEL_EQUIV = {
    RadarPreference.PREFER_RANGE: 16384,
    RadarPreference.PREFER_VELOCITY: 20480,
}


def raw_utilities(scene: SceneCondition) -> tuple[float, float, float, float]:
    """Scene-only modality utilities (rgb, thermal, mmwave, depth), unnormalized."""
    u_rgb = scene.illumination * (1.0 - scene.occlusion) * (1.0 - 0.6 * scene.fog_density)
    u_thermal = ((THERMAL_BASE_UTILITY + (1.0 - THERMAL_BASE_UTILITY) * (1.0 - scene.illumination))
                 * (1.0 - 0.5 * scene.occlusion) * (1.0 - 0.3 * scene.fog_density))
    u_mmwave = scene.radar_reflectivity * (
        MMWAVE_BASE + MMWAVE_FOG_GAIN * scene.fog_density
        + MMWAVE_MOTION_GAIN * min(scene.target_speed, 1.0))
    return u_rgb, u_thermal, u_mmwave, DEPTH_UTILITY


def _resolution_factor(pixels: int, max_pixels: int) -> float:
    # Linear in pixel fraction, floored: even the coarsest setting retains
    # half the detection fidelity.
    return max(0.5, pixels / max_pixels)


def _staleness_factor(target_speed: float, fps: float, pref_boost: bool = False) -> float:
    coeff = STALENESS_COEFF / 2.0 if pref_boost else STALENESS_COEFF
    return 1.0 / (1.0 + target_speed * coeff / fps)


def config_fidelity(scene: SceneCondition, cfg: SensorConfig) -> dict[ModalityId, float]:
    """Resolution x staleness fidelity per modality (no scene attenuation).

    Velocity-preferring radar halves the staleness coefficient: it tracks
    moving targets better at the same frame rate, at a higher compute cost.
    """
    return {
        ModalityId.RGB: _resolution_factor(cfg.rgb_res.pixels, RGB_MAX_PIXELS)
        * _staleness_factor(scene.target_speed, cfg.rgb_fps),
        ModalityId.THERMAL: _resolution_factor(cfg.thermal_res.pixels, THERMAL_MAX_PIXELS)
        * _staleness_factor(scene.target_speed, cfg.thermal_fps),
        ModalityId.MMWAVE: _staleness_factor(
            scene.target_speed, cfg.mmwave_fps,
            pref_boost=cfg.mmwave_pref is RadarPreference.PREFER_VELOCITY),
        ModalityId.DEPTH: _staleness_factor(scene.target_speed, DEPTH_FIXED_FPS),
    }


def contribution_scores(scene: SceneCondition, cfg: SensorConfig) -> ContributionVector:
    """Scene utilities scaled by config fidelity, normalized to shares."""
    u_rgb, u_th, u_mm, u_d = raw_utilities(scene)
    fid = config_fidelity(scene, cfg)
    return ContributionVector.from_utilities(
        u_rgb * fid[ModalityId.RGB],
        u_th * fid[ModalityId.THERMAL],
        u_mm * fid[ModalityId.MMWAVE],
        u_d * fid[ModalityId.DEPTH],
    )


def _scene_attenuation(scene: SceneCondition) -> dict[ModalityId, float]:
    # Absolute signal degradation per modality. Optical channels suffer from
    # occlusion and fog; RGB additionally from darkness. Radar is immune to
    # optics but depends mildly on reflectivity.
    return {
        ModalityId.RGB: (0.25 + 0.75 * scene.illumination)
        * (1.0 - 0.8 * scene.occlusion) * (1.0 - 0.5 * scene.fog_density),
        ModalityId.THERMAL: (1.0 - 0.4 * scene.occlusion) * (1.0 - 0.2 * scene.fog_density),
        ModalityId.MMWAVE: 0.7 + 0.3 * scene.radar_reflectivity,
        ModalityId.DEPTH: (0.8 + 0.2 * scene.illumination)
        * (1.0 - 0.8 * scene.occlusion) * (1.0 - 0.4 * scene.fog_density),
    }


# Secondary detections trail the top one at fixed ratios.
_SECONDARY_RATIOS = (1.0, 0.85, 0.7)


def detection_confidences(scene: SceneCondition, cfg: SensorConfig,
                          contrib: ContributionVector,
                          rng: np.random.Generator | None = None,
                          noise_scale: float = 0.0) -> DetectionSet:
    """Accuracy proxy: contribution-weighted fidelity folded into confidences.

    Empty when no target is present. Otherwise the top confidence is
    clamp(sum_m contrib_m * fidelity_m, 0, 1) with fidelity combining
    resolution, motion staleness and scene attenuation; 1-3 detections are
    emitted depending on signal strength.
    """
    if not scene.target_present:
        return DetectionSet()
    fid = config_fidelity(scene, cfg)
    atten = _scene_attenuation(scene)
    shares = {
        ModalityId.RGB: contrib.rgb,
        ModalityId.THERMAL: contrib.thermal,
        ModalityId.MMWAVE: contrib.mmwave,
        ModalityId.DEPTH: contrib.depth,
    }
    top = sum(shares[m] * fid[m] * atten[m] for m in ModalityId)
    if noise_scale > 0.0 and rng is not None:
        top += float(rng.normal(0.0, 0.05 * noise_scale))
    top = min(1.0, max(0.0, top))
    if top >= 0.5:
        n = 3
    elif top >= 0.2:
        n = 2
    else:
        n = 1
    return DetectionSet(tuple(top * r for r in _SECONDARY_RATIOS[:n]))


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModalityCost:
    idle_power: float                 # W drawn when the sensor is on at all
    active_power_per_mp_hz: float     # W per (megapixel * Hz) streamed
    compute_load_per_mp_hz: float     # load-units per (megapixel * Hz)

    def __post_init__(self):
        if min(self.idle_power, self.active_power_per_mp_hz,
               self.compute_load_per_mp_hz) < 0:
            raise ValueError("cost coefficients must be >= 0")


@dataclass(frozen=True)
class CostModel:
    """Linear power/compute/latency proxy for the edge platform.

    Capacity is calibrated so the all-max configuration saturates the GPU
    (load 1.0), mirroring a platform that runs at full load at the 27 fps
    cap.
    """

    rgb: ModalityCost = ModalityCost(0.5, 0.03, 1.0)
    thermal: ModalityCost = ModalityCost(0.4, 0.18, 1.0)
    mmwave: ModalityCost = ModalityCost(0.6, 1.0, 2.0)
    depth: ModalityCost = ModalityCost(0.7, 0.05, 1.0)
    capacity: float = 37.0            # load-units
    base_latency: float = 0.02        # s
    latency_per_load_unit: float = 0.04  # s per unit of raw (unclamped) load

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if self.base_latency < 0 or self.latency_per_load_unit < 0:
            raise ValueError("latency coefficients must be >= 0")


DEFAULT_COST_MODEL = CostModel()


def _stream_mp_hz(cfg: SensorConfig) -> dict[ModalityId, float]:
    mm_pixels = MMWAVE_PIXEL_EQUIV[cfg.mmwave_pref]
    return {
        ModalityId.RGB: cfg.rgb_res.pixels * cfg.rgb_fps / 1e6,
        ModalityId.THERMAL: cfg.thermal_res.pixels * cfg.thermal_fps / 1e6,
        ModalityId.MMWAVE: mm_pixels * cfg.mmwave_fps / 1e6,
        ModalityId.DEPTH: DEPTH_PIXELS * DEPTH_FIXED_FPS / 1e6,
    }


def compute_cost(cfg: SensorConfig, model: CostModel = DEFAULT_COST_MODEL
                 ) -> tuple[float, float, float]:
    """(power W, latency s, gpu_load fraction); monotone in fps and pixels."""
    rates = _stream_mp_hz(cfg)
    per_modality = {
        ModalityId.RGB: model.rgb,
        ModalityId.THERMAL: model.thermal,
        ModalityId.MMWAVE: model.mmwave,
        ModalityId.DEPTH: model.depth,
    }
    power = sum(per_modality[m].idle_power + per_modality[m].active_power_per_mp_hz * rates[m]
                for m in ModalityId)
    raw_load = sum(per_modality[m].compute_load_per_mp_hz * rates[m]
                   for m in ModalityId) / model.capacity
    latency = model.base_latency + model.latency_per_load_unit * raw_load
    return power, latency, min(1.0, raw_load)


SYNC_LOAD_KNEE = 0.7
JITTER_MAX = 0.05        # s at full load
STALE_RATIO_MAX = 0.5    # at full load


def sync_metrics(gpu_load: float) -> tuple[float, float]:
    """(timestamp_jitter s, stale_frame_ratio); zero below the load knee,
    linear above it, hitting the configured maxima exactly at load 1.0."""
    if gpu_load <= SYNC_LOAD_KNEE:
        return 0.0, 0.0
    ramp = (gpu_load - SYNC_LOAD_KNEE) / (1.0 - SYNC_LOAD_KNEE)
    return JITTER_MAX * ramp, STALE_RATIO_MAX * ramp


def radar_point_count(scene: SceneCondition) -> int:
    """Deterministic per-frame point count from reflectivity and motion."""
    points = scene.radar_reflectivity * (
        10.0 + (60.0 + 180.0 * min(scene.target_speed, 1.0)) * scene.target_present)
    return round(points)


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


class SensorEnvironment:
    """Owns the scenario clock and produces one Observation per step.

    Single-threaded: holds a mutable tick counter and noise stream. Distinct
    instances are independent. Optional per-modality reconfiguration delays
    (in ticks) model hardware switching latency; zero by default.
    """

    def __init__(self, scenario: Scenario, cost_model: CostModel = DEFAULT_COST_MODEL,
                 noise_scale: float = 0.0,
                 reconfig_delay_ticks: dict[ModalityId, int] | int = 0):
        self.scenario = scenario
        self.cost_model = cost_model
        self.noise_scale = noise_scale
        if isinstance(reconfig_delay_ticks, int):
            reconfig_delay_ticks = {m: reconfig_delay_ticks for m in ModalityId}
        self.reconfig_delay = {m: reconfig_delay_ticks.get(m, 0) for m in ModalityId}
        self._phase_starts: list[float] = []
        acc = 0.0
        for duration, _ in scenario.phases:
            self._phase_starts.append(acc)
            acc += duration
        self.reset()

    @property
    def num_ticks(self) -> int:
        return self.scenario.num_ticks

    @property
    def finished(self) -> bool:
        return self._tick >= self.num_ticks

    def reset(self) -> None:
        self._tick = 0
        self._rng = np.random.default_rng(self.scenario.seed)
        self._active: SensorConfig | None = None
        self._pending: list[tuple[int, ModalityId, SensorConfig]] = []
        # The cache maps (phase index, active config) to tick-invariant
        # observation fields; it survives resets because noise-free values
        # depend on nothing else.
        if not hasattr(self, "_cache"):
            self._cache: dict[tuple[int, SensorConfig], tuple] = {}
        self._last_key: tuple[int, SensorConfig] | None = None
        self._last_cached: tuple | None = None

    def _phase_index(self, t: float) -> int:
        return bisect_right(self._phase_starts, t) - 1

    def _apply_command(self, cfg: SensorConfig) -> SensorConfig:
        if self._active is None or all(d == 0 for d in self.reconfig_delay.values()):
            self._active = cfg
            return cfg
        # Stagger per-modality switchovers by their configured delays.
        for m, delay in self.reconfig_delay.items():
            due = self._tick + delay
            self._pending = [p for p in self._pending if p[1] is not m]
            self._pending.append((due, m, cfg))
        ready = [p for p in self._pending if p[0] <= self._tick]
        self._pending = [p for p in self._pending if p[0] > self._tick]
        active = self._active
        for _, m, target in ready:
            if m is ModalityId.RGB:
                active = replace(active, rgb_fps=target.rgb_fps, rgb_res=target.rgb_res)
            elif m is ModalityId.THERMAL:
                active = replace(active, thermal_fps=target.thermal_fps,
                                 thermal_res=target.thermal_res)
            elif m is ModalityId.MMWAVE:
                active = replace(active, mmwave_fps=target.mmwave_fps,
                                 mmwave_pref=target.mmwave_pref)
        self._active = active
        return active

    def step(self, cfg: SensorConfig) -> Observation:
        """Advance one tick under the commanded configuration."""
        if self.finished:
            raise EpisodeFinished(f"scenario '{self.scenario.name}' already ended")
        t = self._tick / self.scenario.tick_rate
        phase = self._phase_index(t)
        scene = self.scenario.phases[phase][1]
        active = self._apply_command(cfg)

        key = (phase, active)
        if self.noise_scale == 0.0:
            cached = self._last_cached if key == self._last_key else self._cache.get(key)
        else:
            cached = None
        if cached is None:
            contrib = contribution_scores(scene, active)
            detections = detection_confidences(scene, active, contrib,
                                               rng=self._rng, noise_scale=self.noise_scale)
            power, latency, gpu_load = compute_cost(active, self.cost_model)
            jitter, stale = sync_metrics(gpu_load)
            points = radar_point_count(scene)
            illum = scene.illumination
            if self.noise_scale > 0.0:
                illum = min(1.0, max(0.0, illum + float(
                    self._rng.normal(0.0, 0.02 * self.noise_scale))))
            cached = (contrib, detections, power, latency, gpu_load,
                      jitter, stale, points, scene.target_speed, illum)
            if self.noise_scale == 0.0:
                self._cache[key] = cached
        self._last_key = key
        self._last_cached = cached

        self._tick += 1
        (contrib, detections, power, latency, gpu_load,
         jitter, stale, points, speed, illum) = cached
        return Observation(
            time=t, contributions=contrib, detections=detections,
            power=power, latency=latency, gpu_load=gpu_load,
            timestamp_jitter=jitter, stale_frame_ratio=stale,
            radar_point_count=points, platform_speed=speed,
            illumination_estimate=illum,
        )


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

_PHASE_KEYS = ("duration_s", "illumination", "target_speed", "occlusion",
               "fog", "target_present", "radar_reflectivity")


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        phases = tuple(
            (float(p["duration_s"]), SceneCondition(
                illumination=float(p["illumination"]),
                target_speed=float(p["target_speed"]),
                occlusion=float(p["occlusion"]),
                fog_density=float(p["fog"]),
                target_present=bool(p["target_present"]),
                radar_reflectivity=float(p["radar_reflectivity"]),
            ))
            for p in doc["phases"]
        )
        return Scenario(name=str(doc["name"]), tick_rate=float(doc["tick_rate"]),
                        phases=phases, seed=int(doc["seed"]))
    except KeyError as exc:
        raise ValueError(f"scenario document missing field {exc}") from None


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "name": scenario.name,
        "tick_rate": scenario.tick_rate,
        "seed": scenario.seed,
        "phases": [
            {
                "duration_s": d,
                "illumination": c.illumination,
                "target_speed": c.target_speed,
                "occlusion": c.occlusion,
                "fog": c.fog_density,
                "target_present": c.target_present,
                "radar_reflectivity": c.radar_reflectivity,
            }
            for d, c in scenario.phases
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid scenario file {path}: line {exc.lineno}: {exc.msg}") from None
    return scenario_from_dict(doc)


def bundled_scenario_names() -> list[str]:
    files = resources.files("sensorloop").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def bundled_scenario(name: str) -> Scenario:
    ref = resources.files("sensorloop").joinpath(f"scenarios/{name}.json")
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled scenario named '{name}'")
    return scenario_from_dict(json.loads(ref.read_text()))
