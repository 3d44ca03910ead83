"""Sliding-window smoothing of raw observations and binning into the
six-factor discrete state."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

from .domain import DetectionSet, DiscreteState
from .env import Observation

# Stale frames convert to a jitter-equivalent penalty on the sync score.
STALE_TO_JITTER_EQUIV = 0.1  # s per unit of stale-frame ratio


def conf_agg(detections: DetectionSet) -> float:
    """Mean of the top-min(3, N) confidences; 0 when there are none."""
    if detections.count == 0:
        return 0.0
    k = min(3, detections.count)
    return sum(detections.confidences[:k]) / k


def sync_score(timestamp_jitter: float, stale_frame_ratio: float) -> float:
    """Jitter-equivalent sync degradation; higher is worse."""
    return timestamp_jitter + STALE_TO_JITTER_EQUIV * stale_frame_ratio


class SmoothedFactors(NamedTuple):
    illumination: float
    motion: float
    radar_density: float
    system_load: float
    sync_score: float
    detection_conf: float


def raw_factors(obs: Observation) -> SmoothedFactors:
    """The six raw state factors of a single tick."""
    return SmoothedFactors(
        illumination=obs.illumination_estimate,
        motion=obs.platform_speed,
        radar_density=float(obs.radar_point_count),
        system_load=obs.gpu_load,
        sync_score=sync_score(obs.timestamp_jitter, obs.stale_frame_ratio),
        detection_conf=conf_agg(obs.detections),
    )


@dataclass(frozen=True)
class DiscretizerConfig:
    """Window length plus the (low, high) cut points per factor.

    Defaults were picked so the bundled scenarios move each factor through
    multiple bins; every value is overridable from the run config.
    """

    window_seconds: float = 0.5
    illumination_cuts: tuple[float, float] = (0.33, 0.66)
    motion_cuts: tuple[float, float] = (0.2, 1.0)        # m/s
    radar_density_cuts: tuple[float, float] = (20.0, 100.0)  # points
    load_cuts: tuple[float, float] = (0.4, 0.75)
    sync_cuts: tuple[float, float] = (0.02, 0.08)        # jitter-equivalent s
    conf_cuts: tuple[float, float] = (0.3, 0.6)          # (tau_low, tau_high)

    def __post_init__(self):
        if not 0.5 <= self.window_seconds <= 1.0:
            raise ValueError("window_seconds must lie in [0.5, 1.0]")
        for name in ("illumination_cuts", "motion_cuts", "radar_density_cuts",
                     "load_cuts", "sync_cuts", "conf_cuts"):
            low, high = getattr(self, name)
            if not low < high:
                raise ValueError(f"{name}: low cut must be < high cut")
        tau_low, tau_high = self.conf_cuts
        if not 0.0 <= tau_low < tau_high <= 1.0:
            raise ValueError("conf cuts must satisfy 0 <= tau_low < tau_high <= 1")


class WindowBuffer:
    """Ring of (time, factors) samples covering the trailing window.

    Single-owner mutable state: one buffer per control loop. Pushing a
    sample at a timestamp equal to the newest entry replaces it (duplicate
    collapse); pushing earlier than the newest entry is a clock error.
    """

    def __init__(self, window_seconds: float):
        if window_seconds <= 0:
            raise ValueError("window must be positive")
        self.window_seconds = window_seconds
        self._entries: deque[tuple[float, SmoothedFactors]] = deque()

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, obs: Observation, t: float) -> None:
        if self._entries:
            newest = self._entries[-1][0]
            if t < newest:
                raise ValueError(f"time went backwards: {t} after {newest}")
            if t == newest:
                self._entries.pop()
        self._entries.append((t, raw_factors(obs)))
        cutoff = t - self.window_seconds
        while self._entries and self._entries[0][0] < cutoff:
            self._entries.popleft()

    def smoothed(self) -> SmoothedFactors:
        """Arithmetic mean of each factor over the retained window."""
        if not self._entries:
            raise ValueError("no samples in window")
        n = len(self._entries)
        sums = [0.0] * 6
        for _, factors in self._entries:
            for i, v in enumerate(factors):
                sums[i] += v
        return SmoothedFactors(*(s / n for s in sums))


def push_and_smooth(buf: WindowBuffer, obs: Observation, t: float) -> SmoothedFactors:
    buf.push(obs, t)
    return buf.smoothed()


def bin_value(value: float, low_cut: float, high_cut: float) -> int:
    """Ordinal bin with closed-left boundaries: 0 below low, 2 at/above high."""
    if value < low_cut:
        return 0
    if value < high_cut:
        return 1
    return 2


def discretize_state(factors: SmoothedFactors, cfg: DiscretizerConfig) -> DiscreteState:
    """Bin the smoothed factors. The sync factor is a degradation score, so
    bin 2 reads as "poor" and 0 as "good"."""
    return DiscreteState(
        illumination=bin_value(factors.illumination, *cfg.illumination_cuts),
        motion=bin_value(factors.motion, *cfg.motion_cuts),
        radar_density=bin_value(factors.radar_density, *cfg.radar_density_cuts),
        system_load=bin_value(factors.system_load, *cfg.load_cuts),
        sync_health=bin_value(factors.sync_score, *cfg.sync_cuts),
        detection_conf=bin_value(factors.detection_conf, *cfg.conf_cuts),
    )
