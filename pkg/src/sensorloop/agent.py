"""Tabular Q-learning reconfiguration agent and the two baseline policies."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    ActionLadders,
    DEFAULT_LADDERS,
    DiscreteState,
    RadarPreference,
    Resolution,
    RewardWeights,
    SensorConfig,
    decode_action,
    encode_action,
    encode_state,
)


class QTable:
    """Dense state x action value table with per-entry visit counts."""

    def __init__(self, n_states: int, n_actions: int):
        if n_states <= 0 or n_actions <= 0:
            raise ValueError("table dimensions must be positive")
        self.values = np.zeros((n_states, n_actions), dtype=np.float64)
        self.visits = np.zeros((n_states, n_actions), dtype=np.int64)

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    @property
    def n_actions(self) -> int:
        return self.values.shape[1]

    def greedy_action(self, state_index: int, visited_only: bool = False) -> int:
        """First maximizer of the row (ties break to the lowest index).

        With visited_only, entries never updated are excluded: rewards here
        are cost-dominated (negative), so an untouched zero entry would
        otherwise outrank every action actually tried. Rows with no visits
        fall back to the plain argmax.
        """
        row = self.values[state_index]
        if visited_only:
            visited = self.visits[state_index] > 0
            if visited.any():
                masked = np.where(visited, row, -np.inf)
                return int(np.argmax(masked))
        return int(np.argmax(row))

    def greedy_vector(self) -> np.ndarray:
        return self.values.argmax(axis=1)

    def save(self, path: str | Path, ladders_hash: str) -> None:
        header = json.dumps({
            "state_count": self.n_states,
            "action_count": self.n_actions,
            "ladders_hash": ladders_hash,
        }, sort_keys=True)
        np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8),
                 values=self.values, visits=self.visits)

    @classmethod
    def load(cls, path: str | Path, expected_ladders_hash: str | None = None) -> "QTable":
        with np.load(path) as data:
            header = json.loads(bytes(data["header"]).decode())
            values = data["values"]
            visits = data["visits"]
        if expected_ladders_hash is not None and header["ladders_hash"] != expected_ladders_hash:
            raise ValueError(
                f"Q-table was trained with ladders {header['ladders_hash']}, "
                f"run config uses {expected_ladders_hash}")
        table = cls(header["state_count"], header["action_count"])
        table.values[:] = values
        table.visits[:] = visits
        return table


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 20_000

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ValueError("need 0 <= end <= start <= 1")
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")

    def value(self, step: int) -> float:
        frac = min(1.0, step / self.decay_steps)
        return self.start + (self.end - self.start) * frac


@dataclass(frozen=True)
class AgentConfig:
    learning_rate: float = 0.1
    discount: float = 0.9
    epsilon: EpsilonSchedule = field(default_factory=EpsilonSchedule)
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")


def reward(weights: RewardWeights, conf_agg_t: float, conf_agg_prev: float,
           power_w: float, latency_s: float,
           action: SensorConfig, prev_action: SensorConfig | None) -> float:
    """Quality delta (clipped at +-kappa) minus power, latency and switching
    costs. No switching penalty is charged when there is no previous action."""
    delta_quality = max(-weights.kappa, min(weights.kappa, conf_agg_t - conf_agg_prev))
    switched = prev_action is not None and action != prev_action
    return (weights.alpha * delta_quality
            - weights.beta * power_w
            - weights.gamma * latency_s
            - weights.delta * float(switched))


def select_action(q: QTable, state_index: int, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy over one Q-row; greedy ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q.n_actions))
    return q.greedy_action(state_index)


def q_update(q: QTable, state_index: int, action_index: int, r: float,
             next_state_index: int, learning_rate: float, discount: float) -> float:
    """One Watkins backup on a single entry; returns the new value."""
    best_next = float(np.max(q.values[next_state_index]))
    old = q.values[state_index, action_index]
    new = (1.0 - learning_rate) * old + learning_rate * (r + discount * best_next)
    q.values[state_index, action_index] = new
    q.visits[state_index, action_index] += 1
    return float(new)


# ---------------------------------------------------------------------------
# Policies. A policy maps DiscreteState -> SensorConfig; learning policies
# additionally consume transitions via update().
# ---------------------------------------------------------------------------


MAX_FIDELITY_CONFIG = SensorConfig(
    rgb_fps=27, rgb_res=Resolution(1280, 720),
    thermal_fps=27, thermal_res=Resolution(320, 240),
    mmwave_fps=27, mmwave_pref=RadarPreference.PREFER_RANGE,
)


def static_policy() -> SensorConfig:
    """The all-sensors-at-maximum baseline configuration."""
    return MAX_FIDELITY_CONFIG


class StaticPolicy:
    name = "static"

    def act(self, state: DiscreteState) -> SensorConfig:
        return static_policy()

    def update(self, state, action, r, next_state) -> None:
        pass


def _snap_fps(ladder: tuple[int, ...], target: int) -> int:
    return min(ladder, key=lambda f: (abs(f - target), f))


def _snap_res(menu: tuple[Resolution, ...], target: Resolution) -> Resolution:
    return min(menu, key=lambda r: (abs(r.pixels - target.pixels), r.pixels))


def _raise_fps(ladder: tuple[int, ...], fps: int) -> int:
    i = ladder.index(fps)
    return ladder[min(i + 1, len(ladder) - 1)]


def heuristic_policy(state: DiscreteState,
                     ladders: ActionLadders = DEFAULT_LADDERS) -> SensorConfig:
    """Fixed rule table mapping coarse conditions to configurations.

    Dark scenes push fidelity to thermal, bright ones to RGB; a high motion
    bin raises every frame rate one ladder step and prefers velocity
    resolution; a dense radar bin pins the radar at the top rate. Values are
    snapped to the nearest ladder entries.
    """
    if state.illumination == 0:
        rgb_fps, rgb_res = _snap_fps(ladders.fps, 5), _snap_res(ladders.rgb_resolutions, Resolution(640, 360))
        th_fps, th_res = _snap_fps(ladders.fps, 27), _snap_res(ladders.thermal_resolutions, Resolution(320, 240))
    elif state.illumination == 2:
        rgb_fps, rgb_res = _snap_fps(ladders.fps, 27), _snap_res(ladders.rgb_resolutions, Resolution(1280, 720))
        th_fps, th_res = _snap_fps(ladders.fps, 5), _snap_res(ladders.thermal_resolutions, Resolution(160, 120))
    else:
        rgb_fps, rgb_res = _snap_fps(ladders.fps, 15), _snap_res(ladders.rgb_resolutions, Resolution(960, 540))
        th_fps, th_res = _snap_fps(ladders.fps, 15), _snap_res(ladders.thermal_resolutions, Resolution(320, 240))
    mm_fps = _snap_fps(ladders.fps, 15)
    pref = RadarPreference.PREFER_RANGE

    if state.motion == 2:
        rgb_fps = _raise_fps(ladders.fps, rgb_fps)
        th_fps = _raise_fps(ladders.fps, th_fps)
        mm_fps = _raise_fps(ladders.fps, mm_fps)
        pref = RadarPreference.PREFER_VELOCITY
    if state.radar_density == 2:
        mm_fps = _snap_fps(ladders.fps, 27)

    return SensorConfig(rgb_fps, rgb_res, th_fps, th_res, mm_fps, pref)


class HeuristicPolicy:
    name = "heuristic"

    def __init__(self, ladders: ActionLadders = DEFAULT_LADDERS):
        self.ladders = ladders

    def act(self, state: DiscreteState) -> SensorConfig:
        return heuristic_policy(state, self.ladders)

    def update(self, state, action, r, next_state) -> None:
        pass


class QLearningPolicy:
    """Wraps a QTable as a control policy.

    With learn=True, act() follows the epsilon schedule (one global step per
    decision) and update() applies Watkins backups; with learn=False the
    policy is frozen and purely greedy.
    """

    def __init__(self, qtable: QTable, config: AgentConfig,
                 ladders: ActionLadders = DEFAULT_LADDERS, learn: bool = False):
        if qtable.n_actions != ladders.num_actions:
            raise ValueError("Q-table action count does not match the ladders")
        self.qtable = qtable
        self.config = config
        self.ladders = ladders
        self.learn = learn
        self.steps = 0
        self.rng = np.random.default_rng(config.rng_seed)
        self.name = "adaptive"

    def act(self, state: DiscreteState) -> SensorConfig:
        if self.learn:
            eps = self.config.epsilon.value(self.steps)
            self.steps += 1
            idx = select_action(self.qtable, encode_state(state), eps, self.rng)
        else:
            # Frozen policy: greedy over entries with actual evidence.
            idx = self.qtable.greedy_action(encode_state(state), visited_only=True)
        return decode_action(idx, self.ladders)

    def update(self, state: DiscreteState, action: SensorConfig, r: float,
               next_state: DiscreteState) -> None:
        if not self.learn:
            return
        q_update(self.qtable, encode_state(state), encode_action(action, self.ladders),
                 r, encode_state(next_state),
                 self.config.learning_rate, self.config.discount)
