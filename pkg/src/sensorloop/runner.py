"""Experiment orchestration: the closed perception->control loop, training
and evaluation sweeps, metrics, and trace persistence.

Control decisions happen once per smoothing window (not per tick), so the
discretized state always summarizes one full window of the configuration it
scores. Everything is seeded; identical configs reproduce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import (
    AgentConfig,
    EpsilonSchedule,
    HeuristicPolicy,
    QLearningPolicy,
    QTable,
    StaticPolicy,
    reward,
)
from .discretize import DiscretizerConfig, WindowBuffer, conf_agg, discretize_state
from .domain import (
    ActionLadders,
    DiscreteState,
    RadarPreference,
    Resolution,
    RewardWeights,
    STATE_COUNT,
    SensorConfig,
    UnknownActionError,
    encode_action,
    encode_state,
)
from .env import (
    CostModel,
    DEFAULT_COST_MODEL,
    ModalityCost,
    Scenario,
    SensorEnvironment,
    bundled_scenario,
    bundled_scenario_names,
    load_scenario,
)

# The state handed to a policy before any window has been observed.
BOOTSTRAP_STATE = DiscreteState(1, 1, 1, 1, 1, 1)

TRACE_COLUMNS = (
    "time", "state_index", "action_index", "reward", "cumulative_reward",
    "conf_agg", "power_w", "latency_s", "gpu_load", "jitter_s", "stale_ratio",
    "radar_points", "illumination", "platform_speed",
    "contrib_rgb", "contrib_thermal", "contrib_mmwave", "contrib_depth",
)


def config_to_fields(cfg: SensorConfig) -> dict:
    return {
        "rgb_fps": cfg.rgb_fps, "rgb_res": str(cfg.rgb_res),
        "thermal_fps": cfg.thermal_fps, "thermal_res": str(cfg.thermal_res),
        "mmwave_fps": cfg.mmwave_fps, "mmwave_pref": cfg.mmwave_pref.value,
    }


def config_from_fields(doc: dict) -> SensorConfig:
    def res(text: str) -> Resolution:
        w, h = text.split("x")
        return Resolution(int(w), int(h))

    return SensorConfig(
        rgb_fps=int(doc["rgb_fps"]), rgb_res=res(doc["rgb_res"]),
        thermal_fps=int(doc["thermal_fps"]), thermal_res=res(doc["thermal_res"]),
        mmwave_fps=int(doc["mmwave_fps"]),
        mmwave_pref=RadarPreference(doc["mmwave_pref"]),
    )


@dataclass
class EpisodeTrace:
    scenario_name: str
    seed: int
    policy_name: str
    ladders_hash: str
    final_action: SensorConfig
    cumulative_reward: float
    switch_count: int
    decision_count: int
    rows: tuple[tuple, ...] = ()

    @property
    def num_ticks(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        i = TRACE_COLUMNS.index(name)
        return [row[i] for row in self.rows]


def run_episode(scenario: Scenario, policy, *,
                ladders: ActionLadders = ActionLadders(),
                discretizer: DiscretizerConfig | None = None,
                cost_model: CostModel = DEFAULT_COST_MODEL,
                reward_weights: RewardWeights | None = None,
                noise_scale: float = 0.0,
                record: bool = True,
                env: SensorEnvironment | None = None) -> EpisodeTrace:
    """Run one scenario under a policy, optionally learning through it.

    Per tick: environment step and window push. At each window boundary:
    discretize, score the window just finished (reward for its action),
    feed the transition to the policy, then let the policy pick the next
    configuration. Passing a pre-built environment reuses its observation
    cache across episodes; it is reset first.
    """
    disc = discretizer or DiscretizerConfig()
    weights = reward_weights or RewardWeights()
    if env is None:
        env = SensorEnvironment(scenario, cost_model=cost_model, noise_scale=noise_scale)
    else:
        env.reset()
    buf = WindowBuffer(disc.window_seconds)
    interval = max(1, round(disc.window_seconds * scenario.tick_rate))
    n_ticks = env.num_ticks

    cur_cfg = policy.act(BOOTSTRAP_STATE)
    prev_cfg: SensorConfig | None = None
    prev_state = BOOTSTRAP_STATE
    prev_conf: float | None = None
    cur_state = BOOTSTRAP_STATE

    cumulative = 0.0
    switches = 0
    decisions = 0
    rows: list[tuple] = []

    def action_index(cfg: SensorConfig) -> int:
        try:
            return encode_action(cfg, ladders)
        except UnknownActionError:
            return -1

    cur_action_idx = action_index(cur_cfg)

    for tick in range(n_ticks):
        obs = env.step(cur_cfg)
        buf.push(obs, obs.time)
        tick_reward = 0.0

        if (tick + 1) % interval == 0:
            factors = buf.smoothed()
            state = discretize_state(factors, disc)
            conf_now = factors.detection_conf
            r = reward(weights, conf_now, prev_conf if prev_conf is not None else conf_now,
                       obs.power, obs.latency, cur_cfg, prev_cfg)
            policy.update(prev_state, cur_cfg, r, state)
            tick_reward = r
            cumulative += r
            decisions += 1
            prev_conf = conf_now
            prev_state = state
            cur_state = state
            if tick + 1 < n_ticks:
                nxt = policy.act(state)
                if nxt != cur_cfg:
                    switches += 1
                prev_cfg = cur_cfg
                cur_cfg = nxt
                cur_action_idx = action_index(nxt)

        if record:
            c = obs.contributions
            rows.append((
                obs.time, encode_state(cur_state), cur_action_idx, tick_reward,
                cumulative, conf_agg(obs.detections), obs.power, obs.latency,
                obs.gpu_load, obs.timestamp_jitter, obs.stale_frame_ratio,
                obs.radar_point_count, obs.illumination_estimate,
                obs.platform_speed, c.rgb, c.thermal, c.mmwave, c.depth,
            ))

    return EpisodeTrace(
        scenario_name=scenario.name, seed=scenario.seed,
        policy_name=getattr(policy, "name", "policy"),
        ladders_hash=ladders.content_hash(), final_action=cur_cfg,
        cumulative_reward=cumulative, switch_count=switches,
        decision_count=decisions, rows=tuple(rows),
    )


@dataclass
class TrainResult:
    qtable: QTable
    learning_curve: list[float]
    episodes_run: int
    steps: int


def train(scenarios: list[Scenario], agent_cfg: AgentConfig, episodes: int, *,
          ladders: ActionLadders = ActionLadders(),
          discretizer: DiscretizerConfig | None = None,
          cost_model: CostModel = DEFAULT_COST_MODEL,
          max_steps: int | None = None,
          convergence_patience: int = 5,
          noise_scale: float = 0.0) -> TrainResult:
    """Round-robin Q-learning over the scenarios.

    Stops early when the greedy policy is unchanged for convergence_patience
    consecutive episodes, or when max_steps Q-updates have been applied.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    qtable = QTable(STATE_COUNT, ladders.num_actions)
    policy = QLearningPolicy(qtable, agent_cfg, ladders, learn=True)
    curve: list[float] = []
    prev_greedy: np.ndarray | None = None
    stable = 0
    steps = 0
    episodes_run = 0
    envs = [SensorEnvironment(s, cost_model=cost_model, noise_scale=noise_scale)
            for s in scenarios]

    for ep in range(episodes):
        scenario = scenarios[ep % len(scenarios)]
        trace = run_episode(
            scenario, policy, ladders=ladders, discretizer=discretizer,
            cost_model=cost_model, reward_weights=agent_cfg.reward_weights,
            noise_scale=noise_scale, record=False, env=envs[ep % len(scenarios)])
        steps += trace.decision_count
        curve.append(trace.cumulative_reward)
        episodes_run += 1

        greedy = qtable.greedy_vector()
        if prev_greedy is not None and np.array_equal(greedy, prev_greedy):
            stable += 1
        else:
            stable = 0
        prev_greedy = greedy
        if stable >= convergence_patience:
            break
        if max_steps is not None and steps >= max_steps:
            break

    return TrainResult(qtable=qtable, learning_curve=curve,
                       episodes_run=episodes_run, steps=steps)


@dataclass(frozen=True)
class ScenarioMetrics:
    mean_gpu_load: float
    mean_power: float
    mean_conf_agg: float
    switch_count: int


@dataclass
class MetricsReport:
    baseline: str
    per_scenario: dict[str, dict[str, ScenarioMetrics]]  # policy -> scenario -> metrics
    aggregate: dict[str, ScenarioMetrics]                # policy -> mean across scenarios
    deltas: dict[str, dict[str, float]]                  # policy -> {load_reduction_pct, accuracy_delta_pct}
    stabilized_actions: dict[str, dict[str, SensorConfig]]

    def to_json_dict(self) -> dict:
        def metrics_dict(m: ScenarioMetrics) -> dict:
            return {"mean_gpu_load": m.mean_gpu_load, "mean_power_w": m.mean_power,
                    "mean_conf_agg": m.mean_conf_agg, "switch_count": m.switch_count}

        return {
            "baseline": self.baseline,
            "per_scenario": {
                pol: {scen: metrics_dict(m) for scen, m in cells.items()}
                for pol, cells in self.per_scenario.items()
            },
            "aggregate": {pol: metrics_dict(m) for pol, m in self.aggregate.items()},
            "deltas_vs_baseline": self.deltas,
            "stabilized_actions": {
                pol: {scen: config_to_fields(cfg) for scen, cfg in cells.items()}
                for pol, cells in self.stabilized_actions.items()
            },
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["policy", "scenario", "mean_gpu_load", "mean_power_w",
                         "mean_conf_agg", "switch_count"])
        for pol in sorted(self.per_scenario):
            for scen in sorted(self.per_scenario[pol]):
                m = self.per_scenario[pol][scen]
                writer.writerow([pol, scen, repr(m.mean_gpu_load), repr(m.mean_power),
                                 repr(m.mean_conf_agg), m.switch_count])
            agg = self.aggregate[pol]
            writer.writerow([pol, "all(mean)", repr(agg.mean_gpu_load), repr(agg.mean_power),
                             repr(agg.mean_conf_agg), agg.switch_count])
        return out.getvalue()


def _trace_metrics(trace: EpisodeTrace) -> ScenarioMetrics:
    return ScenarioMetrics(
        mean_gpu_load=float(np.mean(trace.column("gpu_load"))),
        mean_power=float(np.mean(trace.column("power_w"))),
        mean_conf_agg=float(np.mean(trace.column("conf_agg"))),
        switch_count=trace.switch_count,
    )


def evaluate(policies: dict[str, object], scenarios: list[Scenario], *,
             baseline: str = "heuristic",
             ladders: ActionLadders = ActionLadders(),
             discretizer: DiscretizerConfig | None = None,
             cost_model: CostModel = DEFAULT_COST_MODEL,
             reward_weights: RewardWeights | None = None,
             keep_traces: bool = False
             ) -> MetricsReport | tuple[MetricsReport, dict]:
    """Noise-free, greedy evaluation of frozen policies over the scenarios.

    Headline deltas compare each policy's aggregate against the baseline:
    positive load_reduction_pct means the candidate is cheaper; positive
    accuracy_delta_pct means it is less accurate.
    """
    if baseline not in policies:
        raise ValueError(f"baseline '{baseline}' not among policies {sorted(policies)}")
    per_scenario: dict[str, dict[str, ScenarioMetrics]] = {}
    stabilized: dict[str, dict[str, SensorConfig]] = {}
    traces: dict[tuple[str, str], EpisodeTrace] = {}

    for name, policy in policies.items():
        per_scenario[name] = {}
        stabilized[name] = {}
        for scenario in scenarios:
            trace = run_episode(
                scenario, policy, ladders=ladders, discretizer=discretizer,
                cost_model=cost_model, reward_weights=reward_weights,
                noise_scale=0.0, record=True)
            per_scenario[name][scenario.name] = _trace_metrics(trace)
            stabilized[name][scenario.name] = trace.final_action
            if keep_traces:
                traces[(name, scenario.name)] = trace

    aggregate = {
        name: ScenarioMetrics(
            mean_gpu_load=float(np.mean([m.mean_gpu_load for m in cells.values()])),
            mean_power=float(np.mean([m.mean_power for m in cells.values()])),
            mean_conf_agg=float(np.mean([m.mean_conf_agg for m in cells.values()])),
            switch_count=int(sum(m.switch_count for m in cells.values())),
        )
        for name, cells in per_scenario.items()
    }

    base = aggregate[baseline]
    deltas = {}
    for name, agg in aggregate.items():
        if name == baseline:
            continue
        deltas[name] = {
            "load_reduction_pct": 100.0 * (base.mean_gpu_load - agg.mean_gpu_load)
            / base.mean_gpu_load,
            "accuracy_delta_pct": 100.0 * (base.mean_conf_agg - agg.mean_conf_agg)
            / base.mean_conf_agg,
        }

    report = MetricsReport(baseline=baseline, per_scenario=per_scenario,
                           aggregate=aggregate, deltas=deltas,
                           stabilized_actions=stabilized)
    if keep_traces:
        return report, traces
    return report


# ---------------------------------------------------------------------------
# Trace persistence
# ---------------------------------------------------------------------------


def export_trace(trace: EpisodeTrace, path: str | Path, fmt: str = "csv") -> Path:
    """Write a trace as CSV (header + one row per tick) or JSON-lines
    (metadata line followed by row objects)."""
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for row in trace.rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    elif fmt == "jsonl":
        with path.open("w") as fh:
            meta = {
                "scenario_name": trace.scenario_name, "seed": trace.seed,
                "policy_name": trace.policy_name, "ladders_hash": trace.ladders_hash,
                "final_action": config_to_fields(trace.final_action),
                "cumulative_reward": trace.cumulative_reward,
                "switch_count": trace.switch_count,
                "decision_count": trace.decision_count,
            }
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
            for row in trace.rows:
                fh.write(json.dumps(dict(zip(TRACE_COLUMNS, row)), sort_keys=True) + "\n")
    else:
        raise ValueError(f"unknown trace format '{fmt}'")
    return path


_INT_COLUMNS = {"state_index", "action_index", "radar_points"}


def load_trace(path: str | Path) -> EpisodeTrace:
    """Read a JSON-lines trace back; inverse of export_trace(fmt="jsonl")."""
    path = Path(path)
    with path.open() as fh:
        meta = json.loads(fh.readline())
        rows = []
        for line in fh:
            doc = json.loads(line)
            rows.append(tuple(
                int(doc[c]) if c in _INT_COLUMNS else doc[c] for c in TRACE_COLUMNS))
    return EpisodeTrace(
        scenario_name=meta["scenario_name"], seed=meta["seed"],
        policy_name=meta["policy_name"], ladders_hash=meta["ladders_hash"],
        final_action=config_from_fields(meta["final_action"]),
        cumulative_reward=meta["cumulative_reward"],
        switch_count=meta["switch_count"], decision_count=meta["decision_count"],
        rows=tuple(rows),
    )


def stabilized_actions_csv(report: MetricsReport) -> str:
    """One converged action per (policy, scenario), Fig-style summary."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["policy", "scenario", "rgb_fps", "rgb_res", "thermal_fps",
                     "thermal_res", "mmwave_fps", "mmwave_pref"])
    for pol in sorted(report.stabilized_actions):
        for scen in sorted(report.stabilized_actions[pol]):
            f = config_to_fields(report.stabilized_actions[pol][scen])
            writer.writerow([pol, scen, f["rgb_fps"], f["rgb_res"], f["thermal_fps"],
                             f["thermal_res"], f["mmwave_fps"], f["mmwave_pref"]])
    return out.getvalue()


# ---------------------------------------------------------------------------
# Run configuration file
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Everything needed to reproduce a full experiment, loaded from JSON."""

    scenarios: list[str] = field(default_factory=bundled_scenario_names)
    ladders: ActionLadders = field(default_factory=ActionLadders)
    discretizer: DiscretizerConfig = field(default_factory=DiscretizerConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    cost_model: CostModel = field(default_factory=CostModel)
    episodes: int = 1000
    max_steps: int | None = 50_000
    convergence_patience: int = 5

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        kwargs = {}
        if "scenarios" in doc:
            kwargs["scenarios"] = list(doc["scenarios"])
        if "ladders" in doc:
            lad = doc["ladders"]
            kwargs["ladders"] = ActionLadders(
                fps=tuple(int(f) for f in lad.get("fps", (1, 5, 15, 27))),
                rgb_resolutions=tuple(Resolution(w, h)
                                      for w, h in lad.get("rgb_resolutions",
                                                          [[1280, 720], [960, 540], [640, 360]])),
                thermal_resolutions=tuple(Resolution(w, h)
                                          for w, h in lad.get("thermal_resolutions",
                                                              [[160, 120], [320, 240]])),
            )
        if "discretizer" in doc:
            d = doc["discretizer"]
            kwargs["discretizer"] = DiscretizerConfig(
                window_seconds=d.get("window_seconds", 0.5),
                **{name: tuple(d[name]) for name in
                   ("illumination_cuts", "motion_cuts", "radar_density_cuts",
                    "load_cuts", "sync_cuts", "conf_cuts") if name in d})
        if "agent" in doc:
            a = doc["agent"]
            eps = a.get("epsilon", {})
            rw = a.get("reward_weights", {})
            kwargs["agent"] = AgentConfig(
                learning_rate=a.get("learning_rate", 0.1),
                discount=a.get("discount", 0.9),
                epsilon=EpsilonSchedule(
                    start=eps.get("start", 1.0), end=eps.get("end", 0.05),
                    decay_steps=eps.get("decay_steps", 20_000)),
                reward_weights=RewardWeights(
                    alpha=rw.get("alpha", 1.0), beta=rw.get("beta", 0.02),
                    gamma=rw.get("gamma", 0.5), delta=rw.get("delta", 0.05),
                    kappa=rw.get("kappa", 0.2)),
                rng_seed=a.get("rng_seed", 0),
            )
        if "cost_model" in doc:
            c = doc["cost_model"]

            def modality(name, default):
                m = c.get(name)
                if m is None:
                    return default
                return ModalityCost(m["idle_power"], m["active_power_per_mp_hz"],
                                    m["compute_load_per_mp_hz"])

            base = CostModel()
            kwargs["cost_model"] = CostModel(
                rgb=modality("rgb", base.rgb), thermal=modality("thermal", base.thermal),
                mmwave=modality("mmwave", base.mmwave), depth=modality("depth", base.depth),
                capacity=c.get("capacity", base.capacity),
                base_latency=c.get("base_latency", base.base_latency),
                latency_per_load_unit=c.get("latency_per_load_unit",
                                            base.latency_per_load_unit),
            )
        if "training" in doc:
            t = doc["training"]
            kwargs["episodes"] = t.get("episodes", 1000)
            kwargs["max_steps"] = t.get("max_steps", 50_000)
            kwargs["convergence_patience"] = t.get("convergence_patience", 5)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(
                f"invalid run config {path}: line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc)

    def resolve_scenarios(self) -> list[Scenario]:
        resolved = []
        for entry in self.scenarios:
            if entry.endswith(".json") or "/" in entry:
                resolved.append(load_scenario(entry))
            else:
                resolved.append(bundled_scenario(entry))
        return resolved

    def build_policies(self, qtable: QTable | None = None) -> dict[str, object]:
        policies: dict[str, object] = {
            "static": StaticPolicy(),
            "heuristic": HeuristicPolicy(self.ladders),
        }
        if qtable is not None:
            policies["adaptive"] = QLearningPolicy(qtable, self.agent, self.ladders,
                                                   learn=False)
        return policies
