"""sensorloop: adaptive multispectral sensing simulator with a tabular
Q-learning reconfiguration agent.

The package closes the loop between a deterministic multi-sensor platform
model (RGB, thermal, mmWave radar, depth) and a controller that retunes
per-modality frame rates, resolutions and the radar preference mode online,
trading compute load and power against detection quality.
"""

from .agent import (
    AgentConfig,
    EpsilonSchedule,
    HeuristicPolicy,
    QLearningPolicy,
    QTable,
    StaticPolicy,
    heuristic_policy,
    q_update,
    reward,
    select_action,
    static_policy,
)
from .discretize import (
    DiscretizerConfig,
    SmoothedFactors,
    WindowBuffer,
    bin_value,
    conf_agg,
    discretize_state,
    push_and_smooth,
)
from .domain import (
    ActionLadders,
    ContributionVector,
    DEFAULT_FPS_LADDER,
    DEFAULT_LADDERS,
    DetectionSet,
    DiscreteState,
    ModalityId,
    RadarParams,
    RadarPreference,
    Resolution,
    RewardWeights,
    RGB_RESOLUTIONS,
    STATE_COUNT,
    SensorConfig,
    THERMAL_RESOLUTIONS,
    UnknownActionError,
    decode_action,
    decode_state,
    encode_action,
    encode_state,
    enumerate_actions,
)
from .env import (
    CostModel,
    DEFAULT_COST_MODEL,
    EpisodeFinished,
    ModalityCost,
    Observation,
    Scenario,
    SceneCondition,
    SensorEnvironment,
    bundled_scenario,
    bundled_scenario_names,
    compute_cost,
    contribution_scores,
    detection_confidences,
    load_scenario,
    scene_at,
    sync_metrics,
)
from .radar import (
    C_LIGHT,
    ChirpConfig,
    chirp_for,
    derive_radar_params,
    lut_rows,
    radar_params_for,
)
from .runner import (
    EpisodeTrace,
    MetricsReport,
    RunConfig,
    TrainResult,
    evaluate,
    export_trace,
    load_trace,
    run_episode,
    train,
)

__version__ = "0.1.0"
