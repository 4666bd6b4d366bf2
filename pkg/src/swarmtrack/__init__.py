"""Multi-UAV multi-target radar tracking under jamming.

Library layout:

- ``crlb``: Fisher information and position-error bounds for active
  range/bearing radars and passive DOA networks, plus the episode score.
- ``scenario``: world state, episode sampling, target dynamics, constraints.
- ``tracking``: constant-velocity Kalman prediction of target positions.
- ``repair``: simulated-annealing retuning of standoff-violating actions.
- ``env``: observations, rewards and the closed simulation loop.
- ``mappo``: shared-parameter MAPPO trainer over the hybrid action space.
- ``config`` / ``cli``: INI run configuration and the experiment commands.
"""

from .crlb import (
    ActiveFactors,
    Fim,
    LbValue,
    PassiveFactor,
    RadarFactors,
    active_noise_cov,
    crlb_trace,
    doa_row,
    fim_active,
    fim_passive,
    lb_timestep,
    range_bearing_jacobian,
    tracking_effect,
)
from .env import (
    RewardBreakdown,
    TrackingEnv,
    distinct_reward,
    global_state,
    observe,
    reward,
    shared_reward,
)
from .errors import (
    ConfigInvalid,
    HashMismatch,
    MobilityViolation,
    NonFiniteLoss,
    NonPositiveLb,
    RepairFailed,
    SwarmTrackError,
    ZeroRange,
)
from .mappo import PolicyNet, TrainConfig, Trainer, ValueNet, act, gae, random_policy
from .repair import RepairContext, SaConfig, needs_repair, repair, sa_objective
from .scenario import (
    ActionVec,
    ScenarioConfig,
    TargetState,
    UavState,
    WorldState,
    apply_actions,
    check_constraints,
    sample_scenario,
    step_targets,
)
from .tracking import TrackerConfig, TrackEstimate, init_track, update_and_predict

__version__ = "0.1.0"
