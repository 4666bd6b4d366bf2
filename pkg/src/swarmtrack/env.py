"""Dec-POMDP environment: observations, rewards and the closed simulation loop.

Each step runs the full pipeline: policy actions come in pre-clamped, the
annealing repair retunes any action that would land inside a predicted-target
halo, a deterministic repulsion projection resolves UAV-UAV proximity, the
world advances, the per-target trackers ingest fresh measurements, and
per-agent reward breakdowns come back with the violation bookkeeping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, List, Optional, Sequence

import numpy as np

from .crlb import Fim, LbValue, RadarFactors, crlb_trace, fim_active, fim_passive, lb_timestep
from .errors import MobilityViolation, RepairFailed
from .geometry import clamp_norm
from .repair import RepairContext, SaConfig, fallback_action, needs_repair
from .repair import repair as sa_repair
from .scenario import (
    AM,
    PM,
    ActionVec,
    ScenarioConfig,
    ViolationReport,
    WorldState,
    apply_actions,
    check_constraints,
    remove_uav,
    sample_scenario,
    step_targets,
)
from .tracking import TrackEstimate, TrackerConfig, init_track, update_and_predict


def observation_length(n_uav: int, m_target: int) -> int:
    return 2 * (n_uav - 1) + 3 * m_target + 1


def observe(world: WorldState, agent_i: int, predictions: Sequence[TrackEstimate]) -> np.ndarray:
    """Agent-local view: relative UAV positions, relative predicted target
    positions, jammer flags and the agent's own last mode.

    Order: 2(N-1) entries for the other UAVs by index (self skipped), then 2M
    entries for predicted target positions, M jammer flags, own mode.
    """
    if len(predictions) != world.m_target:
        raise ValueError(f"expected {world.m_target} predictions, got {len(predictions)}")
    own = world.uavs[agent_i].pos
    parts = []
    for j, uav in enumerate(world.uavs):
        if j != agent_i:
            parts.append(uav.pos - own)
    for tr in predictions:
        parts.append(tr.pos_pred - own)
    flags = np.array([1.0 if t.has_jammer else 0.0 for t in world.targets])
    tail = np.array([float(world.uavs[agent_i].last_mode)])
    return np.concatenate(parts + [flags, tail])


def global_state(world: WorldState, predictions: Sequence[TrackEstimate]) -> np.ndarray:
    """Centralized-critic input: absolute UAV poses+modes and predicted
    target positions+jammer flags."""
    parts = []
    for uav in world.uavs:
        parts.append(np.array([uav.pos[0], uav.pos[1], float(uav.last_mode)]))
    for tr, tgt in zip(predictions, world.targets):
        parts.append(np.array([tr.pos_pred[0], tr.pos_pred[1], 1.0 if tgt.has_jammer else 0.0]))
    return np.concatenate(parts)


@dataclass(frozen=True)
class RewardBreakdown:
    shared: float
    distinct: float
    penalty: float
    total: float


def shared_reward(world: WorldState, factors: RadarFactors, cfg: ScenarioConfig) -> float:
    """-log10 of the multi-target average bound; per-step sums then equal the
    episode tracking-effect score."""
    return float(-np.log10(lb_timestep(world, factors, cfg.lb_ceiling).value))


def distinct_reward(
    world: WorldState, agent_i: int, factors: RadarFactors, cfg: ScenarioConfig
) -> float:
    """Marginal contribution of one agent: shared reward with it minus without it."""
    with_agent = shared_reward(world, factors, cfg)
    without_agent = shared_reward(remove_uav(world, agent_i), factors, cfg)
    return with_agent - without_agent


def uav_target_fims(world: WorldState, factors: RadarFactors) -> List[List[Fim]]:
    """Per-(uav, target) information contributions under the mode/jammer pairing.

    Active radars contribute only to non-jammer targets, passive receivers
    only to jammer targets; every other pairing is the zero matrix. Built
    from the single-radar forms so it stays on the canonical code path.
    """
    out = []
    for uav in world.uavs:
        row = []
        for tgt in world.targets:
            if tgt.has_jammer and uav.last_mode == PM:
                row.append(fim_passive([uav.pos], tgt.pos, factors.passive))
            elif not tgt.has_jammer and uav.last_mode == AM:
                row.append(fim_active([uav.pos], tgt.pos, factors.active))
            else:
                row.append(Fim.zero())
        out.append(row)
    return out


def _lb_with_counterfactuals(world: WorldState, factors: RadarFactors, ceiling: float):
    """(shared LB, [LB without agent i]) via contribution subtraction."""
    contrib = uav_target_fims(world, factors)
    m = world.m_target
    totals = [Fim.zero() for _ in range(m)]
    for row in contrib:
        totals = [t + c for t, c in zip(totals, row)]
    full_vals = [crlb_trace(f, ceiling) for f in totals]
    lb_full = LbValue(
        float(np.mean([v.value for v in full_vals])),
        clamped=any(v.clamped for v in full_vals),
    )
    lb_without = []
    for i in range(world.n_uav):
        vals = [
            crlb_trace(Fim(totals[j].m - contrib[i][j].m), ceiling).value for j in range(m)
        ]
        lb_without.append(float(np.mean(vals)))
    return lb_full, lb_without


def reward(
    world: WorldState,
    agent_i: int,
    factors: RadarFactors,
    cfg: ScenarioConfig,
    violations: Optional[ViolationReport] = None,
) -> RewardBreakdown:
    """Per-agent breakdown: shared + alpha * distinct - penalty.

    The penalty is cfg.penalty_m when the agent participates in any UAV-UAV
    or UAV-target proximity violation in ``world``, else zero. Pass a
    precomputed report to skip re-scanning the state.
    """
    return rewards_all(world, factors, cfg, violations)[agent_i]


def rewards_all(
    world: WorldState,
    factors: RadarFactors,
    cfg: ScenarioConfig,
    violations: Optional[ViolationReport] = None,
) -> List[RewardBreakdown]:
    """All agents' breakdowns, sharing one pass over the radar contributions."""
    if violations is None:
        violations = check_constraints(world, world, cfg)
    involved = set()
    for i, j in violations.pairs:
        involved.update((i, j))
    for i, _ in violations.standoff:
        involved.add(i)
    lb_full, lb_without = _lb_with_counterfactuals(world, factors, cfg.lb_ceiling)
    shared = float(-np.log10(lb_full.value))
    out = []
    for i in range(world.n_uav):
        distinct = shared - float(-np.log10(lb_without[i]))
        penalty = cfg.penalty_m if i in involved else 0.0
        out.append(
            RewardBreakdown(
                shared=shared,
                distinct=distinct,
                penalty=penalty,
                total=shared + cfg.alpha * distinct - penalty,
            )
        )
    return out


def repulsion_projection(
    prev_positions: np.ndarray,
    proposed_positions: np.ndarray,
    d0: float,
    d1: float,
    halo_centers: Optional[np.ndarray] = None,
    halo_radii: Optional[np.ndarray] = None,
    max_iters: int = 80,
) -> np.ndarray:
    """Nudge planned positions until no UAV pair is closer than d1.

    Violating pairs are pushed apart along their separation axis; positions
    inside a predicted-target halo (when halos are given) are pushed out
    radially; every nudge is re-clamped to the d0 mobility ball around the
    previous position. Deterministic, no randomness.
    """
    pos = np.array(proposed_positions, dtype=np.float64)
    prev = np.asarray(prev_positions, dtype=np.float64)
    n = pos.shape[0]
    margin = 1e-6

    for attempt in range(3):
        for _ in range(max_iters):
            pushed = False
            for i in range(n):
                for j in range(i + 1, n):
                    delta = pos[i] - pos[j]
                    dist = float(np.hypot(delta[0], delta[1]))
                    if dist >= d1:
                        continue
                    if dist < 1e-9:
                        ang = 2.0 * np.pi * (i * 7 + j * 3) / (7 * n + 3)
                        axis = np.array([np.cos(ang), np.sin(ang)])
                    else:
                        axis = delta / dist
                    shift = 0.5 * (d1 + margin - dist)
                    pos[i] = pos[i] + shift * axis
                    pos[j] = pos[j] - shift * axis
                    pushed = True
            if halo_centers is not None and len(halo_centers) > 0:
                for i in range(n):
                    gaps = np.linalg.norm(halo_centers - pos[i], axis=1) - halo_radii
                    worst = int(np.argmin(gaps))
                    if gaps[worst] < 0:
                        away = pos[i] - halo_centers[worst]
                        nrm = float(np.linalg.norm(away))
                        away = away / nrm if nrm > 1e-9 else np.array([1.0, 0.0])
                        pos[i] = pos[i] + (-gaps[worst] + margin) * away
                        pushed = True
            for i in range(n):
                pos[i] = prev[i] + clamp_norm(pos[i] - prev[i], d0)
            if not pushed:
                return pos
        # iteration budget exhausted: shrink the moves toward the (feasible
        # at the previous step) starting positions and retry
        pos = prev + 0.25 * (pos - prev)
    return pos


@dataclass
class StepInfo:
    lb: LbValue
    violations: ViolationReport
    predicted_c8: int
    repairs_invoked: int
    fallbacks: int
    executed: List[ActionVec] = field(default_factory=list)


class TrackingEnv:
    """Single-episode environment with the repair/repulsion pipeline built in.

    One instance is single-writer (one reset/step at a time); run several
    instances for parallel rollouts.
    """

    def __init__(
        self,
        cfg: ScenarioConfig,
        factors: RadarFactors = RadarFactors(),
        tracker_cfg: Optional[TrackerConfig] = None,
        sa_cfg: Optional[SaConfig] = None,
        repair_enabled: bool = True,
        repulsion_enabled: bool = True,
    ):
        self.cfg = cfg
        self.factors = factors
        self.tracker_cfg = tracker_cfg or TrackerConfig(process_noise_std=cfg.drive_noise_std)
        self.sa_cfg = sa_cfg or SaConfig(neighbor_move_std=cfg.d0 / 2.0)
        self.repair_enabled = repair_enabled
        self.repulsion_enabled = repulsion_enabled
        self.world: Optional[WorldState] = None
        self.tracks: List[TrackEstimate] = []
        self._rng: Optional[np.random.Generator] = None

    @property
    def n_agents(self) -> int:
        return self.cfg.n_uav

    def reset(self, seed) -> List[np.ndarray]:
        self._rng = np.random.default_rng(seed)
        self.world = sample_scenario(self.cfg, self._rng)
        self.tracks = [
            init_track(self._measure(t.pos), self.tracker_cfg) for t in self.world.targets
        ]
        return self.observations()

    def _measure(self, true_pos: np.ndarray) -> np.ndarray:
        return true_pos + self._rng.normal(0.0, self.tracker_cfg.meas_noise_std, size=2)

    def observations(self) -> List[np.ndarray]:
        return [observe(self.world, i, self.tracks) for i in range(self.n_agents)]

    def state_vector(self) -> np.ndarray:
        return global_state(self.world, self.tracks)

    def repair_context(self, agent_i: int, world: Optional[WorldState] = None) -> RepairContext:
        world = world or self.world
        return RepairContext(
            agent_i=agent_i,
            own_prev_pos=world.uavs[agent_i].pos.copy(),
            other_prev_pos=[u.pos.copy() for j, u in enumerate(world.uavs) if j != agent_i],
            other_prev_modes=[u.last_mode for j, u in enumerate(world.uavs) if j != agent_i],
            predictions=self.tracks,
            target_jammer=[t.has_jammer for t in world.targets],
            d0=self.cfg.d0,
            d2=self.cfg.d2,
            factors=self.factors,
            lb_ceiling=self.cfg.lb_ceiling,
        )

    def step(self, actions: List[ActionVec]):
        """Advance one step; returns (observations, breakdowns, done, StepInfo)."""
        if self.world is None:
            raise RuntimeError("call reset() before step()")
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(actions)}")
        for i, act in enumerate(actions):
            if act.norm() > self.cfg.d0 + 1e-9:
                raise MobilityViolation(f"agent {i} action exceeds d0 before repair")
        prev = self.world

        repairs = 0
        fallbacks = 0
        final = list(actions)
        if self.repair_enabled:
            for i in range(self.n_agents):
                ctx = self.repair_context(i, prev)
                if not needs_repair(final[i], ctx):
                    continue
                repairs += 1
                try:
                    final[i] = sa_repair(final[i], ctx, self.sa_cfg, self._rng)
                except RepairFailed:
                    fallbacks += 1
                    final[i] = fallback_action(final[i], ctx)

        if self.repulsion_enabled:
            prev_pos = np.array([u.pos for u in prev.uavs])
            proposed = prev_pos + np.array([a.move for a in final])
            halo_centers = np.array([t.pos_pred for t in self.tracks])
            halo_radii = np.array([self.cfg.d2 + 3.0 * t.sigma_pred for t in self.tracks])
            projected = repulsion_projection(
                prev_pos,
                proposed,
                self.cfg.d0,
                self.cfg.d1,
                halo_centers=halo_centers if self.repair_enabled else None,
                halo_radii=halo_radii if self.repair_enabled else None,
            )
            moves = projected - prev_pos
            final = [
                ActionVec(float(m[0]), float(m[1]), a.mode) for m, a in zip(moves, final)
            ]

        moved = apply_actions(prev, final, self.cfg.d0)
        predicted_c8 = self._count_predicted_standoff(moved)
        nxt = step_targets(moved, self.cfg, self._rng)

        violations = check_constraints(prev, nxt, self.cfg)
        lb = lb_timestep(nxt, self.factors, self.cfg.lb_ceiling)
        breakdowns = rewards_all(nxt, self.factors, self.cfg, violations)

        self.world = nxt
        self.tracks = [
            update_and_predict(tr, self._measure(t.pos), self.tracker_cfg)
            for tr, t in zip(self.tracks, nxt.targets)
        ]

        done = nxt.k >= self.cfg.horizon
        info = StepInfo(
            lb=lb,
            violations=violations,
            predicted_c8=predicted_c8,
            repairs_invoked=repairs,
            fallbacks=fallbacks,
            executed=final,
        )
        return self.observations(), breakdowns, done, info

    def _count_predicted_standoff(self, moved: WorldState) -> int:
        count = 0
        for uav in moved.uavs:
            for tr in self.tracks:
                halo = self.cfg.d2 + 3.0 * tr.sigma_pred
                if float(np.linalg.norm(uav.pos - tr.pos_pred)) < halo:
                    count += 1
        return count


# ---------------------------------------------------------------------------
# Trajectory traces: line-delimited JSON, one header line then one record per
# step. Floats survive the round trip exactly (repr-based JSON encoding).
# ---------------------------------------------------------------------------


def trace_header(cfg: ScenarioConfig, config_hash: str = "") -> dict:
    return {
        "type": "header",
        "n_uav": cfg.n_uav,
        "m_target": cfg.m_target,
        "horizon": cfg.horizon,
        "config_hash": config_hash,
    }


def trace_record(world: WorldState, lb: LbValue, rewards: Sequence[RewardBreakdown]) -> dict:
    return {
        "k": world.k,
        "uavs": [[u.pos[0], u.pos[1], u.last_mode] for u in world.uavs],
        "targets": [[t.pos[0], t.pos[1], 1 if t.has_jammer else 0] for t in world.targets],
        "lb": lb.value,
        "rewards": [b.total for b in rewards],
    }


def world_from_record(record: dict) -> WorldState:
    """Rebuild the recorded state. Target velocities are not part of the trace
    schema and come back as zero."""
    from .scenario import TargetState, UavState

    uavs = [UavState(np.array([x, y]), int(mode)) for x, y, mode in record["uavs"]]
    targets = [
        TargetState(np.array([x, y]), np.zeros(2), bool(jam)) for x, y, jam in record["targets"]
    ]
    return WorldState(uavs=uavs, targets=targets, k=int(record["k"]))


def write_trace_line(fh: IO[str], obj: dict) -> None:
    fh.write(json.dumps(obj) + "\n")


def read_trace(fh: IO[str]):
    """Yield (header, records) parsed from a trace stream."""
    lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "header":
        raise ValueError("trace must start with a header line")
    return lines[0], lines[1:]
