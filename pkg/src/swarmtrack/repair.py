"""Simulated-annealing repair of actions that would breach the target standoff.

When an agent's planned position lands inside any predicted-target halo of
radius d2 + 3*sigma_pred, a short Metropolis chain retunes the action. The
energy being minimized is the negated one-step shared reward (evaluated with
the other agents frozen at their last positions and targets at their
predictions), plus a fixed proximity charge while any halo is still breached,
plus a huge mobility charge for displacement beyond d0. The chain cools
geometrically and the best candidate ever seen is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List

import numpy as np

from .crlb import RadarFactors, lb_timestep
from .errors import RepairFailed
from .geometry import clamp_norm
from .scenario import ActionVec, TargetState, UavState, WorldState
from .tracking import TrackEstimate


@dataclass
class SaConfig:
    t_max: float = 100.0
    t_min: float = 20.0
    iters: int = 20
    big_l: float = 1e6
    proximity_m: float = 10.0       # positive constant added while a halo is breached
    neighbor_move_std: float = 50.0  # Gaussian proposal std, defaults to d0/2
    mode_flip_prob: float = 0.1

    def __post_init__(self):
        if not self.t_max > self.t_min > 0:
            raise ValueError(f"need t_max > t_min > 0, got {self.t_max}, {self.t_min}")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.big_l <= 0:
            raise ValueError("big_l must be positive")
        if not 0.0 <= self.mode_flip_prob <= 1.0:
            raise ValueError("mode_flip_prob must be in [0, 1]")


@dataclass
class RepairContext:
    """Everything the annealer may look at: exclusively last-step and predicted data."""

    agent_i: int
    own_prev_pos: np.ndarray
    other_prev_pos: List[np.ndarray]     # ordered by UAV index, self excluded
    other_prev_modes: List[int]
    predictions: List[TrackEstimate]
    target_jammer: List[bool]
    d0: float
    d2: float
    factors: RadarFactors
    lb_ceiling: float


def halo_radii(ctx: RepairContext) -> np.ndarray:
    return np.array([ctx.d2 + 3.0 * t.sigma_pred for t in ctx.predictions])


def _planned_pos(candidate: ActionVec, ctx: RepairContext) -> np.ndarray:
    return ctx.own_prev_pos + candidate.move


def breaches_halo(pos: np.ndarray, ctx: RepairContext) -> bool:
    """True iff ``pos`` is strictly inside any predicted-target halo."""
    for tr, radius in zip(ctx.predictions, halo_radii(ctx)):
        if float(np.linalg.norm(pos - tr.pos_pred)) < radius:
            return True
    return False


def needs_repair(candidate: ActionVec, ctx: RepairContext) -> bool:
    """True iff the planned position lands strictly inside any halo."""
    return breaches_halo(_planned_pos(candidate, ctx), ctx)


def _predicted_world(candidate: ActionVec, ctx: RepairContext) -> WorldState:
    """One-step lookahead world: this agent moved, others stale, targets predicted."""
    uavs = []
    others = iter(zip(ctx.other_prev_pos, ctx.other_prev_modes))
    n = len(ctx.other_prev_pos) + 1
    for idx in range(n):
        if idx == ctx.agent_i:
            uavs.append(UavState(_planned_pos(candidate, ctx), candidate.mode))
        else:
            pos, mode = next(others)
            uavs.append(UavState(np.asarray(pos, dtype=float).copy(), mode))
    targets = [
        TargetState(tr.pos_pred.copy(), tr.vel_est.copy(), jam)
        for tr, jam in zip(ctx.predictions, ctx.target_jammer)
    ]
    return WorldState(uavs=uavs, targets=targets)


def sa_objective(candidate: ActionVec, ctx: RepairContext, cfg: SaConfig) -> float:
    """Annealing energy: -(R_hat_shared - proximity charge - mobility charge).

    The mobility indicator penalizes displacement beyond d0 so the chain can
    never settle on an infeasible move; the proximity charge applies while
    the planned position is still inside some halo.
    """
    world = _predicted_world(candidate, ctx)
    shared = -np.log10(lb_timestep(world, ctx.factors, ctx.lb_ceiling).value)
    proximity = cfg.proximity_m if breaches_halo(_planned_pos(candidate, ctx), ctx) else 0.0
    mobility = cfg.big_l if candidate.norm() > ctx.d0 else 0.0
    return float(-(shared - proximity - mobility))


def make_fast_objective(ctx: RepairContext, cfg: SaConfig):
    """Same energy as ``sa_objective`` with the stale-agent terms precomputed.

    Only the tuned agent's own information contribution varies along the
    chain, so the other radars' per-target FIMs are summed once up front.
    """
    from .crlb import Fim, crlb_trace, fim_active, fim_passive

    m = len(ctx.predictions)
    base = [np.zeros((2, 2)) for _ in range(m)]
    for pos, mode in zip(ctx.other_prev_pos, ctx.other_prev_modes):
        for j, (tr, jam) in enumerate(zip(ctx.predictions, ctx.target_jammer)):
            if jam and mode == 0:
                base[j] = base[j] + fim_passive([pos], tr.pos_pred, ctx.factors.passive).m
            elif not jam and mode == 1:
                base[j] = base[j] + fim_active([pos], tr.pos_pred, ctx.factors.active).m

    centers = [tr.pos_pred for tr in ctx.predictions]
    radii = halo_radii(ctx)

    def objective(candidate: ActionVec) -> float:
        pos = ctx.own_prev_pos + candidate.move
        total = 0.0
        breached = False
        for j in range(m):
            fim = base[j]
            jam = ctx.target_jammer[j]
            if jam and candidate.mode == 0:
                fim = fim + fim_passive([pos], centers[j], ctx.factors.passive).m
            elif not jam and candidate.mode == 1:
                fim = fim + fim_active([pos], centers[j], ctx.factors.active).m
            total += crlb_trace(Fim(fim), ctx.lb_ceiling).value
            if float(np.linalg.norm(pos - centers[j])) < radii[j]:
                breached = True
        shared = -np.log10(total / m)
        proximity = cfg.proximity_m if breached else 0.0
        mobility = cfg.big_l if candidate.norm() > ctx.d0 else 0.0
        return float(-(shared - proximity - mobility))

    return objective


def temperature_schedule(cfg: SaConfig) -> np.ndarray:
    """Geometric cooling from t_max to t_min over ``iters`` steps."""
    if cfg.iters == 1:
        return np.array([cfg.t_max])
    steps = np.arange(cfg.iters)
    return cfg.t_max * (cfg.t_min / cfg.t_max) ** (steps / (cfg.iters - 1))


def metropolis_accept(delta: float, temperature: float, rng: np.random.Generator) -> bool:
    """Standard Metropolis rule: always take improvements, worse moves w.p. exp(-d/T)."""
    if delta <= 0:
        return True
    return bool(rng.random() < np.exp(-delta / temperature))


def _propose(current: ActionVec, ctx: RepairContext, cfg: SaConfig, rng) -> ActionVec:
    move = current.move + rng.normal(0.0, cfg.neighbor_move_std, size=2)
    move = clamp_norm(move, ctx.d0)
    mode = current.mode
    if rng.random() < cfg.mode_flip_prob:
        mode = 1 - mode
    return ActionVec(float(move[0]), float(move[1]), mode)


def repair(candidate: ActionVec, ctx: RepairContext, cfg: SaConfig, seed) -> ActionVec:
    """Run the annealing chain and return the best candidate seen.

    Already-feasible inputs are returned unchanged. Raises RepairFailed when
    the best seen candidate still breaches a halo after the full chain; the
    caller then falls back to a direct retreat (see ``fallback_action``).
    """
    if not needs_repair(candidate, ctx):
        return candidate
    rng = np.random.default_rng(seed)
    objective = make_fast_objective(ctx, cfg)
    current = candidate
    current_obj = objective(current)
    best, best_obj = current, current_obj
    for temp in temperature_schedule(cfg):
        proposal = _propose(current, ctx, cfg, rng)
        obj = objective(proposal)
        if metropolis_accept(obj - current_obj, temp, rng):
            current, current_obj = proposal, obj
        if obj < best_obj:
            best, best_obj = proposal, obj
    if needs_repair(best, ctx):
        raise RepairFailed(f"agent {ctx.agent_i}: chain ended inside a halo")
    return best


def synthetic_violating_context(
    rng: np.random.Generator,
    d0: float = 100.0,
    d2: float = 1000.0,
    factors: RadarFactors = RadarFactors(),
    lb_ceiling: float = 1e8,
    max_depth: float = 30.0,
    n_targets_max: int = 3,
    n_others: int = 3,
):
    """Random benchmark instance: a context plus a candidate that breaches a halo.

    Models the incursions the closed loop actually hands to the annealer: the
    agent starts outside every halo (the loop's invariant) and the candidate
    lands inside one by at most ``max_depth`` meters, the drift a halo can
    gain in one step of target motion. Deep full-speed dives are the
    fallback's territory, not the chain's. Returns (candidate, context).
    """
    from .tracking import TrackerConfig, init_track

    tcfg = TrackerConfig()
    prev = rng.uniform(-500.0, 500.0, size=2)
    sigma0 = float(rng.uniform(10.0, 60.0))
    halo0 = d2 + 3.0 * sigma0
    mag = rng.uniform(0.4, 1.0) * d0
    psi = rng.uniform(0.0, 2.0 * np.pi)
    move = mag * np.array([np.cos(psi), np.sin(psi)])
    land = prev + move
    depth = float(rng.uniform(0.5, max_depth))
    # place the breached target so the landing point is ``depth`` inside its
    # halo while the previous position stays strictly outside
    while True:
        phi = rng.uniform(0.0, 2.0 * np.pi)
        center0 = land + (halo0 - depth) * np.array([np.cos(phi), np.sin(phi)])
        if float(np.linalg.norm(prev - center0)) >= halo0 + 0.1:
            break

    n_targets = int(rng.integers(1, n_targets_max + 1))
    centers = [center0]
    sigmas = [sigma0]
    for _ in range(n_targets - 1):
        far_ang = rng.uniform(0.0, 2.0 * np.pi)
        far = rng.uniform(halo0 + 2.0 * d0, 6000.0)
        centers.append(prev + far * np.array([np.cos(far_ang), np.sin(far_ang)]))
        sigmas.append(float(rng.uniform(10.0, 60.0)))
    predictions = []
    jammers = []
    for c, s in zip(centers, sigmas):
        tr = init_track(c, tcfg)
        tr.sigma_pred = float(s)
        predictions.append(tr)
        jammers.append(bool(rng.random() < 0.5))
    others = [prev + rng.uniform(-800.0, 800.0, size=2) for _ in range(n_others)]
    modes = [int(rng.random() < 0.5) for _ in range(n_others)]
    ctx = RepairContext(
        agent_i=0,
        own_prev_pos=prev,
        other_prev_pos=others,
        other_prev_modes=modes,
        predictions=predictions,
        target_jammer=jammers,
        d0=d0,
        d2=d2,
        factors=factors,
        lb_ceiling=lb_ceiling,
    )
    candidate = ActionVec(float(move[0]), float(move[1]), int(rng.random() < 0.5))
    if not needs_repair(candidate, ctx):
        # a far target's halo swallowed the construction; extremely rare
        return synthetic_violating_context(
            rng, d0, d2, factors, lb_ceiling, max_depth, n_targets_max, n_others
        )
    return candidate, ctx


def fallback_action(candidate: ActionVec, ctx: RepairContext) -> ActionVec:
    """Deterministic escape used when the chain fails.

    First choice is the full-d0 retreat straight away from the nearest
    predicted target. If overlapping halos block that, a fixed fan of
    directions (plus staying put) is scanned and the candidate with the
    largest worst-case halo clearance wins. The commanded mode is kept.
    """
    prev = ctx.own_prev_pos
    centers = np.array([t.pos_pred for t in ctx.predictions])
    radii = halo_radii(ctx)
    dists = np.linalg.norm(centers - prev, axis=1)
    nearest = int(np.argmin(dists))

    away = prev - centers[nearest]
    nrm = float(np.linalg.norm(away))
    if nrm > 1e-12:
        away = away / nrm
    else:
        away = np.array([1.0, 0.0])
    options = [away * ctx.d0, np.zeros(2)]
    for ang in np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False):
        options.append(ctx.d0 * np.array([np.cos(ang), np.sin(ang)]))

    def clearance(move):
        pos = prev + move
        return float(np.min(np.linalg.norm(centers - pos, axis=1) - radii))

    best = max(options, key=clearance)
    # prefer the straight retreat whenever it already clears every halo
    if clearance(options[0]) >= 0.0:
        best = options[0]
    return replace(candidate, dx=float(best[0]), dy=float(best[1]))
