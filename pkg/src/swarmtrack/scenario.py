"""Scenario state, episode sampling, target dynamics and position constraints.

Episodes start with the UAV swarm on a small ring at the origin and targets
far out in a shared angular sector (polar-uniform initial conditions, rotated
as a whole by a per-episode angle so no absolute direction is preferred).
Targets fly straight with a small Gaussian drive noise on velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .errors import ConfigInvalid, MobilityViolation
from .geometry import as_vec2

AM = 1  # active range/bearing mode
PM = 0  # passive DOA mode


@dataclass
class UavState:
    pos: np.ndarray
    last_mode: int = AM

    def __post_init__(self):
        self.pos = as_vec2(self.pos, "uav pos")
        if self.last_mode not in (AM, PM):
            raise ValueError(f"mode must be 0 or 1, got {self.last_mode}")


@dataclass
class TargetState:
    pos: np.ndarray
    vel: np.ndarray
    has_jammer: bool

    def __post_init__(self):
        self.pos = as_vec2(self.pos, "target pos")
        self.vel = as_vec2(self.vel, "target vel")
        self.has_jammer = bool(self.has_jammer)


@dataclass
class WorldState:
    uavs: List[UavState]
    targets: List[TargetState]
    k: int = 0

    @property
    def n_uav(self) -> int:
        return len(self.uavs)

    @property
    def m_target(self) -> int:
        return len(self.targets)

    def copy(self) -> "WorldState":
        return WorldState(
            uavs=[UavState(u.pos.copy(), u.last_mode) for u in self.uavs],
            targets=[TargetState(t.pos.copy(), t.vel.copy(), t.has_jammer) for t in self.targets],
            k=self.k,
        )


@dataclass(frozen=True)
class ActionVec:
    """Per-agent command: planar displacement in meters plus the radar mode."""

    dx: float
    dy: float
    mode: int

    def __post_init__(self):
        if self.mode not in (AM, PM):
            raise ValueError(f"mode must be 0 or 1, got {self.mode}")

    @property
    def move(self) -> np.ndarray:
        return np.array([self.dx, self.dy])

    def norm(self) -> float:
        return float(np.hypot(self.dx, self.dy))


@dataclass
class ScenarioConfig:
    n_uav: int = 6
    m_target: int = 3
    horizon: int = 300
    p_jammer: float = 0.5
    # geometry limits: max move per step, min UAV-UAV and UAV-target distances
    d0: float = 100.0
    d1: float = 100.0
    d2: float = 1000.0
    # target initial polar distribution, relative to the per-episode base angle
    r_min: float = 4000.0
    r_max: float = 6000.0
    theta_min: float = -np.pi / 6
    theta_max: float = np.pi / 6
    v_min: float = 10.0
    v_max: float = 30.0
    theta_v_min: float = -np.pi / 12
    theta_v_max: float = np.pi / 12
    drive_noise_std: float = 0.5
    uav_ring_radius: float = 50.0
    # reward shaping
    alpha: float = 0.5
    penalty_m: float = 5.0
    lb_ceiling: float = 1e8

    def __post_init__(self):
        self.validate()

    def validate(self):
        checks = [
            (self.n_uav >= 1, "n_uav >= 1"),
            (self.m_target >= 1, "m_target >= 1"),
            (self.horizon >= 1, "horizon >= 1"),
            (0.0 <= self.p_jammer <= 1.0, "p_jammer in [0, 1]"),
            (self.d0 > 0 and self.d1 > 0 and self.d2 > 0, "d0, d1, d2 > 0"),
            (self.r_min <= self.r_max, "r_min <= r_max"),
            (self.theta_min <= self.theta_max, "theta_min <= theta_max"),
            (self.v_min <= self.v_max, "v_min <= v_max"),
            (self.theta_v_min <= self.theta_v_max, "theta_v_min <= theta_v_max"),
            (self.drive_noise_std >= 0, "drive_noise_std >= 0"),
            (self.uav_ring_radius >= 0, "uav_ring_radius >= 0"),
            (self.lb_ceiling > 0, "lb_ceiling > 0"),
        ]
        for ok, what in checks:
            if not ok:
                raise ConfigInvalid(f"scenario config violates {what}")


def sample_scenario(cfg: ScenarioConfig, seed, theta_init: float | None = None) -> WorldState:
    """Draw the initial world state.

    The base angle theta_init ~ U(0, 2pi) is shared by the whole episode and
    rotates UAV ring slots, target sector and target headings together, so a
    re-draw with a different base angle is an exact rigid rotation of the
    scene. Pass ``theta_init`` to override the drawn value (the draw is still
    consumed, keeping the remaining stream identical).
    """
    cfg.validate()
    rng = np.random.default_rng(seed)
    drawn = rng.uniform(0.0, 2.0 * np.pi)
    base = drawn if theta_init is None else float(theta_init)

    uavs = []
    for i in range(cfg.n_uav):
        ang = base + 2.0 * np.pi * i / cfg.n_uav
        pos = cfg.uav_ring_radius * np.array([np.cos(ang), np.sin(ang)])
        uavs.append(UavState(pos=pos, last_mode=AM))

    targets = []
    for _ in range(cfg.m_target):
        r = rng.uniform(cfg.r_min, cfg.r_max)
        ang = base + rng.uniform(cfg.theta_min, cfg.theta_max)
        speed = rng.uniform(cfg.v_min, cfg.v_max)
        v_ang = base + rng.uniform(cfg.theta_v_min, cfg.theta_v_max)
        pos = r * np.array([np.cos(ang), np.sin(ang)])
        vel = speed * np.array([np.cos(v_ang), np.sin(v_ang)])
        has_jammer = bool(rng.random() < cfg.p_jammer)
        targets.append(TargetState(pos=pos, vel=vel, has_jammer=has_jammer))

    return WorldState(uavs=uavs, targets=targets, k=0)


def step_targets(world: WorldState, cfg: ScenarioConfig, seed) -> WorldState:
    """Advance targets one step: pos += vel, then vel += N(0, drive_noise_std^2) per axis."""
    if world.k >= cfg.horizon:
        raise ValueError(f"episode already at horizon {cfg.horizon}")
    rng = np.random.default_rng(seed)
    nxt = world.copy()
    for tgt in nxt.targets:
        tgt.pos = tgt.pos + tgt.vel
        tgt.vel = tgt.vel + rng.normal(0.0, cfg.drive_noise_std, size=2)
    nxt.k = world.k + 1
    return nxt


def apply_actions(world: WorldState, actions: List[ActionVec], d0: float) -> WorldState:
    """Move each UAV by its action and record the commanded mode.

    Actions are expected pre-clamped; a displacement beyond d0 (1e-9 slack)
    means an upstream squash/repair bug and raises instead of clamping here.
    """
    if len(actions) != world.n_uav:
        raise ValueError(f"expected {world.n_uav} actions, got {len(actions)}")
    for i, act in enumerate(actions):
        if act.norm() > d0 + 1e-9:
            raise MobilityViolation(f"agent {i} move {act.norm():.6f} exceeds d0={d0}")
    nxt = world.copy()
    for uav, act in zip(nxt.uavs, actions):
        uav.pos = uav.pos + act.move
        uav.last_mode = act.mode
    return nxt


@dataclass
class ViolationReport:
    """Constraint violations of one step transition.

    ``mobility`` lists agents whose displacement exceeded d0, ``pairs`` the
    UAV index pairs (i < j) closer than d1, and ``standoff`` the (uav, target)
    index pairs closer than d2. Boundary contact (== d1 or == d2) is legal.
    """

    mobility: List[int] = field(default_factory=list)
    pairs: List[Tuple[int, int]] = field(default_factory=list)
    standoff: List[Tuple[int, int]] = field(default_factory=list)

    def empty(self) -> bool:
        return not (self.mobility or self.pairs or self.standoff)

    def agents_involved(self) -> set:
        out = set(self.mobility)
        for i, j in self.pairs:
            out.add(i)
            out.add(j)
        for i, _ in self.standoff:
            out.add(i)
        return out


def check_constraints(prev: WorldState, nxt: WorldState, cfg: ScenarioConfig) -> ViolationReport:
    """Report mobility (> d0), pairwise (< d1) and standoff (< d2) violations."""
    if prev.n_uav != nxt.n_uav or prev.m_target != nxt.m_target:
        raise ValueError("state sizes differ between steps")
    report = ViolationReport()
    for i in range(nxt.n_uav):
        move = float(np.linalg.norm(nxt.uavs[i].pos - prev.uavs[i].pos))
        if move > cfg.d0 + 1e-9:
            report.mobility.append(i)
    for i in range(nxt.n_uav):
        for j in range(i + 1, nxt.n_uav):
            if float(np.linalg.norm(nxt.uavs[i].pos - nxt.uavs[j].pos)) < cfg.d1:
                report.pairs.append((i, j))
    for i in range(nxt.n_uav):
        for j in range(nxt.m_target):
            if float(np.linalg.norm(nxt.uavs[i].pos - nxt.targets[j].pos)) < cfg.d2:
                report.standoff.append((i, j))
    return report


def standoff_violations(world: WorldState, cfg: ScenarioConfig) -> ViolationReport:
    """Pairwise and standoff checks of a single state (no mobility term)."""
    return check_constraints(world, world, cfg)


def remove_uav(world: WorldState, agent_i: int) -> WorldState:
    """Counterfactual world with UAV ``agent_i`` deleted from the swarm."""
    out = world.copy()
    del out.uavs[agent_i]
    return out
