"""Closed-form Fisher information and position-error bounds for a mixed radar network.

Active radars measure range and bearing of a target; their measurement noise
variance grows as r^4 divided by a hardware factor. Passive receivers measure
only the direction of arrival (DOA) of a jamming signal, with noise variance
r^2 over a similar factor. Both models yield 2x2 Fisher information matrices
for the target's planar position; the trace of the inverse is the scalar
tracking-quality score aggregated here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NonPositiveLb, ZeroRange
from .geometry import as_vec2

# Distances below this are treated as a co-located radar/target pair.
MIN_RANGE = 1e-9


@dataclass(frozen=True)
class ActiveFactors:
    """Noise-scaling constants of an active range/bearing radar.

    ``f_range`` has units m^4/m^2 and ``f_bearing`` m^4/rad^2, so the
    measurement variances r^4/f_range and r^4/f_bearing come out in m^2 and
    rad^2. Both absorb transmit power, bandwidth, antenna gain and target RCS,
    and are treated as constants for a run.
    """

    f_range: float
    f_bearing: float

    def __post_init__(self):
        if not (self.f_range > 0 and self.f_bearing > 0):
            raise ValueError(f"active factors must be positive, got {self}")


@dataclass(frozen=True)
class PassiveFactor:
    """Noise-scaling constant of a passive DOA receiver, units m^2/rad^2."""

    f_doa: float

    def __post_init__(self):
        if not self.f_doa > 0:
            raise ValueError(f"f_doa must be positive, got {self.f_doa}")


@dataclass(frozen=True)
class RadarFactors:
    """Per-run bundle of the active and passive noise factors."""

    f_range: float = 1e10
    f_bearing: float = 1e18
    f_doa: float = 1e11

    @property
    def active(self) -> ActiveFactors:
        return ActiveFactors(self.f_range, self.f_bearing)

    @property
    def passive(self) -> PassiveFactor:
        return PassiveFactor(self.f_doa)


@dataclass(frozen=True)
class Fim:
    """2x2 symmetric PSD Fisher information matrix for a planar position, 1/m^2."""

    m: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.m, dtype=np.float64)
        if a.shape != (2, 2):
            raise ValueError(f"FIM must be 2x2, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("FIM entries must be finite")
        if abs(a[0, 1] - a[1, 0]) > 1e-12:
            raise ValueError(f"FIM must be symmetric, got {a}")
        object.__setattr__(self, "m", a)

    @staticmethod
    def zero() -> "Fim":
        return Fim(np.zeros((2, 2)))

    def __add__(self, other: "Fim") -> "Fim":
        return Fim(self.m + other.m)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.m)


@dataclass(frozen=True)
class LbValue:
    """Average position-error bound in m^2; ``clamped`` marks ceiling substitution."""

    value: float
    clamped: bool

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value > 0):
            raise ValueError(f"bound must be positive and finite, got {self.value}")


def _separation(uav: np.ndarray, target: np.ndarray):
    uav = as_vec2(uav, "uav")
    target = as_vec2(target, "target")
    dx = target[0] - uav[0]
    dy = target[1] - uav[1]
    r = float(np.hypot(dx, dy))
    if r < MIN_RANGE:
        raise ZeroRange(f"uav {uav} coincides with target {target}")
    return dx, dy, r


def range_bearing_jacobian(uav, target) -> np.ndarray:
    """Jacobian of the (range, bearing) measurement w.r.t. target position.

    Row 1 is the unit line-of-sight vector from radar to target; row 2 is the
    bearing gradient [(y_u - y_t)/r^2, (x_t - x_u)/r^2].
    """
    dx, dy, r = _separation(uav, target)
    r2 = r * r
    return np.array([[dx / r, dy / r], [-dy / r2, dx / r2]])


def active_noise_cov(range_m: float, factors: ActiveFactors) -> np.ndarray:
    """Measurement noise covariance diag(r^4/f_range, r^4/f_bearing) of one radar."""
    if not (np.isfinite(range_m) and range_m >= MIN_RANGE):
        raise ZeroRange(f"range must be >= {MIN_RANGE} m, got {range_m}")
    r4 = range_m**4
    return np.diag([r4 / factors.f_range, r4 / factors.f_bearing])


def fim_active(am_uavs: Iterable, target, factors) -> Fim:
    """Sum of per-radar information H^T Sigma^-1 H over the active-mode radars.

    ``factors`` is either one ActiveFactors shared by every radar or a
    sequence of per-radar overrides. An empty radar set gives the zero matrix.
    """
    am_uavs = list(am_uavs)
    per_radar = _broadcast_factors(factors, len(am_uavs), ActiveFactors)
    total = np.zeros((2, 2))
    for uav, fac in zip(am_uavs, per_radar):
        h = range_bearing_jacobian(uav, target)
        _, _, r = _separation(uav, target)
        sigma = active_noise_cov(r, fac)
        total += h.T @ np.diag(1.0 / np.diag(sigma)) @ h
    return Fim(_symmetrize(total))


def doa_row(uav, target) -> np.ndarray:
    """Gradient of the arrival bearing w.r.t. target position: [(y_u-y_t)/r^2, (x_t-x_u)/r^2]."""
    dx, dy, r = _separation(uav, target)
    r2 = r * r
    return np.array([-dy / r2, dx / r2])


def fim_passive(pm_uavs: Iterable, target, factor) -> Fim:
    """Stacked-row DOA information H^T Sigma^-1 H over the passive receivers.

    Sigma is diagonal with entries r_i^2/f. Rank < 2 (a single bearing) is
    allowed here; the caller decides how to score singular geometries.
    """
    pm_uavs = list(pm_uavs)
    per_radar = _broadcast_factors(factor, len(pm_uavs), PassiveFactor)
    total = np.zeros((2, 2))
    for uav, fac in zip(pm_uavs, per_radar):
        row = doa_row(uav, target)
        _, _, r = _separation(uav, target)
        var = r * r / fac.f_doa
        total += np.outer(row, row) / var
    return Fim(_symmetrize(total))


def crlb_trace(fim: Fim, ceiling: float) -> LbValue:
    """Trace of the inverse FIM, or the ceiling when the FIM is ill-conditioned.

    The FIM counts as invertible when its smallest eigenvalue exceeds both 0
    and 1e-12 times the largest. Traces above the ceiling are also clamped so
    that adding a sensor can never raise the reported bound past the ceiling.
    """
    if not ceiling > 0:
        raise ValueError(f"ceiling must be positive, got {ceiling}")
    eig = fim.eigenvalues()
    lo, hi = float(eig[0]), float(eig[1])
    if lo <= 0 or lo <= 1e-12 * hi:
        return LbValue(ceiling, clamped=True)
    trace = 1.0 / lo + 1.0 / hi
    if trace > ceiling:
        return LbValue(ceiling, clamped=True)
    return LbValue(trace, clamped=False)


def lb_timestep(world, factors: RadarFactors, ceiling: float) -> LbValue:
    """Multi-target average bound: jammer targets scored by passive receivers only,
    clean targets by active radars only, averaged over the M targets."""
    am = [u.pos for u in world.uavs if u.last_mode == 1]
    pm = [u.pos for u in world.uavs if u.last_mode == 0]
    total = 0.0
    clamped = False
    for tgt in world.targets:
        if tgt.has_jammer:
            fim = fim_passive(pm, tgt.pos, factors.passive)
        else:
            fim = fim_active(am, tgt.pos, factors.active)
        lb = crlb_trace(fim, ceiling)
        total += lb.value
        clamped = clamped or lb.clamped
    return LbValue(total / len(world.targets), clamped=clamped)


def tracking_effect(lb_series: Sequence[float]) -> float:
    """Episode-level score -sum(log10(LB_k)); higher means better tracking."""
    arr = np.asarray(lb_series, dtype=np.float64)
    if arr.size == 0:
        return 0.0
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise NonPositiveLb("every bound in the series must be positive and finite")
    return float(-np.sum(np.log10(arr)))


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _broadcast_factors(factors, n: int, kind):
    if isinstance(factors, kind):
        return [factors] * n
    per_radar = list(factors)
    if len(per_radar) != n:
        raise ValueError(f"expected {n} per-radar factors, got {len(per_radar)}")
    for f in per_radar:
        if not isinstance(f, kind):
            raise TypeError(f"expected {kind.__name__}, got {type(f).__name__}")
    return per_radar
