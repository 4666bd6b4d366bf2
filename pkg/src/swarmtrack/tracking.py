"""Per-target next-step position prediction.

A constant-velocity Kalman filter per target, fed with position measurements
(in the simulator: true positions plus isotropic Gaussian noise). The filter
is deliberately decoupled from the radar bound machinery: its only outputs
are the next-step position prediction and its worst-axis standard deviation,
which size the safety halo used by action repair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import as_vec2

# state ordering: (x, y, vx, vy); one step per update, dt = 1
_F = np.block([[np.eye(2), np.eye(2)], [np.zeros((2, 2)), np.eye(2)]])
_H = np.hstack([np.eye(2), np.zeros((2, 2))])


@dataclass
class TrackerConfig:
    sigma_prior: float = 100.0       # reported prediction std before any update, m
    pos_prior_std: float = 100.0     # initial position state uncertainty, m
    vel_prior_std: float = 30.0      # initial velocity state uncertainty, m/step
    meas_noise_std: float = 50.0     # position measurement noise, m
    process_noise_std: float = 0.5   # velocity random walk per axis, m/step^2

    def __post_init__(self):
        if self.sigma_prior <= 0:
            raise ValueError("sigma_prior must be positive")
        if self.meas_noise_std < 0 or self.process_noise_std < 0:
            raise ValueError("noise stds must be non-negative")


@dataclass
class TrackEstimate:
    """Next-step prediction for one target."""

    pos_pred: np.ndarray      # predicted position at the next step
    vel_est: np.ndarray       # current velocity estimate
    sigma_pred: float         # worst-axis std of the predicted position
    state: np.ndarray         # filter posterior (x, y, vx, vy)
    cov: np.ndarray           # filter posterior covariance, 4x4

    def __post_init__(self):
        if not (np.isfinite(self.sigma_pred) and self.sigma_pred > 0):
            raise ValueError(f"sigma_pred must be positive, got {self.sigma_pred}")


def _process_noise(q: float) -> np.ndarray:
    return np.diag([0.0, 0.0, q * q, q * q])


def _predicted_sigma(state: np.ndarray, cov: np.ndarray, q: float):
    """One-step-ahead position and worst-axis std from a posterior."""
    x_pred = _F @ state
    p_pred = _F @ cov @ _F.T + _process_noise(q)
    pos_cov = p_pred[:2, :2]
    sigma = float(np.sqrt(max(np.linalg.eigvalsh(pos_cov)[-1], 0.0)))
    return x_pred[:2].copy(), sigma


def init_track(first_measurement, cfg: TrackerConfig) -> TrackEstimate:
    """Start a track at the first measurement with zero velocity and the prior std."""
    z = as_vec2(first_measurement, "measurement")
    state = np.array([z[0], z[1], 0.0, 0.0])
    cov = np.diag(
        [cfg.pos_prior_std**2, cfg.pos_prior_std**2, cfg.vel_prior_std**2, cfg.vel_prior_std**2]
    )
    return TrackEstimate(
        pos_pred=z.copy(),
        vel_est=np.zeros(2),
        sigma_pred=float(cfg.sigma_prior),
        state=state,
        cov=cov,
    )


def update_and_predict(track: TrackEstimate, measurement, cfg: TrackerConfig) -> TrackEstimate:
    """Kalman predict + position update, then report the next-step prediction.

    sigma_pred is the square root of the largest eigenvalue of the one-step
    predicted position covariance (worst axis), floored at a tiny positive
    value so the safety halo never collapses to zero.
    """
    z = as_vec2(measurement, "measurement")
    q = cfg.process_noise_std
    r_var = max(cfg.meas_noise_std**2, 1e-12)

    x_prior = _F @ track.state
    p_prior = _F @ track.cov @ _F.T + _process_noise(q)

    s = _H @ p_prior @ _H.T + r_var * np.eye(2)
    gain = p_prior @ _H.T @ np.linalg.inv(s)
    x_post = x_prior + gain @ (z - _H @ x_prior)
    p_post = (np.eye(4) - gain @ _H) @ p_prior
    p_post = 0.5 * (p_post + p_post.T)

    pos_pred, sigma = _predicted_sigma(x_post, p_post, q)
    return TrackEstimate(
        pos_pred=pos_pred,
        vel_est=x_post[2:].copy(),
        sigma_pred=max(sigma, 1e-9),
        state=x_post,
        cov=p_post,
    )
