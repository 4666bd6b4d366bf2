"""2D vector helpers. Positions and displacements are float64 arrays of shape (2,)."""

from __future__ import annotations

import numpy as np


def as_vec2(v, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float64 (2,) array; reject NaN/Inf and wrong shapes."""
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (2,):
        raise ValueError(f"{name} must have shape (2,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite, got {a}")
    return a


def rotate(v: np.ndarray, angle: float, center=(0.0, 0.0)) -> np.ndarray:
    """Rotate a point about ``center`` by ``angle`` radians (counterclockwise)."""
    c, s = np.cos(angle), np.sin(angle)
    center = np.asarray(center, dtype=np.float64)
    d = np.asarray(v, dtype=np.float64) - center
    return center + np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])


def clamp_norm(v: np.ndarray, max_norm: float) -> np.ndarray:
    """Radially scale ``v`` so its 2-norm does not exceed ``max_norm``."""
    n = float(np.hypot(v[0], v[1]))
    if n <= max_norm:
        return np.asarray(v, dtype=np.float64)
    return np.asarray(v, dtype=np.float64) * (max_norm / n)
