"""Incident fields.

Only plane waves are needed by the benchmark harness: p_inc(x) =
exp(i k0 d.x) with a unit direction d and the exterior wavenumber k0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["PlaneWave", "plane_wave", "plane_wave_gradient"]


@dataclass(frozen=True)
class PlaneWave:
    """Unit-amplitude plane wave ``exp(i k d.x)``.

    ``direction`` is normalised on construction; a zero vector is rejected.
    """

    wavenumber: complex
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,):
            raise ValueError("direction must be a 3-vector")
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / norm))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return plane_wave(points, self.wavenumber, self.direction)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return plane_wave_gradient(points, self.wavenumber, self.direction)

    def normal_derivative(self, points: np.ndarray, normals: np.ndarray) -> np.ndarray:
        """d p_inc / dn at ``points`` with unit ``normals`` (same leading shape)."""
        grad = self.gradient(points)
        return np.einsum("...i,...i->...", grad, np.asarray(normals, dtype=float))


def plane_wave(points, k, direction=(0.0, 0.0, 1.0)):
    """Evaluate exp(i k d.x) at an (..., 3) array of points."""
    pts = np.asarray(points, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    phase = 1j * k * (pts @ d)
    return np.exp(phase)


def plane_wave_gradient(points, k, direction=(0.0, 0.0, 1.0)):
    """Gradient i k d exp(i k d.x); shape (..., 3)."""
    pts = np.asarray(points, dtype=float)
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    vals = np.exp(1j * k * (pts @ d))
    return 1j * k * vals[..., None] * d
