"""Partial-wave series for a plane wave hitting one penetrable sphere.

Reference solution for validating boundary-element solves.  The field is
expanded in spherical harmonics about the sphere centre; per mode the
transmission conditions (continuity of pressure and of the sigma-weighted
normal derivative) give a 2x2 system for the scattered and interior
coefficients:

    p_out = sum_n i^n (2n+1) [ j_n(k0 r) + a_n h_n(k0 r) ] P_n(cos theta)
    p_in  = sum_n i^n (2n+1)   b_n j_n(k1 r)               P_n(cos theta)

For a sphere centred away from the origin the incident wave contributes an
extra constant phase exp(i k0 d.c), carried by the evaluation routines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import spherical_jn, spherical_yn

__all__ = [
    "SphereSeries",
    "series_length",
    "solve_sphere_series",
]


def series_length(k0: complex, radius: float) -> int:
    """Truncation order: x + 4 x^(1/3) + 16 with x = |k0| R."""
    x = abs(k0) * radius
    return int(np.ceil(x + 4.0 * x ** (1.0 / 3.0) + 16.0))


def _jn(n, z, derivative=False):
    return spherical_jn(n, z, derivative=derivative)


def _hn(n, z, derivative=False):
    return spherical_jn(n, z, derivative=derivative) + 1j * spherical_yn(
        n, z, derivative=derivative
    )


@dataclass
class SphereSeries:
    """Solved partial-wave coefficients for one penetrable sphere."""

    radius: float
    center: np.ndarray
    direction: np.ndarray
    k_out: complex
    k_in: complex
    sigma_out: float
    sigma_in: float
    a: np.ndarray          # scattered-field coefficients
    b: np.ndarray          # interior-field coefficients

    @property
    def incident_phase(self) -> complex:
        """Phase of the incident wave at the sphere centre."""
        return np.exp(1j * self.k_out * float(self.direction @ self.center))

    # -- point evaluation --------------------------------------------------

    def _local_frame(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        r = np.linalg.norm(pts, axis=1)
        mu = np.zeros_like(r)
        nz = r > 0
        mu[nz] = (pts[nz] @ self.direction) / r[nz]
        mu[~nz] = 1.0
        return r, np.clip(mu, -1.0, 1.0)

    def _sum_modes(self, radial, r, mu):
        """Accumulate sum_n i^n (2n+1) radial_n(r) P_n(mu)."""
        total = np.zeros(len(r), dtype=complex)
        p_prev = np.zeros_like(mu)
        p_curr = np.ones_like(mu)
        for n in range(len(self.a)):
            term = (1j ** n) * (2 * n + 1)
            total += term * radial(n, r) * p_curr
            p_next = ((2 * n + 1) * mu * p_curr - n * p_prev) / (n + 1)
            p_prev, p_curr = p_curr, p_next
        return total

    def scattered(self, points) -> np.ndarray:
        """Scattered field outside the sphere (phase-shifted for the centre)."""
        r, mu = self._local_frame(points)
        out = self._sum_modes(lambda n, rr: self.a[n] * _hn(n, self.k_out * rr), r, mu)
        return self.incident_phase * out

    def interior(self, points) -> np.ndarray:
        r, mu = self._local_frame(points)
        out = self._sum_modes(lambda n, rr: self.b[n] * _jn(n, self.k_in * rr), r, mu)
        return self.incident_phase * out

    def total(self, points) -> np.ndarray:
        """Exact field: incident + scattered outside, interior inside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, _ = self._local_frame(pts)
        out = np.empty(len(pts), dtype=complex)
        outside = r >= self.radius
        if outside.any():
            inc = np.exp(1j * self.k_out * (pts[outside] @ self.direction))
            out[outside] = inc + self.scattered(pts[outside])
        if (~outside).any():
            out[~outside] = self.interior(pts[~outside])
        return out

    # -- traces on the interface -------------------------------------------

    def exterior_traces(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Exterior Dirichlet and Neumann traces of the total field at
        surface points (normal pointing out of the sphere)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, mu = self._local_frame(pts)
        k0 = self.k_out
        dirichlet = self._sum_modes(
            lambda n, rr: _jn(n, k0 * rr) + self.a[n] * _hn(n, k0 * rr), r, mu
        )
        # radial derivative: d/dr f(k r) = k f'(k r); the sphere normal is radial
        neumann = self._sum_modes(
            lambda n, rr: k0 * (_jn(n, k0 * rr, True) + self.a[n] * _hn(n, k0 * rr, True)),
            r, mu,
        )
        # azimuthal (theta) gradient components vanish against the radial
        # normal, so the radial derivative is the full normal derivative
        phase = self.incident_phase
        return phase * dirichlet, phase * neumann


def solve_sphere_series(
    radius: float,
    center,
    k_out: complex,
    k_in: complex,
    sigma_out: float,
    sigma_in: float,
    direction=(0.0, 0.0, 1.0),
    nterms: int | None = None,
) -> SphereSeries:
    """Match pressure and sigma-weighted normal velocity mode by mode."""
    center = np.asarray(center, dtype=float)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    n_modes = nterms if nterms is not None else series_length(k_out, radius)

    x0 = k_out * radius
    x1 = k_in * radius
    orders = np.arange(n_modes + 1)
    j0 = _jn(orders, np.full(n_modes + 1, x0))
    j0p = _jn(orders, np.full(n_modes + 1, x0), True)
    h0 = _hn(orders, np.full(n_modes + 1, x0))
    h0p = _hn(orders, np.full(n_modes + 1, x0), True)
    j1 = _jn(orders, np.full(n_modes + 1, x1))
    j1p = _jn(orders, np.full(n_modes + 1, x1), True)

    a = np.zeros(n_modes + 1, dtype=complex)
    b = np.zeros(n_modes + 1, dtype=complex)
    w_out = sigma_out * k_out
    w_in = sigma_in * k_in
    for n in range(n_modes + 1):
        mat = np.array(
            [[h0[n], -j1[n]], [w_out * h0p[n], -w_in * j1p[n]]], dtype=complex
        )
        rhs = np.array([-j0[n], -w_out * j0p[n]], dtype=complex)
        try:
            sol = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(sol)):
            break
        a[n], b[n] = sol
    return SphereSeries(
        radius=float(radius),
        center=center,
        direction=direction,
        k_out=complex(k_out),
        k_in=complex(k_in),
        sigma_out=float(sigma_out),
        sigma_in=float(sigma_in),
        a=a,
        b=b,
    )
