"""Separation-of-variables reference solution for a penetrable sphere in a
plane wave: special-function identities, physical limits, interface matching,
far-field decay, truncation and symmetry."""

import numpy as np
import pytest
from scipy.special import spherical_jn, spherical_yn

from helmbem.materials import material
from helmbem.sphere import SphereSeries, _hn, _jn, series_length, solve_sphere_series


def default_series(radius=0.005, f=5.0e5, interior="fat", **kw):
    w = material("water")
    m = material(interior)
    return solve_sphere_series(
        radius, (0, 0, 0), w.wavenumber(f), m.wavenumber(f), w.sigma, m.sigma, **kw
    )


def test_bessel_wronskian():
    # j_n(x) y_n'(x) - j_n'(x) y_n(x) = 1/x^2
    x = 2.7
    for n in range(21):
        w = spherical_jn(n, x) * spherical_yn(n, x, derivative=True) - spherical_jn(
            n, x, derivative=True
        ) * spherical_yn(n, x)
        assert abs(w - 1.0 / x ** 2) < 1e-10


def test_bessel_values():
    assert _jn(0, 1.0) == pytest.approx(0.8414709848078965, rel=1e-14)
    # outgoing kind, order zero: -i e^{iz} / z
    for z in (1.0 + 0.0j, 2.5 + 0.3j, 0.7 - 0.1j):
        assert _hn(0, z) == pytest.approx(-1j * np.exp(1j * z) / z, rel=1e-13)


def test_series_length_grows_with_size():
    assert series_length(2000.0, 0.005) < series_length(2000.0, 0.02)
    assert series_length(500.0, 0.005) < series_length(4000.0, 0.005)


def test_rigid_limit():
    # an interior medium carrying (effectively) no flux reflects like a
    # sound-hard sphere: a_n -> -j_n'(k0 R) / h_n'(k0 R)
    radius, f = 0.005, 5.0e5
    w = material("water")
    k0 = w.wavenumber(f).real
    s = solve_sphere_series(
        radius, (0, 0, 0), k0, 0.7 * k0, w.sigma, 1e-8 * w.sigma
    )
    x = k0 * radius
    for n in range(8):
        rigid = -_jn(n, x, derivative=True) / _hn(n, x, derivative=True)
        assert s.a[n] == pytest.approx(rigid, rel=1e-6)


def test_pressure_continuity_across_interface():
    s = default_series()
    rng = np.random.default_rng(12)
    d = rng.normal(size=(40, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    outside = s.total(d * s.radius * (1 + 1e-6))
    inside = s.total(d * s.radius * (1 - 1e-6))
    scale = np.max(np.abs(outside))
    # the residual is the normal-derivative term over the 2e-6 R gap,
    # i.e. of order |k| R * 2e-6 (measured 1.6e-5 of the field scale)
    assert np.max(np.abs(outside - inside)) < 5e-5 * scale


def test_flux_continuity_in_traces():
    # exterior Neumann trace equals (sigma_in/sigma_out) * interior normal
    # derivative; check it against a centred difference of the interior sum
    s = default_series()
    rng = np.random.default_rng(5)
    d = rng.normal(size=(10, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * s.radius
    _, psi = s.exterior_traces(pts)
    eps = 1e-6 * s.radius
    dn_in = (s.interior(d * (s.radius)) - s.interior(d * (s.radius - eps))) / eps
    ratio = s.sigma_in / s.sigma_out
    assert np.allclose(psi, ratio * dn_in, rtol=2e-4)


def test_far_field_decay():
    s = default_series()
    k0r = 120.0
    r1 = k0r / s.k_out.real
    lossless = solve_sphere_series(
        s.radius,
        (0, 0, 0),
        s.k_out.real,
        s.k_in.real,
        s.sigma_out,
        s.sigma_in,
    )
    for d in ([0, 0, 1.0], [1.0, 0, 0], [0.5, -0.5, 0.70710678]):
        d = np.asarray(d) / np.linalg.norm(d)
        p1 = lossless.scattered(d * r1)[0]
        p2 = lossless.scattered(d * 2 * r1)[0]
        assert abs(2 * r1 * p2) == pytest.approx(abs(r1 * p1), rel=0.02)


def test_truncation_is_converged():
    base = default_series()
    longer = default_series(nterms=2 * len(base.a))
    rng = np.random.default_rng(21)
    pts = rng.normal(size=(30, 3))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True) * (0.006 + 0.01 * rng.random((30, 1)))
    ref = np.max(np.abs(longer.total(pts)))
    assert np.max(np.abs(base.total(pts) - longer.total(pts))) < 1e-10 * ref


def test_rotation_invariance():
    # rotating the incidence direction and the observation points together
    # leaves the field unchanged
    theta = 0.7
    R = np.array(
        [
            [np.cos(theta), 0, np.sin(theta)],
            [0, 1, 0],
            [-np.sin(theta), 0, np.cos(theta)],
        ]
    )
    s1 = default_series()
    w = material("water")
    m = material("fat")
    s2 = solve_sphere_series(
        0.005,
        (0, 0, 0),
        w.wavenumber(5e5),
        m.wavenumber(5e5),
        w.sigma,
        m.sigma,
        direction=R @ np.array([0.0, 0.0, 1.0]),
    )
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(25, 3)) * 0.004
    ref = np.max(np.abs(s1.total(pts)))
    assert np.max(np.abs(s1.total(pts) - s2.total(pts @ R.T))) < 1e-12 * ref


def test_off_centre_sphere_is_translated_field():
    c = np.array([0.002, -0.001, 0.0015])
    s0 = default_series()
    w = material("water")
    m = material("fat")
    sc = solve_sphere_series(
        0.005, c, w.wavenumber(5e5), m.wavenumber(5e5), w.sigma, m.sigma
    )
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(20, 3)) * 0.004
    # translating the sphere along the propagation axis shifts the phase;
    # a transverse translation moves the whole pattern
    shifted = sc.scattered(pts + c)
    phase = np.exp(1j * sc.k_out * c[2])
    ref = np.max(np.abs(s0.scattered(pts)))
    assert np.max(np.abs(shifted - phase * s0.scattered(pts))) < 1e-10 * ref


def test_traces_match_field_limits():
    s = default_series()
    rng = np.random.default_rng(17)
    d = rng.normal(size=(15, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = d * s.radius
    phi, _ = s.exterior_traces(pts)
    assert np.allclose(phi, s.total(pts * (1 + 1e-8)), rtol=1e-6)


def test_interior_matches_exterior_representation_class():
    assert isinstance(default_series(), SphereSeries)
