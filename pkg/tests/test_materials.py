"""Acoustic material table: registered media, wavenumbers, transmission weights."""

import numpy as np
import pytest

from helmbem.materials import MATERIALS, Material, material, sigma, wavenumber


def test_registry_contents():
    assert set(MATERIALS) == {"water", "fat", "bone"}
    table = {
        "water": (1000.0, 1500.0, 0.015, 2.0),
        "fat": (917.0, 1412.0, 9.334, 1.0),
        "bone": (1912.0, 4080.0, 47.20, 1.0),
    }
    for name, (rho, c, alpha, b) in table.items():
        m = material(name)
        assert m.name == name
        assert m.rho == rho
        assert m.c == c
        assert m.alpha == alpha
        assert m.b == b


def test_unknown_material_rejected():
    with pytest.raises(KeyError):
        material("jelly")
    with pytest.raises(KeyError):
        wavenumber("jelly", 1e6)


def test_water_wavenumber_at_1mhz():
    # 2*pi*1e6/1500 exactly, attenuation alpha*(f/1e6)^b = 0.015
    k = material("water").wavenumber(1.0e6)
    assert k.real == pytest.approx(4188.790204786391, rel=1e-13)
    assert k.imag == pytest.approx(0.015, rel=1e-13)


def test_bone_wavenumber_at_500khz():
    k = wavenumber("bone", 5.0e5)
    assert k.real == pytest.approx(769.998199409263, rel=1e-12)
    assert k.imag == pytest.approx(23.6, rel=1e-12)


def test_wavenumber_formula_all_media():
    for f in (1.0e5, 2.5e5, 5.0e5, 1.0e6):
        for name in MATERIALS:
            m = material(name)
            k = m.wavenumber(f)
            assert k.real == pytest.approx(2.0 * np.pi * f / m.c, rel=1e-13)
            assert k.imag == pytest.approx(m.alpha * (f * 1e-6) ** m.b, rel=1e-13)


def test_wavenumber_accepts_material_or_name():
    m = material("fat")
    assert wavenumber(m, 3.3e5) == wavenumber("fat", 3.3e5)


def test_sigma_is_inverse_density():
    assert material("water").sigma == pytest.approx(1e-3, rel=1e-15)
    assert sigma("fat") == pytest.approx(1.0 / 917.0, rel=1e-15)
    assert sigma(material("bone")) == pytest.approx(1.0 / 1912.0, rel=1e-15)


def test_lossless_strips_attenuation_only():
    m = material("fat")
    ml = m.lossless()
    assert ml.alpha == 0.0
    assert ml.rho == m.rho and ml.c == m.c and ml.b == m.b
    k = ml.wavenumber(1e6)
    assert k.imag == 0.0
    assert k.real == m.wavenumber(1e6).real


def test_custom_material():
    m = Material("gel", 1050.0, 1540.0, 0.5, 1.1)
    assert m.sigma == pytest.approx(1.0 / 1050.0)
    k = m.wavenumber(2e5)
    assert k.imag == pytest.approx(0.5 * 0.2 ** 1.1, rel=1e-13)
