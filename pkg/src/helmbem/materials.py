"""Acoustic media and the dispersion law that turns them into wavenumbers.

A medium is characterised by its density, sound speed and a power-law
attenuation model.  At a working frequency f the complex wavenumber is

    k = 2*pi*f/c + 1j * alpha * (f * 1e-6)**b

i.e. the attenuation coefficient is specified at 1 MHz and scaled with the
frequency exponent ``b``.  The transmission coefficient entering the
interface conditions is sigma = 1/rho.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["Material", "MATERIALS", "wavenumber", "sigma", "material"]


@dataclass(frozen=True)
class Material:
    """An acoustic medium.

    Parameters
    ----------
    name : str
        Identifier used in configs and benchmark records.
    rho : float
        Mass density [kg/m^3].
    c : float
        Speed of sound [m/s].
    alpha : float
        Attenuation at 1 MHz [Np/m].
    b : float
        Frequency power of the attenuation law.
    """

    name: str
    rho: float
    c: float
    alpha: float
    b: float

    def wavenumber(self, frequency: float) -> complex:
        """Complex wavenumber at ``frequency`` [Hz]."""
        if frequency <= 0.0:
            raise ValueError(f"frequency must be positive, got {frequency}")
        kr = 2.0 * 3.141592653589793 * frequency / self.c
        ki = self.alpha * (frequency * 1e-6) ** self.b
        return complex(kr, ki)

    @property
    def sigma(self) -> float:
        """Transmission coefficient 1/rho entering the Neumann jump."""
        return 1.0 / self.rho

    def lossless(self) -> "Material":
        """Copy of this medium with the attenuation switched off."""
        return Material(self.name + "-lossless", self.rho, self.c, 0.0, self.b)


#: Reference media used throughout the benchmark suite.
MATERIALS = {
    "water": Material("water", rho=1000.0, c=1500.0, alpha=0.015, b=2.0),
    "fat": Material("fat", rho=917.0, c=1412.0, alpha=9.334, b=1.0),
    "bone": Material("bone", rho=1912.0, c=4080.0, alpha=47.20, b=1.0),
}


def material(name: str) -> Material:
    """Look up a registered medium by name."""
    try:
        return MATERIALS[name]
    except KeyError:
        known = ", ".join(sorted(MATERIALS))
        raise KeyError(f"unknown material {name!r}; registered: {known}") from None


def wavenumber(mat: Material | str, frequency: float) -> complex:
    """Complex wavenumber of ``mat`` at ``frequency`` [Hz]."""
    if isinstance(mat, str):
        mat = material(mat)
    return mat.wavenumber(frequency)


def sigma(mat: Material | str) -> float:
    """Transmission coefficient 1/rho of ``mat``."""
    if isinstance(mat, str):
        mat = material(mat)
    return mat.sigma
