"""Electrical parameters of an actin monomer, derived from physical inputs.

All quantities are SI.  The derivation chain is

    Bjerrum length -> capacitance, inductance, resistances

and a lumped cell made of ``n`` monomers combines them with the usual
series/parallel rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy import constants as _const

from .errors import DomainError

# CODATA values, SI units.
ELEMENTARY_CHARGE = _const.e  # C
VACUUM_PERMITTIVITY = _const.epsilon_0  # F/m
BOLTZMANN = _const.k  # J/K
VACUUM_PERMEABILITY = _const.mu_0  # H/m


@dataclass(frozen=True)
class DerivationInputs:
    """Physical constants and geometry of the filament and its ionic sheath."""

    temperature: float = 293.0  # K
    dielectric_constant: float = 80.0
    monomer_length: float = 5.4e-9  # m
    actin_radius: float = 2.5e-9  # m
    ion_size: float = 3.6e-10  # m
    magnetic_permeability: float = VACUUM_PERMEABILITY  # H/m
    conc_K: float = 0.15  # mol/L
    conc_Na: float = 0.02  # mol/L
    molar_conductivity_K: float = 7.4  # (ohm m)^-1 M^-1
    molar_conductivity_Na: float = 5.0  # (ohm m)^-1 M^-1
    r2_ratio: float = 7.0

    def __post_init__(self):
        positive = (
            "temperature",
            "dielectric_constant",
            "monomer_length",
            "actin_radius",
            "ion_size",
            "magnetic_permeability",
            "molar_conductivity_K",
            "molar_conductivity_Na",
            "r2_ratio",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        for name in ("conc_K", "conc_Na"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be non-negative, got {value!r}")


@dataclass(frozen=True)
class CellParams:
    """Per-cell coefficients of the lattice equation."""

    R1: float  # ohm, series resistance
    R2: float  # ohm, coupling resistance
    L: float  # H
    C0: float  # F
    b: float = 0.0  # 1/V, capacitor nonlinearity
    n_monomers: int = 1

    def __post_init__(self):
        for name in ("L", "C0"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        # Zero resistance is the lossless limit used by conservation checks.
        for name in ("R1", "R2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be non-negative and finite, got {value!r}")
        if not (math.isfinite(self.b) and self.b >= 0):
            raise DomainError(f"b must be non-negative, got {self.b!r}")
        if int(self.n_monomers) != self.n_monomers or self.n_monomers < 1:
            raise DomainError(f"n_monomers must be an integer >= 1, got {self.n_monomers!r}")


# Reference set used for the pulse-propagation and unforced-gate runs.
REFERENCE_PARAMS = CellParams(R1=6.11e6, R2=0.9e6, L=1.7e-12, C0=96e-18)
# Resistances used for the forced (sinusoidally driven) gates.
FORCED_PARAMS = CellParams(R1=9.23e6, R2=1.32e6, L=1.7e-12, C0=96e-18)


def bjerrum_length(inputs: DerivationInputs) -> float:
    """Distance at which two elementary charges interact with energy k_B T (m)."""
    return ELEMENTARY_CHARGE**2 / (
        4 * math.pi * inputs.dielectric_constant * VACUUM_PERMITTIVITY * BOLTZMANN * inputs.temperature
    )


def _log_factor(inputs: DerivationInputs, lambda_b: float) -> float:
    if not (math.isfinite(lambda_b) and lambda_b > 0):
        raise DomainError(f"lambda_b must be positive, got {lambda_b!r}")
    return math.log((inputs.actin_radius + lambda_b) / inputs.actin_radius)


def monomer_capacitance(inputs: DerivationInputs, lambda_b: float) -> float:
    """Coaxial capacitance of one monomer with a sheath of thickness ``lambda_b`` (F)."""
    return (
        2 * math.pi * inputs.dielectric_constant * VACUUM_PERMITTIVITY * inputs.monomer_length
        / _log_factor(inputs, lambda_b)
    )


def turns_per_monomer(inputs: DerivationInputs) -> float:
    """Number of ion 'windings' along one monomer, kept as a real number."""
    return inputs.monomer_length / inputs.ion_size


def monomer_inductance(inputs: DerivationInputs, lambda_b: float) -> float:
    """Solenoid inductance of the ion sheath around one monomer (H)."""
    if not (math.isfinite(lambda_b) and lambda_b > 0):
        raise DomainError(f"lambda_b must be positive, got {lambda_b!r}")
    n_turns = turns_per_monomer(inputs)
    radius = inputs.actin_radius + lambda_b
    return inputs.magnetic_permeability * n_turns**2 * math.pi * radius**2 / inputs.monomer_length


def solution_resistivity(inputs: DerivationInputs) -> float:
    """Resistivity of the K+/Na+ solution (ohm m)."""
    conductivity = (
        inputs.molar_conductivity_K * inputs.conc_K + inputs.molar_conductivity_Na * inputs.conc_Na
    )
    if conductivity <= 0:
        raise DomainError("at least one ion concentration must be positive")
    return 1.0 / conductivity


def monomer_resistances(inputs: DerivationInputs, lambda_b: float, rho: float) -> tuple[float, float]:
    """Return ``(R1, R2)`` in ohms; ``R2 = R1 / r2_ratio``."""
    if not (math.isfinite(rho) and rho > 0):
        raise DomainError(f"rho must be positive, got {rho!r}")
    r1 = rho * _log_factor(inputs, lambda_b) / (2 * math.pi * inputs.monomer_length)
    return r1, r1 / inputs.r2_ratio


@dataclass(frozen=True)
class DerivedParams:
    bjerrum_length: float
    capacitance: float
    inductance: float
    resistivity: float
    R1: float
    R2: float

    def cell_params(self, b: float = 0.0) -> CellParams:
        return CellParams(R1=self.R1, R2=self.R2, L=self.inductance, C0=self.capacitance, b=b)


def derive_params(inputs: DerivationInputs | None = None) -> DerivedParams:
    """Run the full derivation pipeline."""
    inputs = inputs or DerivationInputs()
    lam = bjerrum_length(inputs)
    rho = solution_resistivity(inputs)
    r1, r2 = monomer_resistances(inputs, lam, rho)
    return DerivedParams(
        bjerrum_length=lam,
        capacitance=monomer_capacitance(inputs, lam),
        inductance=monomer_inductance(inputs, lam),
        resistivity=rho,
        R1=r1,
        R2=r2,
    )


def lump_cell_params(base: CellParams, n: int) -> CellParams:
    """Combine ``n`` identical cells into one.

    R1 and L add in series, R2 adds in parallel, capacitances add.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    n = int(n)
    return replace(
        base,
        R1=base.R1 * n,
        R2=base.R2 / n,
        L=base.L * n,
        C0=base.C0 * n,
        n_monomers=base.n_monomers * n,
    )
