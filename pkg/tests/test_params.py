import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from actin_rlc.errors import DomainError
from actin_rlc.params import (
    FORCED_PARAMS,
    REFERENCE_PARAMS,
    CellParams,
    DerivationInputs,
    bjerrum_length,
    derive_params,
    lump_cell_params,
    monomer_capacitance,
    monomer_inductance,
    monomer_resistances,
    solution_resistivity,
    turns_per_monomer,
)

# Frozen from an independent 30-digit evaluation with CODATA 2022 constants.
ORACLE = {
    "bjerrum_length": 7.1288799823e-10,
    "bjerrum_length_eps40": 1.42577599646e-9,
    "capacitance": 9.5795958997e-17,
    "inductance": 1.69800774736e-12,
    "resistivity": 0.826446280992,
    "R1": 6110913.79692,
    "R2": 872987.685274,
}

DEFAULTS = DerivationInputs()


class TestReferenceValues:
    def test_bjerrum_length(self):
        assert bjerrum_length(DEFAULTS) == pytest.approx(7.1e-10, rel=0.02)

    def test_capacitance(self):
        assert derive_params().capacitance == pytest.approx(96e-18, rel=0.05)

    def test_inductance(self):
        assert derive_params().inductance == pytest.approx(1.7e-12, rel=0.05)

    def test_resistances(self):
        d = derive_params()
        assert d.R1 == pytest.approx(6.11e6, rel=0.05)
        assert d.R2 == pytest.approx(0.87e6, rel=0.05)
        assert d.R2 == pytest.approx(0.9e6, rel=0.05)

    def test_turns_per_monomer(self):
        assert turns_per_monomer(DEFAULTS) == pytest.approx(15.0, rel=1e-12)

    def test_shipped_parameter_sets(self):
        assert (REFERENCE_PARAMS.R1, REFERENCE_PARAMS.R2) == (6.11e6, 0.9e6)
        assert (REFERENCE_PARAMS.L, REFERENCE_PARAMS.C0) == (1.7e-12, 96e-18)
        assert (FORCED_PARAMS.R1, FORCED_PARAMS.R2) == (9.23e6, 1.32e6)


class TestOracle:
    def test_pipeline_matches_oracle(self):
        d = derive_params()
        for key in ("bjerrum_length", "capacitance", "inductance", "resistivity", "R1", "R2"):
            assert getattr(d, key) == pytest.approx(ORACLE[key], rel=1e-9), key

    def test_bjerrum_length_halved_dielectric(self):
        lam = bjerrum_length(replace(DEFAULTS, dielectric_constant=40.0))
        assert lam == pytest.approx(ORACLE["bjerrum_length_eps40"], rel=1e-9)
        assert lam == pytest.approx(1.426e-9, rel=1e-3)

    def test_inductance_direct(self):
        # r_actin + lambda_B = 3.21 nm, N = 15
        assert monomer_inductance(DEFAULTS, 0.71e-9) == pytest.approx(1.695e-12, rel=1e-3)

    def test_resistance_chain(self):
        r1, _ = monomer_resistances(DEFAULTS, 7.1e-10, 0.8264)
        assert r1 == pytest.approx(6.09e6, rel=2e-3)

    def test_resistivity(self):
        assert solution_resistivity(DEFAULTS) == pytest.approx(1 / 1.21, rel=1e-12)


class TestScaling:
    def test_temperature_doubled_halves_bjerrum(self):
        hot = replace(DEFAULTS, temperature=2 * DEFAULTS.temperature)
        assert bjerrum_length(hot) == pytest.approx(bjerrum_length(DEFAULTS) / 2, rel=1e-14)

    def test_capacitance_linear_in_length(self):
        lam = bjerrum_length(DEFAULTS)
        long = replace(DEFAULTS, monomer_length=2 * DEFAULTS.monomer_length)
        assert monomer_capacitance(long, lam) == pytest.approx(2 * monomer_capacitance(DEFAULTS, lam), rel=1e-14)

    def test_ion_size_doubled_quarters_inductance(self):
        lam = bjerrum_length(DEFAULTS)
        big = replace(DEFAULTS, ion_size=2 * DEFAULTS.ion_size)
        assert monomer_inductance(big, lam) == pytest.approx(monomer_inductance(DEFAULTS, lam) / 4, rel=1e-14)

    def test_single_salt_resistivity(self):
        assert solution_resistivity(replace(DEFAULTS, conc_Na=0.0)) == pytest.approx(1 / 1.11, rel=1e-12)

    def test_doubled_concentrations_halve_resistivity(self):
        dbl = replace(DEFAULTS, conc_K=0.3, conc_Na=0.04)
        assert solution_resistivity(dbl) == pytest.approx(solution_resistivity(DEFAULTS) / 2, rel=1e-14)

    def test_unit_ratio(self):
        r1, r2 = monomer_resistances(replace(DEFAULTS, r2_ratio=1.0), 7e-10, 0.8)
        assert r1 == r2

    def test_bjerrum_decreasing_on_grid(self):
        temps = np.linspace(250, 350, 10)
        eps = np.linspace(20, 100, 10)
        grid = np.array([[bjerrum_length(replace(DEFAULTS, temperature=t, dielectric_constant=e)) for e in eps] for t in temps])
        assert np.all(np.diff(grid, axis=0) < 0)
        assert np.all(np.diff(grid, axis=1) < 0)

    def test_deterministic(self):
        assert derive_params() == derive_params()


class TestErrors:
    def test_zero_bjerrum_length_rejected(self):
        with pytest.raises(DomainError):
            monomer_capacitance(DEFAULTS, 0.0)

    def test_no_ions_rejected(self):
        with pytest.raises(DomainError):
            solution_resistivity(replace(DEFAULTS, conc_K=0.0, conc_Na=0.0))

    @pytest.mark.parametrize("field", ["temperature", "dielectric_constant", "monomer_length", "ion_size", "r2_ratio"])
    def test_non_positive_inputs(self, field):
        with pytest.raises(DomainError):
            replace(DEFAULTS, **{field: 0.0})

    def test_cell_params_validation(self):
        with pytest.raises(DomainError):
            CellParams(R1=1.0, R2=1.0, L=0.0, C0=1.0)
        with pytest.raises(DomainError):
            CellParams(R1=-1.0, R2=1.0, L=1.0, C0=1.0)
        with pytest.raises(DomainError):
            CellParams(R1=1.0, R2=1.0, L=1.0, C0=1.0, b=-0.1)
        with pytest.raises(DomainError):
            CellParams(R1=1.0, R2=1.0, L=1.0, C0=1.0, b=math.nan)

    def test_lossless_limit_allowed(self):
        assert CellParams(R1=0.0, R2=0.0, L=1.0, C0=1.0).R1 == 0.0


class TestLumping:
    def test_identity(self):
        assert lump_cell_params(REFERENCE_PARAMS, 1) == REFERENCE_PARAMS

    def test_ten_monomers(self):
        p = lump_cell_params(REFERENCE_PARAMS, 10)
        assert p.R1 == pytest.approx(61.1e6, rel=1e-14)
        assert p.R2 == pytest.approx(0.09e6, rel=1e-14)
        assert p.L == pytest.approx(17e-12, rel=1e-14)
        assert p.C0 == pytest.approx(960e-18, rel=1e-14)
        assert p.n_monomers == 10
        assert p.b == REFERENCE_PARAMS.b

    def test_rejects_zero(self):
        with pytest.raises(DomainError):
            lump_cell_params(REFERENCE_PARAMS, 0)

    @given(st.integers(1, 12), st.integers(1, 12))
    def test_composition(self, n, m):
        a = lump_cell_params(lump_cell_params(REFERENCE_PARAMS, n), m)
        b = lump_cell_params(REFERENCE_PARAMS, n * m)
        assert a.n_monomers == b.n_monomers
        for f in ("R1", "R2", "L", "C0"):
            assert getattr(a, f) == pytest.approx(getattr(b, f), rel=1e-14)

    @given(st.integers(1, 50))
    def test_rc_timescale(self, n):
        p = lump_cell_params(REFERENCE_PARAMS, n)
        assert p.R1 * p.C0 == pytest.approx(n * n * REFERENCE_PARAMS.R1 * REFERENCE_PARAMS.C0, rel=1e-14)
