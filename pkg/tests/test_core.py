import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from collapselab.core import UnitSystem, characteristic_scales, make_probe_params
from collapselab.errors import InvalidParameterError

SANE = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


class TestMakeProbeParams:
    def test_default_probe_values(self, params):
        assert params.omega_G == pytest.approx(1.0, abs=1e-15)
        assert params.D_p == pytest.approx(0.5, abs=1e-15)
        assert params.sigma_inf_sq == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)
        assert params.V_R == pytest.approx(4.0 * math.pi / 3.0, rel=1e-15)

    def test_heavier_ball(self):
        p = make_probe_params(4.0, 1.0, 0.5)
        assert p.omega_G == pytest.approx(2.0, rel=1e-15)
        assert p.D_p == pytest.approx(8.0, rel=1e-15)

    def test_lam_quadrupling_halves_equilibrium_width(self):
        base = make_probe_params(1.0, 1.0, 0.5)
        quad = make_probe_params(1.0, 1.0, 2.0)
        assert quad.sigma_inf_sq == pytest.approx(base.sigma_inf_sq / 2.0, rel=1e-12)

    @pytest.mark.parametrize("field,args", [
        ("M", (0.0, 1.0, 0.5)),
        ("M", (-2.0, 1.0, 0.5)),
        ("R", (1.0, float("nan"), 0.5)),
        ("R", (1.0, float("inf"), 0.5)),
        ("lam", (1.0, 1.0, 0.0)),
        ("lam", (1.0, 1.0, -0.5)),
    ])
    def test_rejects_bad_inputs_naming_field(self, field, args):
        with pytest.raises(InvalidParameterError) as err:
            make_probe_params(*args)
        assert field in str(err.value)

    def test_rejects_bad_units(self):
        with pytest.raises(InvalidParameterError) as err:
            UnitSystem(hbar=0.0)
        assert "hbar" in str(err.value)
        with pytest.raises(InvalidParameterError) as err:
            UnitSystem(G=-1.0)
        assert "G" in str(err.value)

    @settings(max_examples=25, deadline=None)
    @given(M=SANE, R=SANE, lam=SANE)
    def test_derived_scales_consistent(self, M, R, lam):
        p = make_probe_params(M, R, lam)
        assert p.omega_G == pytest.approx(math.sqrt(M / R**3), rel=1e-12)
        assert p.D_p == pytest.approx(lam * M * p.omega_G**2, rel=1e-12)
        assert p.sigma_inf_sq == pytest.approx(
            1.0 / (2.0 * M * p.omega_G * math.sqrt(lam)), rel=1e-12
        )

    def test_frozen(self, params):
        with pytest.raises(Exception):
            params.M = 2.0


class TestCharacteristicScales:
    def test_default_scales(self, params):
        scales = characteristic_scales(params)
        assert scales.t_osc == pytest.approx(1.0, abs=1e-15)
        assert scales.t_collapse == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)
        assert scales.dt_recommended == pytest.approx(0.0035355339, rel=1e-6)
        assert scales.L_recommended == pytest.approx(33.6358566, rel=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(M=SANE, R=SANE, lam=SANE)
    def test_hints_track_their_scales(self, M, R, lam):
        p = make_probe_params(M, R, lam)
        scales = characteristic_scales(p)
        assert scales.dt_recommended <= 0.005 * scales.t_osc + 1e-18
        assert scales.dt_recommended <= 0.005 * scales.t_collapse + 1e-18
        assert scales.L_recommended == pytest.approx(
            40.0 * math.sqrt(p.sigma_inf_sq), rel=1e-12
        )
