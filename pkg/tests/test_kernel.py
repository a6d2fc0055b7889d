import numpy as np
import pytest

from hill_gse.errors import ConfigError, NotInCameronMartinSpace
from hill_gse.kernel import (
    from_spectrum,
    kernel_from_config,
    make_kernel_from_coeffs,
    make_ou_kernel,
    ou_closed_form,
    spectrum,
)


class TestOU:
    def test_k0_against_closed_form(self, ou):
        # K(0) = coth(m/2) / (2m) for the periodic OU kernel
        exact = 1.0 / np.tanh(0.5) / 2.0
        assert abs(exact - 1.0819767068693265) < 1e-15
        assert 0 <= exact - ou.k0 <= ou.truncation_error

    def test_values_against_closed_form(self, ou):
        err = np.abs(ou.values - ou_closed_form(1.0, ou.x)).max()
        assert err <= ou.truncation_error + 1e-14

    def test_mean_mode(self, ou):
        assert ou.sigma0_sq == pytest.approx(1.0)
        assert np.mean(ou.values) == pytest.approx(ou.sigma0_sq, abs=1e-14)

    def test_eval_matches_grid(self, ou):
        np.testing.assert_allclose(ou.eval(ou.x[:16]), ou.values[:16], atol=1e-13)

    def test_normalized(self):
        k = make_ou_kernel(2.0, normalize=True)
        assert k.sigma0_sq == pytest.approx(1.0)
        assert k.to_config()["normalize"] is True


class TestOperator:
    def test_quad_forms_are_inverse(self, ou):
        rng = np.random.default_rng(0)
        c = np.zeros(ou.grid_size // 2 + 1, dtype=complex)
        c[:40] = rng.normal(size=40) + 1j * rng.normal(size=40)
        c[0] = c[0].real
        f = from_spectrum(c, ou.grid_size)
        assert ou.quad_form_inv(ou.apply(f)) == pytest.approx(ou.quad_form(f), rel=1e-10)

    def test_cm_inner_symmetric_part(self, ou):
        rng = np.random.default_rng(1)
        f = ou.apply(rng.normal(size=ou.grid_size))
        assert ou.cm_inner(f, f) == pytest.approx(ou.quad_form_inv(f), rel=1e-12)

    def test_unrepresented_mode_raises(self):
        k = make_kernel_from_coeffs([1.0, 0.5], grid_size=64)
        f = np.cos(2 * np.pi * 5 * k.x)
        with pytest.raises(NotInCameronMartinSpace):
            k.quad_form_inv(f)

    def test_modulus_of_continuity(self, ou):
        assert ou.modulus_of_continuity(0) == 0.0
        assert ou.modulus_of_continuity(1) > 0.0

    def test_spectrum_roundtrip(self):
        x = np.random.default_rng(2).normal(size=64)
        np.testing.assert_allclose(from_spectrum(spectrum(x), 64), x, atol=1e-13)


class TestConfig:
    def test_roundtrip(self, ou):
        k = kernel_from_config(ou.to_config())
        np.testing.assert_array_equal(k.coeffs, ou.coeffs)

    def test_coeffs_roundtrip(self):
        k = make_kernel_from_coeffs([1.0, 0.25], grid_size=128)
        k2 = kernel_from_config(k.to_config())
        np.testing.assert_array_equal(k.coeffs, k2.coeffs)

    @pytest.mark.parametrize("cfg", [
        {"type": "ou"},
        {"type": "ou", "m": -1.0},
        {"type": "coeffs", "values": [0.0, 1.0]},
        {"type": "coeffs", "values": [1.0, -0.1]},
        {"type": "ou", "m": 1.0, "grid_size": 100},
        {"type": "bessel"},
    ])
    def test_invalid(self, cfg):
        with pytest.raises(ConfigError):
            kernel_from_config(cfg)
