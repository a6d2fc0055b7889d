import numpy as np
import pytest

from hill_gse.errors import ConfigError
from hill_gse.hill import DiscriminantSolver
from hill_gse.riccati import (
    FloquetProblem,
    check_lemma21,
    floquet_solve,
    jacobian_J,
    phi,
    phi_batch,
    reconstruct_potential,
)
from hill_gse.sampler import sample_batch


@pytest.fixture(scope="module")
def qt(ou):
    return sample_batch(ou, 6, seed=21).tilde


class TestPhi:
    @pytest.mark.parametrize("method", ["galerkin", "discriminant"])
    def test_zero(self, method):
        assert abs(phi(np.zeros(256), method).phi) < 1e-12

    def test_paths_agree(self, qt):
        for q in qt[:3]:
            g, d = phi(q, "galerkin"), phi(q, "discriminant")
            assert g.phi == pytest.approx(d.phi, abs=1e-8)
            assert d.phi == pytest.approx(d.phi_logderiv, abs=1e-8)

    def test_batch(self, qt):
        np.testing.assert_allclose(phi_batch(qt), [phi(q, "galerkin").phi for q in qt], atol=1e-10)

    def test_nonnegative(self, qt):
        assert np.all(phi_batch(qt) >= 0)

    def test_requires_mean_zero(self, qt):
        with pytest.raises(ConfigError):
            phi(qt[0] + 0.1)


class TestFloquet:
    def test_log_multiplier(self, qt):
        d = floquet_solve(qt[0], 0.8)
        assert np.mean(d.p) == pytest.approx(0.8, abs=1e-8)
        assert d.phi == pytest.approx(d.phi_logderiv, abs=1e-8)

    def test_energy_decreases(self, qt):
        prob = FloquetProblem(qt[1])
        lams = [prob.lambda_at(s) for s in (0.0, 0.5, 1.0, 2.0)]
        assert np.all(np.diff(lams) < 0)

    @pytest.mark.parametrize("s", [0.0, 0.7])
    def test_reconstruction(self, qt, s):
        steps = 8192
        d = FloquetProblem(qt[2], steps).solve(s)
        ref = DiscriminantSolver(qt[2], steps).qf[::2]
        assert np.abs(reconstruct_potential(d) - ref).max() < 1e-7


class TestJacobian:
    @pytest.mark.parametrize("s", [0.3, 1.0, 2.0])
    def test_free_case(self, s):
        # q̃ = 0: q₀(s) = λ + s², so J = 2s
        assert jacobian_J(np.zeros(128), s) == pytest.approx(2 * s, rel=1e-6)

    @pytest.mark.parametrize("s", [0.3, 1.0, 2.0])
    def test_two_routes(self, qt, s):
        prob = FloquetProblem(qt[3])
        assert prob.jacobian(s) == pytest.approx(prob.jacobian_discriminant(s), rel=1e-6)

    def test_requires_positive_s(self, qt):
        with pytest.raises(ConfigError):
            jacobian_J(qt[0], 0.0)


class TestUnitSlope:
    def test_unit_slope(self, qt):
        rep = check_lemma21(qt[4], 0.6, -1.5)
        assert abs(rep.slope - 1.0) <= 1e-12
        assert abs(rep.slope_direct - 1.0) <= 1e-9
        assert rep.ok
