import numpy as np
import pytest
from scipy.special import mathieu_a

from hill_gse.errors import ConfigError
from hill_gse.hill import (
    DiscriminantSolver,
    galerkin_matrix,
    ground_energies,
    ground_state,
    ground_state_discriminant,
    ground_state_galerkin,
)
from hill_gse.kernel import grid
from hill_gse.sampler import sample_batch


# lowest eigenvalue for q = 2cos(2πx): 30-digit mpmath eigensolve in the
# e^{2πikx} basis, |k| <= 20 (a double-precision dense solve at |k| <= 64
# loses ~1e-10 to the (2πk)² diagonal)
COS_LAMBDA0 = -0.0506038419984086588014258153245


class TestExact:
    @pytest.mark.parametrize("c", [-3.0, 0.0, 2.5])
    @pytest.mark.parametrize("method", ["galerkin", "discriminant"])
    def test_constant_potential(self, c, method):
        gs = ground_state(np.full(256, c), method)
        assert abs(gs.lambda0 - c) < 1e-10
        np.testing.assert_allclose(gs.psi, 1.0, atol=1e-8)

    @pytest.mark.parametrize("method", ["galerkin", "discriminant"])
    def test_cosine_oracle(self, method):
        q = 2 * np.cos(2 * np.pi * grid(512))
        assert ground_state(q, method).lambda0 == pytest.approx(COS_LAMBDA0, abs=1e-10)

    def test_cosine_oracle_value(self):
        # Mathieu form y'' + (a - 2h cos 2t) y = 0 with h = 1/π², λ = π² a₀(h)
        assert np.pi**2 * mathieu_a(0, 1 / np.pi**2) == pytest.approx(COS_LAMBDA0, abs=1e-13)

    def test_free_discriminant(self):
        s = DiscriminantSolver(np.zeros(64), 1024)
        for lam in (-4.0, -1.0):
            assert s.discriminant(lam) == pytest.approx(2 * np.cosh(np.sqrt(-lam)), rel=1e-12)
        assert s.discriminant(3.0) == pytest.approx(2 * np.cos(np.sqrt(3.0)), abs=1e-10)


class TestSolvers:
    def test_cross_solver(self, ou):
        b = sample_batch(ou, 20, seed=3)
        for q in b.values:
            g = ground_state_galerkin(q).lambda0
            d = ground_state_discriminant(q).lambda0
            assert abs(g - d) <= 1e-8 * (1 + np.abs(q).max())

    def test_batched_energies(self, ou):
        b = sample_batch(ou, 8, seed=4)
        e = ground_energies(b.values)
        ref = [ground_state_galerkin(q).lambda0 for q in b.values]
        np.testing.assert_allclose(e, ref, atol=1e-10)

    def test_eigenfunction(self, ou):
        q = sample_batch(ou, 1, seed=6).values[0]
        gs = ground_state_galerkin(q)
        assert gs.psi.min() > 0
        assert np.mean(gs.psi**2) == pytest.approx(1.0, rel=1e-10)
        assert gs.residual < 1e-9

    def test_det_one(self, ou):
        q = sample_batch(ou, 1, seed=6).values[0]
        assert DiscriminantSolver(q).monodromy(-50.0).det == pytest.approx(1.0, abs=1e-9)

    def test_multipliers(self):
        m = DiscriminantSolver(np.zeros(64), 1024).monodromy(-1.0)
        mu, inv = m.multipliers()
        assert mu == pytest.approx(np.e, rel=1e-10)
        assert mu * inv == pytest.approx(1.0)

    def test_galerkin_matrix_symmetric(self, ou):
        q = sample_batch(ou, 1, seed=8).values[0]
        H = galerkin_matrix(q, 16)
        np.testing.assert_allclose(H, H.T, atol=1e-15)

    def test_galerkin_matches_complex_basis(self):
        x = grid(128)
        q = 0.7 * np.cos(2 * np.pi * x) - 1.3 * np.sin(4 * np.pi * x) + 0.2
        qhat = {0: 0.2, 1: 0.35, -1: 0.35, 2: 1.3 / 2j * -1, -2: -1.3 / 2j * -1}
        ref = np.sort(np.linalg.eigvalsh(_complex_matrix(qhat, 10)))
        np.testing.assert_allclose(np.linalg.eigvalsh(galerkin_matrix(q, 10)), ref, atol=1e-11)


def _complex_matrix(qhat, M):
    k = np.arange(-M, M + 1)
    H = np.diag((2 * np.pi * k) ** 2).astype(complex)
    for i, a in enumerate(k):
        for j, b in enumerate(k):
            H[i, j] += qhat.get(a - b, 0.0)
    return H


class TestValidation:
    def test_bad_ode_steps(self):
        with pytest.raises(ConfigError):
            DiscriminantSolver(np.zeros(64), 100)

    def test_bad_modes(self):
        with pytest.raises(ConfigError):
            galerkin_matrix(np.zeros(64), 40)

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            ground_state(np.zeros(64), "lanczos")
