import numpy as np
import pytest

from hill_gse.errors import ConfigError
from hill_gse.variational import J_of, multistart, rate_curve, solve_euler_lagrange


class TestConstantKernel:
    @pytest.mark.parametrize("lam", [-10.0, -100.0])
    def test_exact_half(self, const_kernel, lam):
        r = solve_euler_lagrange(const_kernel, lam)
        assert r.J_over_lambda2 == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(r.q_opt, lam, atol=1e-10 * abs(lam))


@pytest.fixture(scope="module")
def res(ou):
    return solve_euler_lagrange(ou, -10.0)


class TestOU:
    def test_feasible(self, res):
        assert res.residuals["eigenvalue"] <= 1e-6 * 10

    def test_signs(self, res):
        assert np.all(res.q_opt < 0)
        assert np.all(res.a_opt < 0)

    def test_euler_lagrange(self, res):
        for key in ("el", "consistency", "alpha"):
            assert res.residuals[key] <= 1e-6 * 10, key

    def test_no_worse_than_constant(self, ou, res):
        # q ≡ λ is feasible with J = λ²/(2K̂(0))
        assert res.J_value <= 100 / (2 * ou.sigma0_sq) * (1 + 1e-9)
        assert res.J_value == pytest.approx(J_of(ou, res.q_opt))

    def test_multistart_not_better(self, ou, res):
        best, values = multistart(ou, -10.0, n_starts=3)
        assert best.J_value <= res.J_value + 1e-9 * res.J_value
        assert len(values) >= 1


def test_rate_curve(ou):
    rows = rate_curve(ou, [-5.0, -10.0])
    assert [r.lam for r in rows] == [-5.0, -10.0]
    assert rows[0].target == pytest.approx(1 / (2 * ou.k0))


def test_positive_lambda_rejected(ou):
    with pytest.raises(ConfigError):
        solve_euler_lagrange(ou, 1.0)
