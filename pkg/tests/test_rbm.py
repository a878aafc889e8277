import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from beam.rbm import (
    LayerKind,
    RbmModel,
    all_binary_states,
    energy,
    exact_log_partition,
    gibbs_step,
    hidden_conditional,
    hidden_mean_activation,
    neg_energy_grad,
    sample_hidden,
    visible_conditional,
)
from conftest import joint_table, param_fd, rel_err

G = LayerKind.GAUSSIAN


def gauss_1x1(w=0.0, b=0.0):
    return RbmModel([0.0], [0.0], [b], [[w]], G)


class TestEnergy:
    def test_zero_model_is_zero(self):
        model = RbmModel.zeros(3, 2)
        states = all_binary_states(5)
        assert np.all(energy(model, states[:, :3], states[:, 3:]) == 0)

    def test_gaussian_quadratic_term(self):
        assert energy(gauss_1x1(), [1.5], [1.0]) == pytest.approx(1.125)

    def test_gaussian_coupling_cancels(self):
        assert energy(gauss_1x1(w=1.0), [2.0], [1.0]) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            energy(RbmModel.zeros(2, 1), [1.0, 0.0, 1.0], [1.0])


class TestConditionals:
    def test_zero_model_hidden_half(self):
        np.testing.assert_allclose(hidden_conditional(RbmModel.zeros(3, 4), np.ones(3)), 0.5)

    @pytest.mark.parametrize("beta,expected", [(1.0, 0.8807970779778823), (0.5, 0.7310585786300049)])
    def test_hidden_bias_scaled_by_beta(self, beta, expected):
        model = RbmModel([0.0], [0.0], [2.0], [[0.0]])
        assert hidden_conditional(model, [1.0], beta)[0] == pytest.approx(expected, abs=1e-4)

    def test_gaussian_visible_decoupled(self):
        model = RbmModel([0.3, -1.0], [0.2, -0.1], [0.0], [[0.0], [0.0]], G)
        mean, var = visible_conditional(model, [1.0])
        np.testing.assert_allclose(mean, model.visible_loc)
        np.testing.assert_allclose(var, model.variance)

    @pytest.mark.parametrize("beta,var", [(1.0, 1.0), (4.0, 0.25)])
    def test_gaussian_visible_tempered(self, beta, var):
        mean, v = visible_conditional(gauss_1x1(w=3.0), [1.0], beta)
        assert mean[0] == pytest.approx(3.0)
        assert v[0] == pytest.approx(var)

    def test_mean_activation_is_beta_one_conditional(self, rng):
        model = RbmModel.random(4, 3, rng, G)
        v = rng.normal(size=(5, 4))
        np.testing.assert_array_equal(hidden_mean_activation(model, v), hidden_conditional(model, v, 1.0))
        np.testing.assert_array_equal(hidden_mean_activation(model, v), hidden_mean_activation(model, v))

    def test_factorization(self, rng):
        model = RbmModel.random(3, 3, rng)
        hs = all_binary_states(3)
        for v in all_binary_states(3):
            logw = -energy(model, np.tile(v, (len(hs), 1)), hs)
            joint = np.exp(logw - logw.max())
            joint /= joint.sum()
            p = hidden_conditional(model, v)
            product = np.prod(np.where(hs == 1, p, 1 - p), axis=1)
            np.testing.assert_allclose(joint, product, rtol=1e-12)


class TestGibbs:
    def test_fair_coins(self, rng):
        model = RbmModel.zeros(3, 2)
        v = np.zeros((1000, 3))
        total_v = np.zeros(3)
        total_h = np.zeros(2)
        for _ in range(100):
            v, h = gibbs_step(model, v, 1.0, rng)
            total_v += v.sum(0)
            total_h += h.sum(0)
        np.testing.assert_allclose(total_v / 1e5, 0.5, atol=0.01)
        np.testing.assert_allclose(total_h / 1e5, 0.5, atol=0.01)

    def test_deterministic_given_seed(self):
        model = RbmModel.random(4, 3, np.random.default_rng(0), G)
        v0 = np.zeros((10, 4))
        a = gibbs_step(model, v0, 1.0, np.random.default_rng(5))
        b = gibbs_step(model, v0, 1.0, np.random.default_rng(5))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_temperature_equals_scaled_energy(self):
        model = RbmModel.random(3, 2, np.random.default_rng(3))
        v0 = (np.random.default_rng(4).random((500, 3)) < 0.5).astype(float)
        beta = 0.37
        a = gibbs_step(model, v0, beta, np.random.default_rng(9))
        b = gibbs_step(model.scaled(beta), v0, 1.0, np.random.default_rng(9))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_sample_hidden_shape(self, rng):
        model = RbmModel.random(4, 3, rng)
        assert sample_hidden(model, np.zeros((7, 4)), 1.0, rng).shape == (7, 3)


class TestNegEnergyGrad:
    def test_weight_component(self):
        g = neg_energy_grad(gauss_1x1(), [2.0], [1.0])
        assert g.weights[0, 0] == pytest.approx(2.0)

    def test_zero_state(self):
        g = neg_energy_grad(RbmModel.random(3, 2, np.random.default_rng(1)), np.zeros(3), np.zeros(2))
        assert np.all(g.weights == 0) and np.all(g.hidden_bias == 0)

    @pytest.mark.parametrize("kind", list(LayerKind))
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(21)
        model = RbmModel.random(3, 2, rng, kind)
        v = rng.normal(size=3) if kind is G else np.array([1.0, 0.0, 1.0])
        h = np.array([1.0, 1.0])
        fd = param_fd(lambda m: -energy(m, v, h), model)
        g = neg_energy_grad(model, v, h)
        for analytic, numeric in zip(g.arrays(), fd):
            if np.linalg.norm(numeric) == 0:
                assert np.all(analytic == 0)
            else:
                assert rel_err(analytic, numeric) < 1e-4

    def test_batched_matches_single(self, rng):
        model = RbmModel.random(3, 2, rng, G)
        v, h = rng.normal(size=(4, 3)), (rng.random((4, 2)) < 0.5).astype(float)
        batch = neg_energy_grad(model, v, h)
        for i in range(4):
            single = neg_energy_grad(model, v[i], h[i])
            for a, b in zip(batch.arrays(), single.arrays()):
                np.testing.assert_allclose(a[i], b)


class TestLogPartition:
    def test_zero_bernoulli(self):
        assert exact_log_partition(RbmModel.zeros(2, 1)) == pytest.approx(np.log(8))
        assert exact_log_partition(RbmModel.zeros(2, 1), beta=3.7) == pytest.approx(np.log(8))

    def test_gaussian_closed_form(self):
        expected = np.log(np.sqrt(2 * np.pi) * (1 + np.exp(0.5)))
        assert exact_log_partition(gauss_1x1(w=1.0)) == pytest.approx(expected)

    def test_gaussian_against_quadrature(self):
        model = RbmModel([0.4], [-0.3], [0.2], [[0.8]], G)
        beta = 1.7
        total = sum(
            integrate.quad(lambda x: np.exp(-beta * energy(model, [x], [h])), -30, 30)[0]
            for h in (0.0, 1.0)
        )
        assert exact_log_partition(model, beta) == pytest.approx(np.log(total), rel=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), beta=st.floats(0.1, 3.0))
    def test_bernoulli_against_brute_force(self, seed, beta):
        model = RbmModel.random(3, 3, np.random.default_rng(seed))
        states = all_binary_states(6)
        logw = -beta * energy(model, states[:, :3], states[:, 3:])
        brute = np.logaddexp.reduce(logw)
        assert exact_log_partition(model, beta) == pytest.approx(brute, rel=1e-10, abs=1e-10)

    def test_refuses_large_models(self):
        with pytest.raises(ValueError):
            exact_log_partition(RbmModel.zeros(15, 10))
        with pytest.raises(ValueError):
            exact_log_partition(RbmModel.zeros(2, 21, G))


def gibbs_histogram(model, beta, sweeps, chains, seed):
    """Empirical distribution over joint states from ``chains`` parallel chains,
    ``sweeps`` total recorded sweeps after a burn-in of 50."""
    rng = np.random.default_rng(seed)
    nv, nh = model.n_visible, model.n_hidden
    v = (rng.random((chains, nv)) < 0.5).astype(float)
    for _ in range(50):
        v, h = gibbs_step(model, v, beta, rng)
    counts = np.zeros(2 ** (nv + nh))
    weights = 2 ** np.arange(nv + nh - 1, -1, -1)
    for _ in range(sweeps // chains):
        v, h = gibbs_step(model, v, beta, rng)
        counts += np.bincount((np.hstack([v, h]) @ weights).astype(int), minlength=len(counts))
    return counts / counts.sum()


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_gibbs_stationary_distribution(beta):
    model = RbmModel.random(2, 1, np.random.default_rng(7))
    _, _, p = joint_table(model, beta)
    emp = gibbs_histogram(model, beta, 10**6, 1000, seed=int(beta * 10))
    assert 0.5 * np.abs(emp - p).sum() < 0.01
