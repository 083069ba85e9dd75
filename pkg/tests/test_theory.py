import math

import numpy as np
import pytest

from asgan import nn
from asgan import theory as th


def linear_disc(w, b=0.0):
    spec = nn.NetworkSpec((nn.Layer(len(w), 1, "linear"),), "discriminator")
    return spec, nn.ParamSet([np.asarray(w, float).reshape(-1, 1), np.array([b])])


def exact_linear_min(w, b, x, eps, q):
    # log sigmoid is increasing, so the minimum sits where w.delta = eps |w|_q
    z = float(np.dot(w, x) + b - eps * np.linalg.norm(w, ord=q))
    return -math.log1p(math.exp(-z))


@pytest.fixture(scope="module")
def small_d():
    spec = nn.discriminator_spec(2, (16, 16))
    return spec, nn.init_params(spec, seed=4)


class TestDualExponent:
    @pytest.mark.parametrize("p,q", [(math.inf, 1.0), ("inf", 1.0), (2, 2.0)])
    def test_values(self, p, q):
        assert th.dual_exponent(p) == q

    @pytest.mark.parametrize("p", [1, 3, 0.5])
    def test_rejects_other_norms(self, p):
        with pytest.raises(ValueError, match="2 or inf"):
            th.dual_exponent(p)


class TestBruteForce:
    @pytest.mark.parametrize("p,q", [(math.inf, 1), (2, 2)])
    def test_linear_oracle(self, p, q):
        w, b, x = np.array([0.8, -1.7]), 0.3, np.array([0.2, 0.1])
        spec, params = linear_disc(w, b)
        val, delta = th.brute_force_argmin(spec, params, x, 0.05, p)
        assert val == pytest.approx(exact_linear_min(w, b, x, 0.05, q), abs=1e-12)
        assert np.linalg.norm(delta, ord=p) <= 0.05

    def test_three_dims(self):
        w, x = np.array([0.5, -0.2, 1.0]), np.zeros(3)
        spec, params = linear_disc(w)
        val = th.brute_force_robust_term(spec, params, x, 0.1, math.inf)
        assert val == pytest.approx(exact_linear_min(w, 0.0, x, 0.1, 1), abs=1e-12)

    def test_zero_eps_is_log_d(self, small_d):
        spec, params = small_d
        x = np.array([0.3, -0.4])
        val, delta = th.brute_force_argmin(spec, params, x, 0.0)
        assert val == th.log_d(spec, params, x)[0] and not delta.any()

    def test_not_above_center(self, small_d):
        spec, params = small_d
        x = np.array([0.1, 0.6])
        assert th.brute_force_robust_term(spec, params, x, 0.02, 2) <= th.log_d(spec, params, x)[0]

    def test_rejects_high_dim(self):
        spec, params = linear_disc(np.ones(4))
        with pytest.raises(ValueError, match="d <= 3"):
            th.brute_force_argmin(spec, params, np.zeros(4), 0.1)

    def test_rejects_coarse_grid(self, small_d):
        with pytest.raises(ValueError, match="grid_n"):
            th.brute_force_argmin(*small_d, np.zeros(2), 0.1, grid_n=21)

    def test_sampled_is_upper_bound(self, small_d):
        spec, params = small_d
        x = np.array([0.2, 0.2])
        lattice = th.brute_force_robust_term(spec, params, x, 0.05, 2)
        assert th.sampled_robust_term(spec, params, x, 0.05, 2, n_dirs=500) >= lattice - 1e-12


class TestFirstOrder:
    def test_linear_closed_form(self):
        w, x = np.array([1.0, -2.0]), np.array([0.5, 0.5])
        spec, params = linear_disc(w)
        z = float(w @ x)
        ld, dld = -math.log1p(math.exp(-z)), 1 / (1 + math.exp(z))
        est = th.first_order_estimate(spec, params, x, 0.01, math.inf)
        assert est == pytest.approx(ld - 0.01 * dld * 3.0, abs=1e-14)

    def test_underflow(self):
        spec, params = linear_disc([1.0, 0.0], b=-2000.0)
        with pytest.raises(ValueError, match="underflows"):
            th.first_order_estimate(spec, params, np.zeros(2), 0.01)

    def test_stationary_point(self):
        spec, params = linear_disc([0.0, 0.0])
        with pytest.raises(ValueError, match="stationary"):
            th.lagrange_delta(spec, params, np.zeros(2), 0.01)

    @pytest.mark.parametrize("p", [math.inf, 2])
    def test_lagrange_on_boundary(self, p):
        spec, params = linear_disc([0.3, -0.9])
        d = th.lagrange_delta(spec, params, np.zeros(2), 0.04, p)
        assert np.linalg.norm(d, ord=p) == pytest.approx(0.04, rel=1e-14)


class TestSweep:
    def test_zero_weight_discriminator(self):
        spec = nn.discriminator_spec(2, (8,))
        params = nn.ParamSet([np.zeros_like(a) for a in nn.init_params(spec)])
        rep = th.expansion_residual_sweep(spec, params, np.zeros((3, 2)), "inf", [1e-2, 5e-3, 2.5e-3])
        assert rep.residual == [0.0, 0.0, 0.0] and rep.residual_ratio == [None, None]

    def test_quadratic_scaling(self):
        # smooth units, so no kink sits inside the ball
        spec = nn.mlp_spec([2, 16, 16, 1], "tanh", "linear", "discriminator")
        params = nn.init_params(spec, seed=4)
        x = np.random.default_rng(0).uniform(-0.5, 0.5, (6, 2))
        for p in ("inf", 2):
            rep = th.expansion_residual_sweep(spec, params, x, p, [4e-2, 2e-2, 1e-2])
            assert all(2.5 <= r <= 6.0 for r in rep.residual_ratio)

    def test_p_switches_dual_norm(self, small_d):
        x = np.array([[0.1, 0.2]])
        eps = [1e-2, 5e-3, 2.5e-3]
        a = th.expansion_residual_sweep(*small_d, x, "inf", eps)
        b = th.expansion_residual_sweep(*small_d, x, 2, eps)
        assert (a.q, b.q) == (1.0, 2.0)
        assert a.first_order_estimate != b.first_order_estimate

    @pytest.mark.parametrize("eps", [[1e-2, 5e-3], [1e-2, 1e-2, 5e-3], [1e-3, 2e-3, 4e-3]])
    def test_rejects_bad_eps_list(self, small_d, eps):
        with pytest.raises(ValueError, match="decreasing"):
            th.expansion_residual_sweep(*small_d, np.zeros((1, 2)), "inf", eps)

    def test_json_encodes_inf(self, small_d):
        rep = th.expansion_residual_sweep(*small_d, np.zeros((1, 2)), math.inf, [1e-2, 5e-3, 2.5e-3])
        assert rep.to_json_dict()["p"] == "inf"


class TestDirectionAgreement:
    def test_linear_inf(self):
        spec, params = linear_disc([0.7, -0.4])
        out = th.direction_agreement(spec, params, np.zeros((4, 2)), 0.01, math.inf)
        assert out["scores"] == [1.0] * 4 and out["skipped"] == 0

    def test_linear_l2_cosine(self):
        spec, params = linear_disc([0.7, -0.4])
        out = th.direction_agreement(spec, params, np.zeros((2, 2)), 0.01, 2)
        assert min(out["scores"]) >= 0.9999

    def test_skips_flat_axis(self):
        spec, params = linear_disc([0.7, 0.0])
        out = th.direction_agreement(spec, params, np.zeros((3, 2)), 0.01, math.inf)
        assert out["skipped"] == 3 and out["scores"] == []
