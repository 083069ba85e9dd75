import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from asgan import adversarial as adv

finite = st.floats(-3, 3, allow_nan=False)
batches = hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite)


class TestFGSM:
    def test_sign_arithmetic(self):
        out = adv.craft_fgsm(np.array([0.5, -0.5]), np.array([2.0, -3.0]), 0.1)
        assert np.allclose(out, [0.4, -0.4], atol=1e-15)

    def test_zero_eps_bitwise(self):
        x = np.random.default_rng(0).normal(size=(4, 2))
        out = adv.craft_fgsm(x, np.ones_like(x), 0.0)
        assert out.tobytes() == x.tobytes() and out is not x

    def test_clipping(self):
        assert adv.craft_fgsm(np.array([0.999]), np.array([-1.0]), 0.004, clip_hi=1.0)[0] == 1.0

    def test_ball_wins_outside_domain(self):
        out = adv.craft_fgsm(np.array([1.4]), np.array([1.0]), 0.01, clip_lo=-1.0, clip_hi=1.0)
        assert abs(out[0] - 1.4) <= 0.01

    def test_zero_gradient_component_is_not_moved(self):
        out = adv.craft_fgsm(np.array([1.0, 2.0]), np.array([0.0, 1.0]), 0.5)
        assert out.tolist() == [1.0, 1.5]

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            adv.craft_fgsm(np.zeros((2, 2)), np.zeros((2, 3)), 0.1)

    @settings(max_examples=60, deadline=None)
    @given(batches, st.floats(0, 1), st.integers(0, 2 ** 31))
    def test_linf_budget(self, x, eps, seed):
        g = np.random.default_rng(seed).normal(size=x.shape)
        assert np.max(np.abs(adv.craft_fgsm(x, g, eps) - x)) <= eps


class TestPGD:
    def test_single_step_is_fgsm(self):
        rng = np.random.default_rng(1)
        x, g = rng.normal(size=(8, 2)), rng.normal(size=(8, 2))
        pgd = adv.craft_pgd(x, lambda _: g, 0.05, steps=1, step_size=0.05, random_init=False)
        assert pgd.tobytes() == adv.craft_fgsm(x, g, 0.05).tobytes()

    def test_constant_gradient_saturates(self):
        x = np.array([[0.3, -0.7]])
        out = adv.craft_pgd(x, lambda z: np.ones_like(z), 0.1, steps=4, random_init=False)
        assert np.allclose(out, x - 0.1, atol=1e-15)
        assert np.all(out >= x - 0.1)

    @pytest.mark.parametrize("steps", [1, 3, 12])
    def test_zero_eps(self, steps):
        x = np.random.default_rng(2).normal(size=(3, 2))
        assert adv.craft_pgd(x, np.sign, 0.0, steps, rng=0).tobytes() == x.tobytes()

    def test_rejects_zero_steps(self):
        with pytest.raises(ValueError, match="steps"):
            adv.craft_pgd(np.zeros(2), np.sign, 0.1, 0)

    def test_seeded(self):
        x = np.zeros((4, 2))
        f = lambda z: np.cos(3 * z)
        a = adv.craft_pgd(x, f, 0.1, 1, step_size=0.01, rng=7)
        assert a.tobytes() == adv.craft_pgd(x, f, 0.1, 1, step_size=0.01, rng=7).tobytes()
        assert a.tobytes() != adv.craft_pgd(x, f, 0.1, 1, step_size=0.01, rng=8).tobytes()

    @settings(max_examples=40, deadline=None)
    @given(batches, st.floats(1e-4, 1), st.integers(1, 6), st.booleans(), st.integers(0, 99))
    def test_budget_and_domain(self, x, eps, steps, init, seed):
        out = adv.craft_pgd(x, lambda z: np.sin(5 * z) - 0.1, eps, steps, random_init=init,
                            rng=seed, clip_lo=-1.0, clip_hi=1.0)
        assert np.max(np.abs(out - x)) <= eps
        # clipping can only be violated where x itself was outside the domain
        inside = (x >= -1) & (x <= 1)
        assert np.all((out[inside] >= -1) & (out[inside] <= 1))


class TestGaussian:
    def test_zero_eps(self):
        x = np.ones((3, 2))
        assert adv.craft_gaussian(x, 0.0, rng=0).tobytes() == x.tobytes()

    def test_components_on_budget(self):
        x = np.zeros((200, 3))
        d = adv.craft_gaussian(x, 0.25, rng=1) - x
        assert set(np.unique(d)) <= {-0.25, 0.25}

    def test_mean_zero(self):
        d = adv.craft_gaussian(np.zeros(100_000), 0.1, rng=2)
        se = 0.1 / math.sqrt(d.size)
        assert abs(d.mean()) <= 3 * se

    def test_clipped(self):
        out = adv.craft_gaussian(np.full(1000, 0.99), 0.1, rng=3, clip_lo=-1, clip_hi=1)
        assert out.max() <= 1.0


class TestSchedule:
    def test_no_warmup(self):
        cfg = adv.AdvConfig("fgsm", 0.01)
        assert {adv.epsilon_at(i, cfg) for i in range(10)} == {0.01}

    def test_boundary(self):
        cfg = adv.AdvConfig("fgsm", 1 / 255, warmup_iters=adv.default_warmup(6000))
        assert cfg.warmup_iters == 300
        assert adv.epsilon_at(299, cfg) == 0.0
        assert adv.epsilon_at(300, cfg) == 1 / 255

    def test_negative_iteration(self):
        with pytest.raises(ValueError):
            adv.epsilon_at(-1, adv.AdvConfig())


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"method": "bim"},
        {"epsilon": -0.1},
        {"norm_order": 1},
        {"method": "fgsm", "norm_order": 2},
        {"pgd_steps": 0},
        {"method": "pgd", "epsilon": 0.1, "pgd_step_size": 0.3},
        {"warmup_iters": -1},
        {"clip_lo": 1.0, "clip_hi": 0.0},
    ])
    def test_rejected(self, kwargs):
        with pytest.raises(ValueError):
            adv.AdvConfig(**kwargs)

    def test_default_step_size(self):
        assert adv.AdvConfig("pgd", 0.1, pgd_steps=4).step_size == pytest.approx(0.05)

    def test_horizon(self):
        with pytest.raises(ValueError, match="exceeds"):
            adv.AdvConfig("fgsm", 0.1, warmup_iters=100).check_horizon(50)
