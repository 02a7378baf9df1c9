import numpy as np
import pytest
from numpy.testing import assert_allclose

from dsfm.model import LoadingsPath, ModelConfig, Panel, VolatilityPath
from dsfm.smoother import kalman_filter
from dsfm.volatility import FfbsState, extract_modes, ffbs_backward, ffbs_forward


def world(rng, p=3, k=2, t=6, delta=0.95, n0=20.0):
    cfg = ModelConfig(k_max=k, delta=delta, n0=n0)
    y = rng.normal(size=(p, t))
    b = rng.normal(size=(t + 1, p, k)) * 0.5
    s2 = rng.uniform(0.5, 2.0, size=(p, t))
    panel = Panel(y, [f"s{j}" for j in range(p)], [str(i) for i in range(t)])
    lp = LoadingsPath(b, np.zeros_like(b))
    vol = VolatilityPath(sigma2=s2, eta_filter=np.full(t, n0),
                         d_filter=s2 * n0, s_filter=s2.copy())
    fs = kalman_filter(panel, lp, vol, cfg)
    return panel, lp, vol, cfg, fs


class TestForward:
    def test_eta_fixed_point(self):
        rng = np.random.default_rng(0)
        panel, lp, vol, cfg, fs = world(rng, delta=0.95, n0=20.0)
        out = ffbs_forward(panel, lp, fs, cfg)
        assert_allclose(out.eta, 20.0, rtol=0, atol=0)

    def test_eta_recursion_exact(self):
        rng = np.random.default_rng(1)
        for delta in (0.9, 0.95, 1.0):
            panel, lp, vol, cfg, fs = world(rng, delta=delta, n0=7.0)
            out = ffbs_forward(panel, lp, fs, cfg)
            for t in range(1, 7):
                assert abs(out.eta[t] - (delta * out.eta[t - 1] + 1.0)) <= 1e-12

    def test_zero_error_pure_decay(self):
        # data exactly equal to the one-step prediction -> d decays by delta
        rng = np.random.default_rng(2)
        p, k, t = 2, 1, 5
        cfg = ModelConfig(k_max=k, delta=0.9, n0=10.0, d0=1.0)
        lp = LoadingsPath(np.zeros((t + 1, p, k)), np.zeros((t + 1, p, k)))
        panel = Panel(np.zeros((p, t)), ["a", "b"], [str(i) for i in range(t)])
        s2 = np.ones((p, t))
        vol = VolatilityPath(sigma2=s2, eta_filter=np.full(t, 10.0),
                             d_filter=s2 * 10, s_filter=s2.copy())
        fs = kalman_filter(panel, lp, vol, cfg)
        out = ffbs_forward(panel, lp, fs, cfg)
        for t_i in range(t + 1):
            assert_allclose(out.d[:, t_i], 0.9**t_i * 1.0, rtol=1e-12)

    def test_hand_recursion_scalar(self):
        # delta=0.9, eta0=10, d0=1, s0=0.1, e^2/q = 2 at t=1:
        # eta1 = 10, d1 = 0.9 + 0.1*2 = 1.1, s1 = 0.11
        fs = FfbsState(eta=np.array([10.0]), d=np.array([[1.0]]),
                       s=np.array([[0.1]]))
        delta = 0.9
        eta1 = delta * 10.0 + 1.0
        d1 = delta * 1.0 + 0.1 * 2.0
        assert_allclose(eta1, 10.0, rtol=0)
        assert_allclose(d1, 1.1, rtol=1e-14)
        assert_allclose(d1 / eta1, 0.11, rtol=1e-14)

    def test_outputs_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            panel, lp, vol, cfg, fs = world(rng, p=4, k=2, t=8)
            out = ffbs_forward(panel, lp, fs, cfg)
            assert np.all(out.d > 0)
            assert np.all(out.s > 0)


class TestBackward:
    def test_constant_filter_is_fixed_point(self):
        t = 5
        cfg = ModelConfig(k_max=1, delta=0.9)
        c = 1.7
        fs = FfbsState(eta=np.full(t + 1, 10.0), d=np.full((2, t + 1), c * 10),
                       s=np.full((2, t + 1), c))
        out = ffbs_backward(fs, cfg)
        assert_allclose(out.s_smooth, c, rtol=1e-14)

    def test_eta_constant_at_twenty(self):
        t = 6
        cfg = ModelConfig(k_max=1, delta=0.95)
        fs = FfbsState(eta=np.full(t + 1, 20.0), d=np.ones((1, t + 1)),
                       s=np.ones((1, t + 1)) / 20)
        out = ffbs_backward(fs, cfg)
        assert_allclose(out.eta_smooth, 20.0, rtol=0, atol=0)

    def test_hand_recursion_t3(self):
        # T = 3, delta = 0.9, filtered s = (1, 2, 4):
        # s_T(0) = 4; s_T(-1)^-1 = 0.1/2 + 0.9/4 = 0.275 -> 3.6364
        # s_T(-2)^-1 = 0.1/1 + 0.9*0.275 = 0.3475 -> 2.8777
        cfg = ModelConfig(k_max=1, delta=0.9)
        fs = FfbsState(eta=np.array([10.0, 10.0, 10.0, 10.0]),
                       d=np.array([[1.0, 10.0, 20.0, 40.0]]),
                       s=np.array([[0.1, 1.0, 2.0, 4.0]]))
        out = ffbs_backward(fs, cfg)
        assert_allclose(out.s_smooth[0, 2], 4.0, rtol=0)
        assert_allclose(out.s_smooth[0, 1], 3.6364, atol=1e-4)
        assert_allclose(out.s_smooth[0, 0], 2.8777, atol=1e-4)

    def test_delta_one_constant_variance(self):
        rng = np.random.default_rng(4)
        t = 7
        cfg = ModelConfig(k_max=1, delta=1.0)
        s = rng.uniform(0.5, 3.0, size=(3, t + 1))
        fs = FfbsState(eta=np.arange(5.0, 5.0 + t + 1),
                       d=s * np.arange(5.0, 5.0 + t + 1)[None, :], s=s)
        out = ffbs_backward(fs, cfg)
        for ti in range(t):
            assert_allclose(out.s_smooth[:, ti], s[:, t], rtol=1e-12)

    def test_backward_identity_exact(self):
        rng = np.random.default_rng(5)
        for delta in (0.9, 0.95, 1.0):
            cfg = ModelConfig(k_max=1, delta=delta)
            t = 6
            s = rng.uniform(0.5, 3.0, size=(2, t + 1))
            eta = np.empty(t + 1)
            eta[0] = 12.0
            for i in range(1, t + 1):
                eta[i] = delta * eta[i - 1] + 1.0
            fs = FfbsState(eta=eta, d=s * eta[None, :], s=s)
            out = ffbs_backward(fs, cfg)
            for k in range(1, t):
                ti = t - k
                lhs = out.eta_smooth[ti - 1]
                rhs = (1 - delta) * eta[ti] + delta * out.eta_smooth[ti]
                assert abs(lhs - rhs) <= 1e-12
                lhs_s = 1.0 / out.s_smooth[:, ti - 1]
                rhs_s = (1 - delta) / s[:, ti] + delta / out.s_smooth[:, ti]
                assert np.all(np.abs(lhs_s - rhs_s) <= 1e-12)


class TestExtractModes:
    def test_algebraic_substitution(self):
        # eta = 21, d = 40 -> sigma^2 = 40 / 20 = 2
        cfg = ModelConfig(k_max=1, delta=0.95)
        fs = FfbsState(eta=np.array([21.0, 21.0]), d=np.array([[40.0, 40.0]]),
                       s=np.array([[40 / 21, 40 / 21]]),
                       eta_smooth=np.array([21.0]),
                       s_smooth=np.array([[40.0 / 21.0]]))
        vol = extract_modes(fs)
        assert_allclose(vol.sigma2[0, 0], 2.0, rtol=1e-12)

    def test_substitution_eta20(self):
        # eta = 20, s = 1 -> d = 20, sigma^2 = 20/19
        fs = FfbsState(eta=np.array([20.0, 20.0]), d=np.array([[20.0, 20.0]]),
                       s=np.array([[1.0, 1.0]]),
                       eta_smooth=np.array([20.0]), s_smooth=np.array([[1.0]]))
        vol = extract_modes(fs)
        assert_allclose(vol.sigma2[0, 0], 20.0 / 19.0, rtol=1e-12)
        assert_allclose(vol.sigma2[0, 0], 1.05263, atol=1e-5)

    def test_eta_at_most_one_rejected(self):
        fs = FfbsState(eta=np.array([1.0, 1.0]), d=np.array([[2.0, 2.0]]),
                       s=np.array([[2.0, 2.0]]),
                       eta_smooth=np.array([1.0]), s_smooth=np.array([[2.0]]))
        with pytest.raises(ValueError, match="degrees of freedom"):
            extract_modes(fs)

    def test_requires_backward_pass(self):
        fs = FfbsState(eta=np.array([20.0, 20.0]), d=np.ones((1, 2)),
                       s=np.ones((1, 2)))
        with pytest.raises(ValueError, match="backward"):
            extract_modes(fs)

    def test_positive_outputs_random(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            panel, lp, vol, cfg, fs_k = world(rng, p=3, k=2, t=7)
            out = ffbs_backward(ffbs_forward(panel, lp, fs_k, cfg), cfg)
            modes = extract_modes(out)
            assert np.all(modes.sigma2 > 0)
