import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtse.data import MixingDataset
from rtse.dsp import FrameConfig, stft
from rtse.errors import ConfigError, ContractError, NumericError
from rtse.features import FeatureKind
from rtse.model import ModelParams, init_params
from rtse.toy import toy_corpus
from rtse.training import (
    AdamState,
    Batch,
    LossConfig,
    VadConfig,
    backward,
    batch_loss,
    loss_mse,
    loss_noise,
    loss_speech,
    loss_weighted,
    make_batches,
    sequences_per_batch,
    snr_alpha,
    vad_mask,
)
from rtse.training.bptt import objective
from rtse.training.loop import train_step
from rtse.training.losses import ZeroNoiseWarning
from rtse.training.vad import SilentUtteranceWarning

K = 257


def in_band_frame(power_units: int, mag: float = 10.0) -> np.ndarray:
    """A magnitude frame whose 300-5000 Hz power is ``power_units * mag**2``."""
    f = np.zeros(K)
    f[20 : 20 + power_units] = mag
    return f


class TestVad:
    def test_band_bins(self):
        sl = VadConfig().band_bins()
        assert (sl.start, sl.stop) == (10, 161)  # 312.5 Hz .. 5000 Hz

    def test_constant_tone_all_voiced(self):
        mags = np.tile(in_band_frame(3), (25, 1))
        assert vad_mask(mags).all()

    def test_constructed_mask(self):
        mags = np.zeros((20, K))
        mags[8:11] = in_band_frame(10)  # power 1000 on frames 8..10
        mags[14:17] = in_band_frame(1, 1.0)  # power 1: smoothed value at frame 15 is exactly the threshold
        mags[2, 200] = 1000.0  # out of band, ignored
        expected = np.zeros(20, dtype=bool)
        expected[7:12] = True  # burst +/- one frame of smoothing spread
        np.testing.assert_array_equal(vad_mask(mags), expected)

    def test_threshold_is_strict(self):
        mags = np.zeros((20, K))
        mags[8:11] = in_band_frame(10)
        mags[14:17] = in_band_frame(1, 1.0 + 1e-6)
        expected = np.zeros(20, dtype=bool)
        expected[7:12] = True
        expected[15] = True
        np.testing.assert_array_equal(vad_mask(mags), expected)

    def test_silent_utterance(self):
        with pytest.warns(SilentUtteranceWarning):
            m = vad_mask(np.zeros((5, K)))
        assert not m.any()

    @given(st.floats(1e-4, 1e4), st.integers(0, 2**32 - 1))
    def test_scale_invariant(self, scale, seed):
        r = np.random.default_rng(seed)
        mags = np.abs(r.standard_normal((30, K))) * r.uniform(0, 1, (30, 1)) ** 6
        np.testing.assert_array_equal(vad_mask(mags), vad_mask(mags * scale))

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            VadConfig(smooth_frames=2)
        with pytest.raises(ConfigError):
            VadConfig(band_hz=(300.0, 9000.0)).band_bins()


class TestLosses:
    def test_mse_perfect(self, rng):
        X = rng.uniform(0.1, 2, (4, 3))
        G = rng.uniform(0, 1, (4, 3))
        assert loss_mse(G, G * X, X) == 0.0

    def test_mse_single(self):
        assert loss_mse([[1.0]], [[1.0]], [[2.0]]) == 1.0

    def test_mse_against_loop(self, rng):
        G, S, X = rng.uniform(0, 1, (3, 7, 5))
        ref = 0.0
        for t in range(7):
            for k in range(5):
                ref += (S[t, k] - G[t, k] * X[t, k]) ** 2
        assert loss_mse(G, S, X) == pytest.approx(ref / 35, rel=1e-12)

    def test_all_pass_no_distortion(self, rng):
        S = rng.uniform(0, 3, (6, 4))
        assert loss_speech(np.ones_like(S), S, np.ones(6, bool)) == 0.0

    def test_all_stop(self, rng):
        S, N = rng.uniform(0, 3, (2, 6, 4))
        mask = np.array([1, 0, 1, 1, 0, 1], bool)
        assert loss_noise(np.zeros_like(N), N) == 0.0
        assert loss_speech(np.zeros_like(S), S, mask) == pytest.approx(np.mean(S[mask] ** 2))

    def test_hand_case(self):
        g, s, n, m = [[0.5]], [[2.0]], [[1.0]], [True]
        assert loss_speech(g, s, m) == 1.0
        assert loss_noise(g, n) == 0.25
        assert loss_weighted(g, s, n, m, 0.35) == pytest.approx(0.5125, abs=1e-15)

    def test_alpha_limits(self, rng):
        G, S, N = rng.uniform(0, 1, (3, 5, 4))
        m = rng.random(5) > 0.5
        assert loss_weighted(G, S, N, m, 1.0) == loss_speech(G, S, m)
        assert loss_weighted(G, S, N, m, 0.0) == loss_noise(G, N)
        with pytest.raises(ContractError):
            loss_weighted(G, S, N, m, 1.5)

    def test_empty_speech_set(self, rng):
        S = rng.uniform(0, 1, (4, 3))
        assert loss_speech(np.full_like(S, 0.3), S, np.zeros(4, bool)) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            loss_mse(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2)))

    @given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_alpha(self, seed, a1, a2):
        r = np.random.default_rng(seed)
        G, S, N = r.uniform(0, 1, (3, 5, 4))
        m = np.ones(5, bool)
        ls, ln = loss_speech(G, S, m), loss_noise(G, N)
        lo, hi = sorted((a1, a2))
        diff = loss_weighted(G, S, N, m, hi) - loss_weighted(G, S, N, m, lo)
        assert diff * np.sign(ls - ln) >= -1e-12


class TestSnrAlpha:
    def test_equal_weighting_at_beta(self):
        beta = 10 ** (18.2 / 10)
        s = np.ones(100)
        n = np.full(100, 1.0 / math.sqrt(beta))
        assert snr_alpha(s, n, beta) == pytest.approx(0.5, abs=1e-15)
        assert snr_alpha([2.0], [1.0], 4.0) == 0.5

    def test_low_snr_limit(self):
        assert snr_alpha([1e-6], [1.0], 1.0) < 1e-11

    def test_zero_noise(self):
        with pytest.warns(ZeroNoiseWarning):
            assert snr_alpha([1.0], [0.0], 2.0) == 1.0

    def test_max_slope_at_beta(self):
        beta_db = 18.2
        beta = 10 ** (beta_db / 10)
        grid = np.arange(-20.0, 60.0, 0.1)

        def alpha(db):
            return snr_alpha([math.sqrt(10 ** (db / 10))], [1.0], beta)

        slope = [(alpha(d + 0.05) - alpha(d - 0.05)) / 0.1 for d in grid]
        assert abs(grid[int(np.argmax(slope))] - beta_db) <= 0.1 + 1e-9

    @given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6), st.floats(1e-3, 1e3))
    def test_open_interval(self, es, en, beta):
        a = snr_alpha([math.sqrt(es)], [math.sqrt(en)], beta)
        assert 0 < a < 1


def tiny_batch(rng, B=2, T=6, K_=3, seed_mask=True):
    S, N, X = rng.uniform(0, 2, (3, B, T, K_))
    mask = rng.random((B, T)) > 0.3 if seed_mask else np.ones((B, T), bool)
    return Batch(rng.normal(size=(B, T, K_)), X, S, N, mask, 1.0)


def perturbed_params(rng, hidden, k):
    p = init_params(int(rng.integers(1 << 30)), hidden, k)
    for a in p.arrays().values():
        a += rng.normal(0, 0.3, a.shape)
    return p


def numerical_grad(p, batch, cfg, name, h=1e-4):
    arr = p.arrays()[name]
    num = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        orig = arr[idx]
        arr[idx] = orig + h
        up = batch_loss(p, batch, cfg)
        arr[idx] = orig - h
        down = batch_loss(p, batch, cfg)
        arr[idx] = orig
        num[idx] = (up - down) / (2 * h)
    return num


class TestBackward:
    @pytest.mark.parametrize("family", ["mse", "fixed_weighted", "snr_weighted"])
    def test_finite_differences(self, family):
        rng = np.random.default_rng(hash(family) % 1000)
        p = perturbed_params(rng, 3, 2)
        batch = tiny_batch(rng, B=2, T=5, K_=2)
        cfg = LossConfig(family, alpha=0.4, beta_db=2.0)
        grads, _ = backward(p, batch, cfg)
        for name in p.arrays():
            num = numerical_grad(p, batch, cfg, name)
            err = np.abs(grads[name] - num) / np.maximum(np.maximum(np.abs(grads[name]), np.abs(num)), 1e-6)
            assert err.max() < 1e-4, name

    def test_objective_matches_reference_losses(self, rng):
        batch = tiny_batch(rng, B=3, T=7, K_=4)
        G = rng.uniform(0, 1, batch.clean.shape)
        for fam in ("mse", "fixed_weighted", "snr_weighted"):
            cfg = LossConfig(fam, alpha=0.3, beta_db=5.0)
            parts, _ = objective(G, batch, cfg)
            per = []
            for b in range(3):
                S, N, X, m = batch.clean[b], batch.noise[b], batch.noisy[b], batch.sa_mask[b]
                if fam == "mse":
                    per.append(loss_mse(G[b], S, X))
                else:
                    a = 0.3 if fam == "fixed_weighted" else snr_alpha(S, N, cfg.beta_linear)
                    per.append(loss_weighted(G[b], S, N, m, a))
            assert parts.loss == pytest.approx(np.mean(per), rel=1e-12)

    def test_invariant_parameter_has_zero_gradient(self, rng):
        p = perturbed_params(rng, 3, 3)
        batch = tiny_batch(rng, K_=3)
        for arr in (batch.clean, batch.noise, batch.noisy):
            arr[:, :, 1] = 0.0
        for fam in ("mse", "fixed_weighted"):
            grads, _ = backward(p, batch, LossConfig(fam))
            assert grads["fc.bias"][1] == 0.0
            assert not np.any(grads["fc.weight"][1])

    @pytest.mark.parametrize("family", ["mse", "fixed_weighted", "snr_weighted"])
    def test_loss_scale_linearity(self, family, rng):
        p = perturbed_params(rng, 4, 3)
        batch = tiny_batch(rng, K_=3)
        cfg = LossConfig(family, alpha=0.6, beta_db=0.0)
        g1, l1 = backward(p, batch, cfg)
        r2 = math.sqrt(2.0)
        scaled = Batch(batch.features, batch.noisy * r2, batch.clean * r2, batch.noise * r2, batch.sa_mask, 1.0)
        g2, l2 = backward(p, scaled, cfg)
        assert l2.loss == pytest.approx(2 * l1.loss, rel=1e-12)
        for k in g1:
            np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-9, atol=1e-15)

    def test_non_finite_loss_reports_frame(self, rng):
        p = perturbed_params(rng, 3, 2)
        batch = tiny_batch(rng, T=6, K_=2)
        batch.clean[1, 4, 0] = np.inf
        with pytest.raises(NumericError, match="frame index: 4"):
            backward(p, batch, LossConfig("mse"))


class TestTrainStep:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.batch = tiny_batch(rng, B=2, T=20, K_=4, seed_mask=False)
        # learnable target: the ideal gain is a smooth function of the current features
        target = 1.0 / (1.0 + np.exp(-1.5 * self.batch.features))
        self.batch.clean[:] = target * self.batch.noisy
        self.params = init_params(3, 6, 4)

    def test_loss_halves(self):
        p, opt = self.params, AdamState(lr=1e-2)
        first = None
        for _ in range(200):
            p, opt, res = train_step(p, self.batch, LossConfig("mse"), opt)
            first = res.loss if first is None else first
        assert batch_loss(p, self.batch, LossConfig("mse")) <= 0.5 * first

    def test_zero_lr(self):
        p, _, _ = train_step(self.params, self.batch, LossConfig(), AdamState(lr=0.0))
        for k, v in self.params.arrays().items():
            np.testing.assert_array_equal(p.arrays()[k], v)

    def test_deterministic_trajectory(self):
        def run():
            p, opt = init_params(3, 6, 4), AdamState()
            for _ in range(5):
                p, opt, _ = train_step(p, self.batch, LossConfig(), opt)
            return p

        a, b = run(), run()
        for k, v in a.arrays().items():
            np.testing.assert_array_equal(v, b.arrays()[k])

    def test_non_finite_gradients_abort(self):
        p = self.params.copy()
        p.fc_weight[0, 0] = np.nan
        with pytest.raises(NumericError):
            train_step(p, self.batch, LossConfig(), AdamState())


class TestBatches:
    @pytest.mark.parametrize("seq,n", [(1, 60), (2, 30), (5, 12), (10, 6), (20, 3), (60, 1)])
    def test_sequences_per_minute(self, seq, n):
        assert sequences_per_batch(seq) == n

    def test_invalid_length(self):
        with pytest.raises(ConfigError):
            sequences_per_batch(0)

    def test_batch_contents_and_reproducibility(self):
        speech, noise = toy_corpus(0, 2, 2, 3.0)
        ds = MixingDataset(speech, noise, snr_set=(0.0,))
        b1 = next(make_batches(ds, 1.0, seed=4, batch_seconds=3.0))
        b2 = next(make_batches(ds, 1.0, seed=4, batch_seconds=3.0))
        assert b1.features.shape == (3, 128, 257)
        np.testing.assert_array_equal(b1.features, b2.features)
        np.testing.assert_array_equal(b1.clean, b2.clean)
        # magnitudes come from the time-domain signals; noisy = |S + N|
        assert b1.sa_mask.dtype == bool and b1.sa_mask.any()
        np.testing.assert_allclose(10 * np.log10(b1.snr), 0.0, atol=1.0)
        b3 = next(make_batches(ds, 1.0, seed=5, batch_seconds=3.0))
        assert not np.array_equal(b1.clean, b3.clean)

    def test_start_step_skips_ahead(self):
        speech, noise = toy_corpus(0, 2, 2, 3.0)
        ds = MixingDataset(speech, noise)
        gen = make_batches(ds, 1.0, seed=1, batch_seconds=2.0)
        next(gen)
        second = next(gen)
        resumed = next(make_batches(ds, 1.0, seed=1, batch_seconds=2.0, start_step=1))
        np.testing.assert_array_equal(second.noisy, resumed.noisy)
