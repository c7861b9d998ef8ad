import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rtse.dsp import FrameConfig, stft
from rtse.errors import ConfigError, ContractError, UninitializedStatsError
from rtse.features import (
    FeatureExtractor,
    FeatureKind,
    GlobalStats,
    NormState,
    accumulate_global,
    apply_global,
    fd_normalize,
    fi_normalize,
    lps,
    sequence_features,
    smoothing_constant,
)


class TestLps:
    def test_floor(self):
        assert lps([0.0])[0] == pytest.approx(math.log(1e-12))
        assert lps([0.0])[0] == pytest.approx(-27.6310, abs=1e-4)

    def test_unity(self):
        assert lps([1.0])[0] == 0.0

    def test_above_floor(self):
        assert lps([1e-5])[0] == pytest.approx(-23.0259, abs=1e-4)

    def test_negative(self):
        with pytest.raises(ContractError):
            lps([-1.0])


class TestGlobal:
    def test_frame_at_mean(self, rng):
        data = rng.standard_normal((50, 4))
        stats = accumulate_global(GlobalStats.empty(4), data)
        np.testing.assert_allclose(apply_global(stats, stats.mean), 0.0)

    def test_two_frames(self):
        stats = GlobalStats.empty(3)
        stats = accumulate_global(stats, np.zeros(3))
        stats = accumulate_global(stats, np.full(3, 2.0))
        np.testing.assert_allclose(apply_global(stats, np.zeros(3)), -1.0)
        np.testing.assert_allclose(apply_global(stats, np.full(3, 2.0)), 1.0)

    def test_thousand_frames_standardized(self, rng):
        data = rng.normal(3.0, 5.0, (1000, 6))
        stats = GlobalStats.empty(6)
        for frame in data:
            stats = accumulate_global(stats, frame)
        out = apply_global(stats, data)
        assert np.all(np.abs(out.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(out.var(axis=0) - 1.0) < 1e-10)

    def test_uninitialized(self):
        with pytest.raises(UninitializedStatsError):
            apply_global(GlobalStats.empty(3), np.zeros(3))

    @given(st.integers(1, 60), st.integers(0, 2**32 - 1))
    def test_sharded_merge_matches_single_pass(self, split, seed):
        data = np.random.default_rng(seed).normal(0, 10, (61, 3))
        whole = accumulate_global(GlobalStats.empty(3), data)
        a = accumulate_global(GlobalStats.empty(3), data[:split])
        b = accumulate_global(GlobalStats.empty(3), data[split:])
        merged = a.merge(b)
        assert merged.count == whole.count
        np.testing.assert_allclose(merged.mean, whole.mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(merged.m2, whole.m2, rtol=1e-10)


class TestSmoothingConstant:
    def test_default_operating_point(self):
        assert smoothing_constant(3.0, 0.008) == pytest.approx(0.9973369, abs=1e-7)

    def test_long_tau(self):
        assert smoothing_constant(1e12, 0.008) == pytest.approx(1.0)

    def test_tau_equals_hop(self):
        assert smoothing_constant(0.5, 0.5) == pytest.approx(math.exp(-1))

    @pytest.mark.parametrize("tau,hop", [(0, 0.008), (3.0, 0), (-1, 0.008)])
    def test_invalid(self, tau, hop):
        with pytest.raises(ConfigError):
            smoothing_constant(tau, hop)


class TestFdNormalize:
    def test_hand_case(self):
        state = NormState(np.zeros(1), np.zeros(1), 0.5, frame_count=1)
        out, new = fd_normalize(state, np.array([2.0]))
        assert new.mu[0] == 1.0 and new.m2[0] == 2.0
        assert out[0] == pytest.approx(1.0)

    def test_constant_input(self):
        state = NormState(np.full(4, 3.0), np.full(4, 9.0), 0.9, frame_count=1)
        for _ in range(20):
            out, state = fd_normalize(state, np.full(4, 3.0))
            assert np.all(out == 0.0)

    def test_first_frame_seeds_state(self):
        out, state = fd_normalize(NormState.initial(3, 0.9), np.array([1.0, -2.0, 5.0]))
        np.testing.assert_array_equal(state.mu, [1.0, -2.0, 5.0])
        np.testing.assert_array_equal(state.m2, [1.0, 4.0, 25.0])
        np.testing.assert_array_equal(out, 0.0)

    def test_white_noise_long_run(self):
        r = np.random.default_rng(7)
        c = smoothing_constant(3.0, 0.008)
        state = NormState.initial(8, c)
        outs = []
        for t in range(10_000):
            out, state = fd_normalize(state, r.normal(4.0, 2.0, 8))
            if t >= 2000:
                outs.append(out)
        outs = np.array(outs)
        assert abs(outs.mean()) < 0.1
        assert abs(outs.var() - 1.0) < 0.2

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            fd_normalize(NormState.initial(3, 0.5), np.zeros(4))

    def test_invalid_constant(self):
        with pytest.raises(ConfigError):
            NormState.initial(3, 1.0)


class TestFiNormalize:
    def test_two_bin_hand_case(self):
        state = NormState(np.zeros(2), np.zeros(2), 0.5, frame_count=1)
        out, new = fi_normalize(state, np.array([2.0, 4.0]))
        # mu = [1, 2], m2 = [2, 8], per-bin variances [1, 4]; shared mean 1.5, shared var 2.5
        np.testing.assert_allclose(new.mu, [1.0, 2.0])
        np.testing.assert_allclose(new.m2, [2.0, 8.0])
        np.testing.assert_allclose(out, (np.array([2.0, 4.0]) - 1.5) / math.sqrt(2.5))

    @given(arrays(np.float64, 5, elements=st.floats(-50, 50)), st.integers(0, 2**32 - 1))
    def test_shared_affine_map(self, frame, seed):
        r = np.random.default_rng(seed)
        mu = r.normal(size=5)
        state = NormState(mu, mu**2 + r.uniform(0.1, 2, 5), 0.7, frame_count=3)
        out, _ = fi_normalize(state, frame)
        # out = (x - m) / s with the same (m, s) for all bins, s > 0
        d_in = frame[:, None] - frame[None, :]
        d_out = out[:, None] - out[None, :]
        nz = np.abs(d_in) > 1e-6
        if nz.any():
            ratios = d_out[nz] / d_in[nz]
            assert np.all(ratios > 0)
            np.testing.assert_allclose(ratios, ratios[0], rtol=1e-6)

    def test_all_bins_at_shared_mean(self):
        state = NormState(np.full(4, 2.0), np.full(4, 5.0), 0.5, frame_count=1)
        out, _ = fi_normalize(state, np.full(4, 2.0))
        np.testing.assert_allclose(out, 0.0)


def _lps_frames(x):
    return np.log(np.maximum(np.abs(stft(x, FrameConfig())) ** 2, 1e-12))


@pytest.mark.parametrize("norm", ["fd_online", "fi_online"])
def test_level_invariance_after_convergence(norm):
    r = np.random.default_rng(3)
    x = r.standard_normal(16000 * 35) * (1 + 0.5 * np.sin(np.arange(16000 * 35) / 4000))
    kind = FeatureKind("lps", norm, 3.0)
    a = sequence_features(np.abs(stft(x, FrameConfig())), kind, 0.008)
    b = sequence_features(np.abs(stft(0.1 * x, FrameConfig())), kind, 0.008)
    settle = int(30.0 / 0.008)  # 10 tau
    rms = np.sqrt(np.mean((a[settle:] - b[settle:]) ** 2))
    assert rms < 0.05


@given(arrays(np.float64, (6, 4), elements=st.floats(-1e6, 1e6)))
def test_finite_for_finite_input(frames):
    for norm in ("fd_online", "fi_online"):
        ext = FeatureExtractor(FeatureKind("magnitude", norm), 4, 0.008)
        for f in np.abs(frames):
            assert np.all(np.isfinite(ext(f)))


def test_determinism_through_state():
    r = np.random.default_rng(0)
    state = NormState(r.normal(size=4), r.uniform(1, 2, 4), 0.9, frame_count=5)
    frame = r.normal(size=4)
    a, sa = fd_normalize(state, frame)
    b, sb = fd_normalize(state, frame)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(sa.m2, sb.m2)


def test_sequence_features_match_streaming(rng):
    mags = np.abs(rng.standard_normal((40, 257)))
    for norm in ("none", "fd_online", "fi_online"):
        kind = FeatureKind("lps", norm)
        ext = FeatureExtractor(kind, 257, 0.008)
        np.testing.assert_array_equal(sequence_features(mags, kind, 0.008), np.stack([ext(m) for m in mags]))


def test_feature_kind_validation():
    with pytest.raises(ConfigError):
        FeatureKind("mel")
    with pytest.raises(ConfigError):
        FeatureKind("lps", "per_utterance")
    with pytest.raises(ConfigError):
        FeatureKind(tau=0.0)
