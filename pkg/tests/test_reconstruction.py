import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import fft as sfft

from phasecode.codeopt import ncc
from phasecode.fourier import circular_convolve, pad_centered
from phasecode.imaging import add_awgn, code_image
from phasecode.metrics import psnr
from phasecode.reconstruction import (DecoderConfig, _pick, edge_taper,
                                      effective_kernel, estimate_motion, estimate_noise_sigma, frame_times,
                                      motion_evidence, reconstruct_frame, reconstruct_video, residual_score,
                                      tikhonov_deconvolve, velocity_grid)
from phasecode.scenes import SyntheticScene, gt_times, textured_scene

PERIODIC = DecoderConfig(taper=0)


def _delta(size=9):
    k = np.zeros((3, size, size))
    k[:, size // 2, size // 2] = 1.0
    return k


def _coded_scene(stack, v, sigma, seed=0, size=96):
    rng = np.random.default_rng(seed)
    sc = SyntheticScene("s", textured_scene(size, rng), v)
    b = add_awgn(code_image(sc.frames(stack.n), stack, "periodic"), sigma, seed + 100)
    return sc, b


def _reblur(S, K):
    return np.stack([circular_convolve(S[..., c], K[c]) for c in range(3)], axis=-1)


class TestGrid:
    def test_horizontal(self):
        g = velocity_grid(32, 2, horizontal_only=True)
        assert len(g) == 33 and g[0] == (-32, 0.0) and (0, 0.0) in g

    def test_2d_clipped_to_radius(self):
        g = velocity_grid(32, 2)
        assert all(math.hypot(*v) <= 32 + 1e-9 for v in g)
        assert (32, 0) in g and (32, 32) not in g


class TestEffectiveKernel:
    def test_zero_velocity_is_mean_kernel(self, linear_stack):
        K = effective_kernel(linear_stack, (0, 0))
        assert K.kernel.shape == (3, 31 + 32 + 8, 31 + 32 + 8)
        assert np.allclose(K.kernel, pad_centered(linear_stack.time_mean(), 71), atol=1e-12)

    def test_unit_sum(self, linear_stack):
        K = effective_kernel(linear_stack, (17.5, -6.0))
        assert np.allclose(K.kernel.sum(axis=(1, 2)), 1.0, atol=1e-6)

    def test_constant_schedule_direction_blind(self, constant_stack):
        a = effective_kernel(constant_stack, (16, 0)).kernel
        b = effective_kernel(constant_stack, (-16, 0)).kernel
        assert np.max(np.abs(a - b)) < 1e-6

    def test_linear_schedule_distinguishes_direction(self, linear_stack):
        a = effective_kernel(linear_stack, (16, 0)).kernel
        b = effective_kernel(linear_stack, (-16, 0)).kernel
        assert ncc(a, b) < 0.99

    def test_out_of_range(self, linear_stack):
        with pytest.raises(ValueError):
            effective_kernel(linear_stack, (40, 0))


class TestTikhonov:
    def test_delta_closed_form(self, rng):
        B = rng.uniform(size=(32, 32, 3))
        eps = 0.3
        out = tikhonov_deconvolve(B, _delta(), eps, taper=0)
        assert np.max(np.abs(out - B / (1 + eps))) < 1e-6

    def test_noiseless_inversion(self, linear_stack, rng):
        # frequencies beyond the diffraction cutoff (about 0.39 cycles/px in red) are
        # erased by the optics, so the test texture is limited to the passband
        S = textured_scene(96, rng)
        f = np.hypot(sfft.fftfreq(96)[:, None], sfft.fftfreq(96)[None, :])
        S = sfft.ifft2(sfft.fft2(S, axes=(0, 1)) * (f < 0.35)[..., None], axes=(0, 1)).real
        K = effective_kernel(linear_stack, (12, 0))
        B = _reblur(S, K.kernel)
        out = tikhonov_deconvolve(B, K, 1e-6, taper=0)
        assert psnr(out, S) > 40

    def test_large_epsilon_vanishes(self, linear_stack, rng):
        B = rng.uniform(size=(72, 72, 3))
        out = tikhonov_deconvolve(B, effective_kernel(linear_stack, (8, 0)), 1e6, taper=16)
        assert np.linalg.norm(out) < 1e-3

    @pytest.mark.parametrize("eps", [0.0, -1e-3])
    def test_bad_epsilon(self, eps):
        with pytest.raises(ValueError):
            tikhonov_deconvolve(np.ones((16, 16, 3)), _delta(), eps)

    def test_taper_keeps_interior(self, rng):
        B = rng.uniform(size=(64, 64, 3))
        t = edge_taper(B, 16)
        assert np.array_equal(t[16:-16, 16:-16], B[16:-16, 16:-16])
        assert not np.allclose(t[0], B[0])


class TestResidualScore:
    def test_zero_image(self, linear_stack):
        assert residual_score(np.zeros((72, 72, 3)), effective_kernel(linear_stack, (4, 0)), 1e-2) == 0.0

    def test_delta(self, rng):
        B = rng.uniform(size=(20, 24, 3))
        eps = 0.05
        assert residual_score(B, _delta(), eps) == pytest.approx(eps / (1 + eps) * np.sum(B ** 2), rel=1e-12)

    def test_equals_minimized_objective(self, linear_stack, rng):
        B = textured_scene(80, rng)
        K = effective_kernel(linear_stack, (10, 0))
        eps = 1e-2
        S = tikhonov_deconvolve(B, K, eps, taper=0)
        direct = np.sum((_reblur(S, K.kernel) - B) ** 2) + eps * np.sum(S ** 2)
        assert residual_score(B, K, eps) == pytest.approx(direct, rel=1e-6)

    def test_nonnegative(self, linear_stack, rng):
        B = rng.normal(size=(72, 72, 3))
        for v in [(0, 0), (12, 0), (-30, 0)]:
            assert residual_score(B, effective_kernel(linear_stack, v), 1e-3) >= 0


@given(seed=st.integers(0, 10 ** 6), speed=st.sampled_from([4.0, 10.0, 22.0]))
@settings(max_examples=8, deadline=None)
def test_uncoded_scores_are_direction_blind(constant_stack, seed, speed):
    B = np.random.default_rng(seed).uniform(size=(72, 72, 3))
    kp, km = effective_kernel(constant_stack, (speed, 0)), effective_kernel(constant_stack, (-speed, 0))
    assert abs(residual_score(B, kp, 1e-2) - residual_score(B, km, 1e-2)) < 1e-6
    assert abs(motion_evidence(B, kp, 0.01, 1e-3) - motion_evidence(B, km, 0.01, 1e-3)) < 1e-6


class TestEvidence:
    def test_nonnegative(self, linear_stack, rng):
        B = rng.uniform(size=(72, 72, 3))
        assert motion_evidence(B, effective_kernel(linear_stack, (8, 0)), 0.01, 1e-3) >= 0

    def test_bad_sigma(self, linear_stack):
        with pytest.raises(ValueError):
            motion_evidence(np.ones((72, 72, 3)), effective_kernel(linear_stack, (8, 0)), 0.0, 1e-3)

    def test_noise_estimate(self, rng):
        x = np.full((128, 128, 3), 0.4)
        assert estimate_noise_sigma(add_awgn(x, 0.02, 1)) == pytest.approx(0.02, rel=0.05)


class TestEstimateMotion:
    def test_recovers_direction_and_speed(self, linear_stack):
        _, B = _coded_scene(linear_stack, (12.0, 0.0), 0.01, seed=3)
        hyp, table = estimate_motion(B, linear_stack, decoder=PERIODIC)
        assert hyp.velocity_px[0] > 0
        assert abs(hyp.velocity_px[0] - 12.0) <= 2.0
        assert len(table.entries) == 33
        assert all(np.isfinite(s) and s >= 0 for _, s in table.entries)

    def test_negative_direction(self, linear_stack):
        _, B = _coded_scene(linear_stack, (-20.0, 0.0), 0.01, seed=4)
        hyp, _ = estimate_motion(B, linear_stack, decoder=PERIODIC)
        assert hyp.velocity_px[0] < 0 and abs(hyp.velocity_px[0] + 20.0) <= 2.0

    def test_uncoded_scores_symmetric(self, constant_stack):
        _, B = _coded_scene(constant_stack, (12.0, 0.0), 0.01, seed=3)
        _, table = estimate_motion(B, constant_stack, decoder=PERIODIC)
        for s in (4, 12, 20):
            assert abs(table.score((s, 0)) - table.score((-s, 0))) < 1e-6

    def test_static_scene(self, linear_stack):
        _, B = _coded_scene(linear_stack, (0.0, 0.0), 0.01, seed=5)
        hyp, _ = estimate_motion(B, linear_stack, decoder=PERIODIC)
        assert hyp.velocity_px == (0.0, 0.0)

    def test_explicit_grid_and_csv(self, linear_stack, tmp_path):
        _, B = _coded_scene(linear_stack, (8.0, 0.0), 0.01, seed=6)
        hyp, table = estimate_motion(B, linear_stack, grid=[(-8, 0), (0, 0), (8, 0)], decoder=PERIODIC)
        assert hyp.velocity_px == (8.0, 0.0)
        table.write_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "vx,vy,score" and len(lines) == 4

    def test_empty_grid(self, linear_stack):
        with pytest.raises(ValueError):
            estimate_motion(np.ones((72, 72, 3)), linear_stack, grid=[])

    def test_order_independent(self, linear_stack):
        _, B = _coded_scene(linear_stack, (10.0, 0.0), 0.01, seed=8)
        g = [(float(v), 0.0) for v in range(-16, 17, 4)]
        a, _ = estimate_motion(B, linear_stack, grid=g, decoder=PERIODIC)
        b, _ = estimate_motion(B, linear_stack, grid=g[::-1], decoder=PERIODIC)
        assert a == b


class TestTieBreak:
    def test_smaller_speed_wins(self):
        assert _pick([((4.0, 0.0), 1.0), ((2.0, 0.0), 1.0), ((-6.0, 0.0), 1.0)]) == (2.0, 0.0)

    def test_lexicographic(self):
        assert _pick([((2.0, 0.0), 5.0), ((-2.0, 0.0), 5.0)]) == (-2.0, 0.0)
        assert _pick([((0.0, 2.0), 5.0), ((0.0, -2.0), 5.0), ((2.0, 0.0), 5.0)]) == (0.0, -2.0)

    def test_strict_minimum(self):
        assert _pick([((0.0, 0.0), 2.0), ((8.0, 0.0), 1.0)]) == (8.0, 0.0)


class TestReconstruct:
    def test_static_time_independent(self, linear_stack, rng):
        B = code_image([textured_scene(80, rng)] * 49, linear_stack, "periodic")
        frames = [reconstruct_frame(B, linear_stack, (0, 0), t, decoder=PERIODIC) for t in (-1, -0.3, 0.5, 1)]
        for f in frames[1:]:
            assert np.max(np.abs(f - frames[0])) < 1e-6

    @pytest.mark.parametrize("t", [-1.01, 1.5])
    def test_time_range(self, linear_stack, t):
        with pytest.raises(ValueError):
            reconstruct_frame(np.ones((72, 72, 3)), linear_stack, (0, 0), t)

    def test_beats_blurred_input(self, linear_stack):
        sc, B = _coded_scene(linear_stack, (16.0, 0.0), 0.01, seed=9)
        frames, hyp, _ = reconstruct_video(B, linear_stack, m=7, decoder=PERIODIC)
        gt = sc.frames_at(gt_times(7))
        gain = np.mean([psnr(f, g) for f, g in zip(frames, gt)]) - np.mean([psnr(B, g) for g in gt])
        assert gain >= 3.0

    def test_reencoding_consistency(self, linear_stack):
        _, B = _coded_scene(linear_stack, (-14.0, 0.0), 0.0, seed=10)
        frames, hyp, _ = reconstruct_video(B, linear_stack, m=49, decoder=PERIODIC)
        again = code_image(frames, linear_stack, "periodic")
        assert np.linalg.norm(again - B) / np.linalg.norm(B) < 0.05

    def test_frame_times(self):
        assert np.allclose(frame_times(25), -1 + 2 * np.arange(25) / 24)
        assert np.allclose(frame_times(7), [-1, -2 / 3, -1 / 3, 0, 1 / 3, 2 / 3, 1])
        assert np.array_equal(frame_times(1), [0.0])
        with pytest.raises(ValueError):
            frame_times(0)

    def test_video_counts_and_single_frame(self, linear_stack):
        _, B = _coded_scene(linear_stack, (8.0, 0.0), 0.01, seed=11, size=80)
        frames, hyp, table = reconstruct_video(B, linear_stack, m=25, decoder=PERIODIC)
        assert frames.shape == (25, 80, 80, 3) and table is not None
        one, hyp1, _ = reconstruct_video(B, linear_stack, m=1, decoder=PERIODIC)
        mid = reconstruct_frame(B, linear_stack, hyp1, 0.0, decoder=PERIODIC)
        assert np.array_equal(one[0], mid)

    def test_known_velocity_skips_estimation(self, linear_stack):
        _, B = _coded_scene(linear_stack, (8.0, 0.0), 0.01, seed=12, size=80)
        frames, hyp, table = reconstruct_video(B, linear_stack, m=3, decoder=PERIODIC, velocity=(8, 0))
        assert table is None and hyp.velocity_px == (8.0, 0.0)
