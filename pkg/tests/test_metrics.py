import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasecode.metrics import (SweepSpec, direction_accuracy, gaussian_window, noise_sweep, psnr, ssim, ssim3d,
                               vid_aggregate, write_sweep_csv)
from phasecode.reconstruction import DecoderConfig
from phasecode.scenes import SyntheticScene, random_scenes, textured_scene


def _ssim_bruteforce(a, b, size, sigma, c1=1e-4, c2=9e-4):
    w = np.outer(gaussian_window(size, sigma), gaussian_window(size, sigma))
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            x, y = a[i:i + size, j:j + size], b[i:i + size, j:j + size]
            mx, my = np.sum(w * x), np.sum(w * y)
            vx, vy = np.sum(w * (x - mx) ** 2), np.sum(w * (y - my) ** 2)
            cxy = np.sum(w * (x - mx) * (y - my))
            vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


class TestPSNR:
    def test_identical_is_inf(self, rng):
        a = rng.uniform(size=(8, 8, 3))
        assert psnr(a, a) == math.inf

    def test_known_values(self):
        a = np.zeros((10, 10))
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-12)
        assert psnr(a, a + 0.01) == pytest.approx(40.0, abs=1e-12)
        assert psnr(a, a + 2.0, peak=20.0) == pytest.approx(20.0, abs=1e-12)

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(2, 9, 9))
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((3, 3)), np.zeros((3, 4)))


class TestSSIM:
    def test_identical(self, rng):
        a = rng.uniform(size=(24, 24, 3))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_inverted_is_low(self, rng):
        a = textured_scene(48, rng).clip(0, 1)
        assert ssim(a, 1 - a) < 0.1

    def test_matches_bruteforce_window(self, rng):
        a = rng.uniform(size=(14, 15))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b, win_size=8, sigma=1.5) == pytest.approx(_ssim_bruteforce(a, b, 8, 1.5), abs=1e-9)
        assert ssim(a, b) == pytest.approx(_ssim_bruteforce(a, b, 11, 1.5), abs=1e-9)

    def test_small_image(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((10, 10)), np.zeros((10, 10)))

    @given(seed=st.integers(0, 10000))
    @settings(max_examples=15, deadline=None)
    def test_symmetric_bounded(self, seed):
        r = np.random.default_rng(seed)
        a, b = r.uniform(size=(2, 16, 16))
        s = ssim(a, b)
        assert s == pytest.approx(ssim(b, a), abs=1e-12)
        assert -1 <= s <= 1


class TestSSIM3D:
    def test_identical(self, rng):
        a = rng.uniform(size=(8, 16, 16, 3))
        assert ssim3d(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_static_sequences_reduce_to_2d(self, rng):
        a = rng.uniform(size=(20, 20))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        assert ssim3d(np.stack([a] * 9), np.stack([b] * 9)) == pytest.approx(ssim(a, b), abs=1e-6)

    def test_monotone_in_noise(self, rng):
        a = rng.uniform(size=(9, 24, 24))
        noise = rng.normal(size=a.shape)
        vals = [ssim3d(a, a + s * noise) for s in (0.01, 0.02, 0.03)]
        assert vals[0] > vals[1] > vals[2]

    def test_short_sequence(self):
        with pytest.raises(ValueError):
            ssim3d(np.zeros((6, 16, 16)), np.zeros((6, 16, 16)))


class TestVID:
    def test_closed_form(self):
        assert vid_aggregate(0.1, 0.1, 0.1) == pytest.approx(10.0, abs=1e-12)
        assert vid_aggregate(1, 1, 1) == 0.0
        assert vid_aggregate(0.01, 0.01, 0.01) == pytest.approx(20.0, abs=1e-12)
        assert vid_aggregate(0.1, 0.01, 0.001) == pytest.approx(20.0, abs=1e-12)

    @given(st.floats(1e-6, 10), st.floats(1e-6, 10), st.floats(1e-6, 10), st.integers(0, 2))
    @settings(max_examples=30)
    def test_strictly_decreasing_in_each_argument(self, a, b, c, k):
        args = [a, b, c]
        bigger = list(args)
        bigger[k] *= 1.5
        assert vid_aggregate(*bigger) < vid_aggregate(*args)

    def test_decreasing(self):
        xs = [0.001, 0.01, 0.05, 0.3, 2.0]
        vals = [vid_aggregate(x, x, x) for x in xs]
        assert all(p > q for p, q in zip(vals, vals[1:]))

    @pytest.mark.parametrize("bad", [0.0, -0.5])
    def test_nonpositive(self, bad):
        with pytest.raises(ValueError):
            vid_aggregate(bad, 0.1, 0.1)


class TestDirectionAccuracy:
    def test_cases(self):
        assert direction_accuracy([((1, 0), (5, 0)), ((-2, 0), (-3, 0))]) == 1.0
        assert direction_accuracy([((1, 0), (-5, 0)), ((2, 0), (3, 0))]) == 0.5
        assert direction_accuracy([((0, 0), (5, 0))]) == 0.0
        assert direction_accuracy([((-1, 0), (5, 0)), ((2, 1), (-3, -1))]) == 0.0
        assert direction_accuracy([((0, 4), (5, 0))]) == 0.0  # orthogonal counts as a miss

    def test_empty(self):
        with pytest.raises(ValueError):
            direction_accuracy([])


class TestSweep:
    def test_identity_static_noiseless_is_inf(self, linear_stack, rng, tmp_path):
        scenes = [SyntheticScene(f"s{i}", textured_scene(32, rng), (0.0, 0.0)) for i in range(2)]
        rows = noise_sweep(SweepSpec((0.0,), (1.0,), scenes, decoding="identity"), linear_stack)
        assert len(rows) == 1 and rows[0].psnr_mean == math.inf
        assert rows[0].ssim_mean == pytest.approx(1.0)
        write_sweep_csv(tmp_path / "s.csv", rows)
        assert (tmp_path / "s.csv").read_text().splitlines()[1].split(",")[2] == "inf"

    def test_rows_and_csv(self, linear_stack, tmp_path):
        scenes = random_scenes(2, size=80, seed=3)
        spec = SweepSpec((0.0, 0.02), (1.0, 2 / 3), scenes, DecoderConfig(taper=0, v_max=24, step=4))
        rows = noise_sweep(spec, linear_stack)
        assert [(r.sigma, r.exposure_ratio) for r in rows] == [(0.0, 1.0), (0.02, 1.0), (0.0, 2 / 3), (0.02, 2 / 3)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_sweep_csv(p1, rows)
        write_sweep_csv(p2, noise_sweep(spec, linear_stack, workers=2))
        assert p1.read_text().splitlines()[0] == "sigma,exposure_ratio,psnr_mean,ssim_mean,dir_acc"
        assert p1.read_bytes() == p2.read_bytes()

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SweepSpec((-0.01,))
        with pytest.raises(ValueError):
            SweepSpec((0.01,), decoding="magic")
        with pytest.raises(ValueError):
            noise_sweep(SweepSpec((0.01,)), None)
