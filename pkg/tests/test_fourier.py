import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from phasecode.fourier import (circular_convolve, embed_centered, fourier_shift, integer_shift, pad_centered,
                               point_mirror, shift_multiplier)


@pytest.mark.parametrize("shape", [(16, 16), (15, 17), (8, 9)])
def test_integer_fourier_shift_is_roll(rng, shape):
    x = rng.normal(size=shape)
    assert np.allclose(fourier_shift(x, 3, -2), np.roll(x, (3, -2), axis=(0, 1)), atol=1e-12)
    assert np.array_equal(integer_shift(x, 2.6, -1.4), np.roll(x, (3, -1), axis=(0, 1)))


@given(dy=st.floats(-5, 5), dx=st.floats(-5, 5), even=st.booleans())
@settings(max_examples=30, deadline=None)
def test_multiplier_is_hermitian(dy, dx, even):
    n = 12 if even else 13
    m = shift_multiplier((n, n), dy, dx)
    iy = (-np.arange(n)) % n
    assert np.allclose(m[iy][:, iy], np.conj(m), atol=1e-12)


@given(dy=st.floats(-4, 4), dx=st.floats(-4, 4))
@settings(max_examples=20, deadline=None)
def test_shift_roundtrip_odd_size(dy, dx):
    x = np.random.default_rng(0).normal(size=(15, 15))
    back = fourier_shift(fourier_shift(x, dy, dx), -dy, -dx)
    assert np.allclose(back, x, atol=1e-10)


def test_shift_preserves_mean(rng):
    x = rng.normal(size=(20, 20, 3))
    assert np.allclose(fourier_shift(x, 0.3, 1.7).mean(axis=(0, 1)), x.mean(axis=(0, 1)))


def test_embed_and_convolve_match_scipy(rng):
    img = rng.normal(size=(24, 20))
    k = rng.uniform(size=(5, 5))
    assert np.allclose(circular_convolve(img, k), ndimage.convolve(img, k, mode="wrap"), atol=1e-12)
    e = embed_centered(k, (24, 20))
    assert e[0, 0] == k[2, 2]
    with pytest.raises(ValueError):
        embed_centered(k, (4, 4))


def test_pad_centered():
    k = np.arange(9.0).reshape(3, 3)
    p = pad_centered(k, 8)
    assert p[4, 4] == k[1, 1] and p.sum() == k.sum()
    with pytest.raises(ValueError):
        pad_centered(k, 2)


def test_point_mirror(rng):
    x = rng.normal(size=(9, 10))
    m = point_mirror(x)
    assert m[4, 5] == x[4, 5]
    assert m[4 + 1, 5 + 2] == x[4 - 1, 5 - 2]
    assert np.array_equal(point_mirror(m), x)
