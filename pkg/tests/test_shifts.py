import math

import numpy as np
import pytest

from magdiff.errors import ConfigError, InputError
from magdiff.shifts import (
    DEFAULT_LADDERS,
    ROMAN_LEVELS,
    ShiftSpec,
    apply_shift,
    gaussian_blur,
    gaussian_noise,
    image_shift,
    intensity_ladder,
    warp_affine,
    _affine_linear,
    _reflect_index,
)


def test_ladders_strictly_increasing():
    for kind, table in DEFAULT_LADDERS.items():
        for param, values in table.items():
            assert len(values) == 6
            for lo, hi in zip(values, values[1:]):
                assert lo < hi, f"{kind}.{param} not increasing"


def test_intensity_ladder_lookup_and_errors():
    params = intensity_ladder("gaussian_noise", "III")
    assert params == {"sigma": 0.10}
    with pytest.raises(InputError):
        intensity_ladder("salt_pepper", "I")
    with pytest.raises(InputError):
        intensity_ladder("gaussian_noise", "VII")


def test_intensity_ladder_overrides():
    override = {"gaussian_noise": {"sigma": [1, 2, 3, 4, 5, 6]}}
    assert intensity_ladder("gaussian_noise", "II", override) == {"sigma": 2.0}
    with pytest.raises(ConfigError):
        intensity_ladder("gaussian_noise", "II", {"gaussian_noise": {"sig": [1] * 6}})
    with pytest.raises(ConfigError):
        intensity_ladder("gaussian_noise", "II", {"gaussian_noise": {"sigma": [1, 2]}})


def test_shift_spec_validation():
    ShiftSpec("gaussian_noise", 0.5, 1, level="II")
    with pytest.raises(InputError):
        ShiftSpec("gaussian_noise", 1.5, 1, level="II")
    with pytest.raises(InputError):
        ShiftSpec("gaussian_noise", 0.5, 1)
    with pytest.raises(InputError):
        ShiftSpec("gaussian_noise", 0.5, 1, level="II", params={"sigma": 0.1})
    with pytest.raises(InputError):
        ShiftSpec("gaussian_noise", 0.5, 1, params={"sigma": -0.1})
    with pytest.raises(InputError):
        ShiftSpec("image_shift", 0.5, 1, params={
            "max_rotation_deg": 5, "max_translate_frac": 0.1,
            "max_zoom_frac": 1.0, "max_shear_deg": 5,
        })
    with pytest.raises(InputError):
        ShiftSpec("gaussian_blur", 0.5, 1, params={"radius": 3})


def test_shift_spec_tag_is_canonical():
    a = ShiftSpec("gaussian_noise", 0.5, 42, level="II")
    b = ShiftSpec("gaussian_noise", 0.5, 42, level="II")
    assert a.tag() == b.tag()
    assert "sigma=0.05" in a.tag()
    custom = ShiftSpec("gaussian_noise", 0.5, 42, params={"sigma": 0.05})
    assert "level=custom" in custom.tag()


def test_noise_zero_sigma_identity():
    img = np.random.default_rng(0).uniform(size=(28, 28))
    out = gaussian_noise(img, 0.0, np.random.default_rng(1))
    assert np.array_equal(out, img)


def test_noise_clamps_to_unit_interval():
    ones = np.ones((28, 28))
    out = gaussian_noise(ones, 0.8, np.random.default_rng(2))
    assert out.max() <= 1.0
    zeros = np.zeros((28, 28))
    out = gaussian_noise(zeros, 0.8, np.random.default_rng(3))
    assert out.min() >= 0.0


def test_noise_mean_stays_near_constant():
    img = np.full((28, 28), 0.5)
    out = gaussian_noise(img, 0.1, np.random.default_rng(4))
    assert abs(out.mean() - 0.5) < 0.01


def test_reflect_index_folding():
    assert [_reflect_index(i, 4) for i in range(-3, 7)] == [3, 2, 1, 0, 1, 2, 3, 2, 1, 0]
    assert _reflect_index(5, 1) == 0


def test_blur_zero_sigma_identity():
    img = np.random.default_rng(5).uniform(size=(10, 12))
    assert np.array_equal(gaussian_blur(img, 0.0), img)


def test_blur_preserves_constant_image():
    img = np.full((16, 16), 0.37)
    out = gaussian_blur(img, 1.3)
    assert np.max(np.abs(out - 0.37)) < 1e-15


def test_blur_preserves_interior_mass():
    img = np.zeros((28, 28))
    img[14, 13] = 1.0
    out = gaussian_blur(img, 1.0)  # radius 3, well inside the borders
    assert abs(out.sum() - 1.0) < 1e-9


def test_blur_matches_bruteforce_oracle():
    rng = np.random.default_rng(6)
    img = rng.uniform(size=(8, 9))
    sigma = 0.8
    radius = math.ceil(3 * sigma)
    taps = np.arange(-radius, radius + 1)
    kernel = np.exp(-(taps**2) / (2 * sigma**2))
    kernel /= kernel.sum()

    def blur_1d(vector):
        out = np.zeros_like(vector)
        for i in range(len(vector)):
            for t, w in zip(taps, kernel):
                out[i] += w * vector[_reflect_index(i + t, len(vector))]
        return out

    rows_done = np.stack([blur_1d(row) for row in img])
    want = np.stack([blur_1d(col) for col in rows_done.T]).T
    got = gaussian_blur(img, sigma)
    assert np.max(np.abs(got - want)) < 1e-12


def test_warp_identity():
    img = np.random.default_rng(7).uniform(size=(12, 12))
    out = warp_affine(img, np.eye(2), (0.0, 0.0))
    assert np.max(np.abs(out - img)) < 1e-9


def test_warp_full_turn_identity():
    img = np.random.default_rng(8).uniform(size=(12, 12))
    out = warp_affine(img, _affine_linear(360.0, 0.0, 1.0), (0.0, 0.0))
    assert np.max(np.abs(out - img)) < 1e-9


def test_warp_translation_shifts_columns():
    img = np.random.default_rng(9).uniform(size=(8, 8))
    out = warp_affine(img, np.eye(2), (1.0, 0.0))
    assert np.allclose(out[:, 1:], img[:, :-1], atol=1e-12)
    assert np.allclose(out[:, 0], 0.0)


def test_warp_rotation_roundtrip_interior():
    # Bilinear resampling low-passes, so the roundtrip bound only holds
    # for smooth content; white noise would not survive two passes.
    ys, xs = np.mgrid[0:28, 0:28]
    img = 0.5 + 0.3 * np.sin(2 * np.pi * xs / 28) * np.cos(2 * np.pi * ys / 28)
    fwd = warp_affine(img, _affine_linear(20.0, 0.0, 1.0), (0.0, 0.0))
    back = warp_affine(fwd, _affine_linear(-20.0, 0.0, 1.0), (0.0, 0.0))
    inner = (slice(7, 21), slice(7, 21))
    assert np.max(np.abs(back[inner] - img[inner])) < 2e-2


def test_image_shift_zero_bounds_identity():
    img = np.random.default_rng(11).uniform(size=(10, 10))
    params = {
        "max_rotation_deg": 0.0,
        "max_translate_frac": 0.0,
        "max_zoom_frac": 0.0,
        "max_shear_deg": 0.0,
    }
    out = image_shift(img, params, np.random.default_rng(12))
    assert np.max(np.abs(out - img)) < 1e-9


def test_image_shift_moves_pixels():
    img = np.zeros((20, 20))
    img[8:12, 8:12] = 1.0
    params = intensity_ladder("image_shift", "VI")
    out = image_shift(img, params, np.random.default_rng(13))
    assert not np.array_equal(out, img)
    assert 0.0 <= out.min() and out.max() <= 1.0


def dataset(n=10, seed=14):
    return np.random.default_rng(seed).uniform(size=(n, 6, 6))


def test_apply_shift_delta_zero_is_identity():
    data = dataset()
    spec = ShiftSpec("gaussian_noise", 0.0, 3, level="VI")
    assert np.array_equal(apply_shift(data, spec), data)


def test_apply_shift_exact_subset_size():
    data = dataset()
    spec = ShiftSpec("gaussian_noise", 0.5, 3, params={"sigma": 0.5})
    out = apply_shift(data, spec)
    changed = [i for i in range(10) if not np.array_equal(out[i], data[i])]
    assert len(changed) == 5


def test_apply_shift_unshifted_rows_bit_identical():
    data = dataset()
    spec = ShiftSpec("gaussian_blur", 0.3, 5, params={"sigma": 1.0})
    out = apply_shift(data, spec)
    untouched = [i for i in range(10) if np.array_equal(out[i], data[i])]
    assert len(untouched) == 7
    for i in untouched:
        assert out[i].tobytes() == data[i].tobytes()


def test_apply_shift_reproducible_and_seed_sensitive():
    data = dataset(n=24)
    spec = ShiftSpec("image_shift", 0.5, 21, level="IV")
    a = apply_shift(data, spec)
    b = apply_shift(data, spec)
    assert np.array_equal(a, b)
    other = apply_shift(data, ShiftSpec("image_shift", 0.5, 22, level="IV"))
    assert not np.array_equal(a, other)


def test_apply_shift_noise_zero_sigma_noop():
    data = dataset()
    spec = ShiftSpec("gaussian_noise", 1.0, 3, params={"sigma": 0.0})
    assert np.array_equal(apply_shift(data, spec), data)


def test_apply_shift_rounding_half_to_even():
    data = dataset(n=5)
    # 0.5 * 5 = 2.5 rounds to 2 under round-half-even.
    spec = ShiftSpec("gaussian_noise", 0.5, 3, params={"sigma": 0.5})
    out = apply_shift(data, spec)
    changed = [i for i in range(5) if not np.array_equal(out[i], data[i])]
    assert len(changed) == 2
