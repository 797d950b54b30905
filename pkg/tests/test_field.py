import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simulmeas.field import (
    Domain,
    Field2D,
    IntensityImage,
    Normalization,
    SceneKind,
    dft2_unitary,
    intensity,
    make_scene,
)
from simulmeas.pgm import write_pgm


def brute_dft(x):
    """Direct O(N^2) sum with center-origin output frequencies."""
    side = x.shape[0]
    r = np.arange(side)
    u = r - side // 2
    w = np.exp(-2j * np.pi * np.outer(u, r) / side)
    out = np.zeros((side, side), dtype=complex)
    for a in range(side):
        for b in range(side):
            out[a, b] = np.sum(x * np.outer(w[a], w[b])) / side
    return out


def random_field(rng, side, domain=Domain.POSITION):
    return Field2D(rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side)), domain)


side_st = st.sampled_from([2, 4, 8, 16])


class TestField2D:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            Field2D(np.ones((6, 6)))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            Field2D(np.ones((4, 8)))

    def test_rejects_side_one(self):
        with pytest.raises(ValueError):
            Field2D(np.ones((1, 1)))

    def test_rejects_nan(self):
        v = np.ones((4, 4))
        v[1, 1] = np.nan
        with pytest.raises(ValueError):
            Field2D(v)

    def test_values_read_only(self):
        f = Field2D(np.ones((4, 4)))
        with pytest.raises(ValueError):
            f.values[0, 0] = 2

    def test_total_power(self):
        f = Field2D(np.full((4, 4), 0.5 + 0.5j))
        assert f.total_power == pytest.approx(16 * 0.5)


class TestDft:
    def test_delta_gives_flat_spectrum(self):
        x = np.zeros((8, 8))
        x[0, 0] = 1
        out = dft2_unitary(Field2D(x)).values
        np.testing.assert_allclose(out, np.full((8, 8), 1 / 8), atol=1e-15)

    def test_constant_gives_single_zero_frequency(self):
        out = dft2_unitary(Field2D(np.ones((8, 8)))).values
        expected = np.zeros((8, 8))
        expected[4, 4] = 8.0
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_domain_toggles(self):
        f = Field2D(np.ones((4, 4)))
        k = dft2_unitary(f)
        assert k.domain is Domain.MOMENTUM
        assert dft2_unitary(k).domain is Domain.POSITION

    @pytest.mark.parametrize("side", [2, 4, 8, 16])
    def test_matches_brute_force(self, side):
        rng = np.random.default_rng(side)
        f = random_field(rng, side)
        np.testing.assert_allclose(dft2_unitary(f).values, brute_dft(f.values), rtol=0, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(side=side_st, seed=st.integers(0, 2**32 - 1))
    def test_parseval(self, side, seed):
        f = random_field(np.random.default_rng(seed), side)
        k = dft2_unitary(f)
        assert k.total_power == pytest.approx(f.total_power, rel=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(side=side_st, seed=st.integers(0, 2**32 - 1))
    def test_round_trip(self, side, seed):
        k = random_field(np.random.default_rng(seed), side, Domain.MOMENTUM)
        back = dft2_unitary(dft2_unitary(k))
        np.testing.assert_allclose(back.values, k.values, rtol=0, atol=1e-10)


class TestIntensity:
    def test_raw(self):
        img = intensity(Field2D(np.full((4, 4), 0.5)), Normalization.RAW)
        np.testing.assert_array_equal(img.values, np.full((4, 4), 0.25))
        assert img.normalization is Normalization.RAW

    @settings(max_examples=30, deadline=None)
    @given(side=side_st, seed=st.integers(0, 2**32 - 1))
    def test_unit_sum(self, side, seed):
        img = intensity(random_field(np.random.default_rng(seed), side), "unit-sum")
        assert img.values.sum() == pytest.approx(1.0, abs=1e-9)

    def test_triple_slit_momentum_unit_max(self):
        k = dft2_unitary(make_scene(SceneKind.TRIPLE_SLIT, 128))
        img = intensity(k, Normalization.UNIT_MAX)
        assert img.values.max() == pytest.approx(1.0, abs=1e-9)
        # the zero frequency is the brightest point of an amplitude mask spectrum
        assert img.values[64, 64] == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("norm", ["unit-sum", "unit-max"])
    def test_zero_field_rejects_unit_norms(self, norm):
        with pytest.raises(ValueError):
            intensity(Field2D(np.zeros((4, 4))), norm)

    def test_zero_field_raw_ok(self):
        assert intensity(Field2D(np.zeros((4, 4)))).values.sum() == 0

    def test_image_rejects_negative(self):
        with pytest.raises(ValueError):
            IntensityImage(-np.ones((4, 4)))

    def test_normalized(self):
        img = IntensityImage(np.arange(16.0).reshape(4, 4)).normalized(Normalization.UNIT_MAX)
        assert img.values.max() == 1.0


class TestScenes:
    def test_triple_slit_fringes(self):
        f = make_scene(SceneKind.TRIPLE_SLIT, 128)
        k = intensity(dft2_unitary(f), Normalization.UNIT_MAX).values
        row = k[64]
        # three slits at separation s give principal maxima every side/s pixels
        # with two weaker subsidiary maxima between them
        period = 128 // 16
        assert row[64 + period] > 5 * row[64 + period // 2]
        assert row[64 + period] > 0.5 * row[64]

    def test_triple_slit_has_three_openings(self):
        mask = np.abs(make_scene(SceneKind.TRIPLE_SLIT, 64).values) ** 2
        cols = mask.any(axis=0).astype(int)
        assert np.count_nonzero(np.diff(cols) == 1) == 3

    def test_double_slit_has_two_openings(self):
        mask = np.abs(make_scene(SceneKind.DOUBLE_SLIT, 64).values) ** 2
        cols = mask.any(axis=0).astype(int)
        assert np.count_nonzero(np.diff(cols) == 1) == 2

    def test_zero_width_is_degenerate(self):
        with pytest.raises(ValueError, match="degenerate"):
            make_scene(SceneKind.DOUBLE_SLIT, 64, slit_width=0)

    def test_geometry_exceeding_grid(self):
        with pytest.raises(ValueError):
            make_scene(SceneKind.TRIPLE_SLIT, 32, slit_width=4, separation=20)

    def test_overlapping_slits(self):
        with pytest.raises(ValueError):
            make_scene(SceneKind.DOUBLE_SLIT, 64, slit_width=8, separation=4)

    def test_side_not_power_of_two(self):
        with pytest.raises(ValueError):
            make_scene(SceneKind.DOUBLE_SLIT, 48)

    def test_deterministic(self):
        a = make_scene("rectangles", 64).values
        b = make_scene("rectangles", 64).values
        np.testing.assert_array_equal(a, b)

    def test_zero_phase_amplitude_is_sqrt_intensity(self):
        f = make_scene(SceneKind.RECTANGLES, 64)
        assert np.all(f.values.imag == 0)
        assert set(np.round(np.unique(np.abs(f.values) ** 2), 12)) == {0.0, 0.3, 0.6, 1.0}

    def test_from_uniform_image(self, tmp_path):
        path = tmp_path / "white.pgm"
        write_pgm(path, np.full((64, 64), 255), 255)
        f = make_scene(SceneKind.FROM_IMAGE, 64, image=path)
        np.testing.assert_allclose(np.abs(f.values), 1.0)
        assert f.total_power == pytest.approx(64**2 * 1.0**2)

    def test_from_gray_image(self, tmp_path):
        path = tmp_path / "gray.pgm"
        write_pgm(path, np.full((16, 16), 16384), 65535)
        f = make_scene(SceneKind.FROM_IMAGE, 16, image=path)
        c = np.sqrt(16384 / 65535)
        assert f.total_power == pytest.approx(16**2 * c**2)

    def test_from_image_size_mismatch(self, tmp_path):
        path = tmp_path / "small.pgm"
        write_pgm(path, np.ones((32, 32), dtype=int), 255)
        with pytest.raises(ValueError):
            make_scene(SceneKind.FROM_IMAGE, 64, image=path)

    def test_from_image_needs_image(self):
        with pytest.raises(ValueError):
            make_scene(SceneKind.FROM_IMAGE, 64)
