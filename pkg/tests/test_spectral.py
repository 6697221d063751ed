import numpy as np
import pytest

from spectral_jdec import spectral


def rng(seed=0):
    return np.random.default_rng(seed)


class TestDctBasis:
    def test_n1_is_identity(self):
        assert np.allclose(spectral.dct_basis(1).m, [[1.0]])

    def test_row0_constant(self):
        d = spectral.dct_basis(8).m
        assert np.allclose(d[0], 1.0 / (2.0 * np.sqrt(2.0)))

    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
    def test_orthonormal(self, n):
        d = spectral.dct_basis(n).m
        err = np.abs(d @ d.T - np.eye(n)).max()
        assert err < 1e-12

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            spectral.dct_basis(0)


class TestDct2:
    def test_constant_block(self):
        x = spectral.dct2(np.ones((8, 8)))
        assert x[0, 0] == pytest.approx(8.0, abs=1e-12)
        x[0, 0] = 0.0
        assert np.abs(x).max() < 1e-12

    def test_zero_block(self):
        assert np.abs(spectral.dct2(np.zeros((8, 8)))).max() == 0.0

    def test_roundtrip(self):
        g = rng(1)
        for _ in range(50):
            b = g.uniform(-128, 127, (8, 8))
            assert np.abs(spectral.idct2(spectral.dct2(b)) - b).max() < 1e-9

    def test_parseval(self):
        g = rng(2)
        for _ in range(50):
            b = g.uniform(-128, 127, (8, 8))
            assert np.sum(spectral.dct2(b) ** 2) == pytest.approx(np.sum(b**2), abs=1e-9)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            spectral.dct2(np.zeros((4, 4)))


class TestIdct2:
    def test_dc_only(self):
        x = np.zeros((8, 8))
        x[0, 0] = 8.0
        assert np.allclose(spectral.idct2(x), 1.0, atol=1e-12)

    def test_zero(self):
        assert np.abs(spectral.idct2(np.zeros((8, 8)))).max() == 0.0


class TestQuantize:
    def test_round_positive(self):
        x = np.zeros((8, 8))
        x[0, 0] = 100.0
        q = np.full((8, 8), 16, dtype=np.int64)
        assert spectral.quantize(x, q)[0, 0] == 6  # 6.25 rounds down

    def test_half_away_from_zero(self):
        q = np.full((8, 8), 2, dtype=np.int64)
        x = np.full((8, 8), 3.0)
        assert spectral.quantize(x, q)[0, 0] == 2  # 1.5 -> 2
        assert spectral.quantize(-x, q)[0, 0] == -2  # -1.5 -> -2

    def test_zero_maps_to_zero(self):
        q = np.full((8, 8), 7, dtype=np.int64)
        assert np.all(spectral.quantize(np.zeros((8, 8)), q) == 0)

    def test_idempotence_on_integer_blocks(self):
        g = rng(3)
        for _ in range(100):
            q = g.integers(1, 256, (8, 8))
            c = g.integers(-1023, 1024, (8, 8)) // q  # keep dequantized in range
            x = spectral.dequantize(c, q)
            assert np.array_equal(spectral.quantize(x, q), c)

    def test_overflow_rejected(self):
        x = np.zeros((8, 8))
        x[0, 0] = 5000.0
        q = np.ones((8, 8), dtype=np.int64)
        with pytest.raises(ValueError):
            spectral.quantize(x, q)

    def test_table_validated(self):
        with pytest.raises(ValueError):
            spectral.quantize(np.zeros((8, 8)), np.zeros((8, 8), dtype=np.int64))


class TestDequantize:
    def test_elementwise_product(self):
        c = np.zeros((8, 8), dtype=np.int32)
        c[0, 0] = 6
        q = np.full((8, 8), 16, dtype=np.int64)
        assert spectral.dequantize(c, q)[0, 0] == 96.0

    def test_zero(self):
        q = np.full((8, 8), 16, dtype=np.int64)
        assert np.abs(spectral.dequantize(np.zeros((8, 8), dtype=np.int32), q)).max() == 0.0

    def test_error_bound(self):
        g = rng(4)
        for _ in range(100):
            q = g.integers(1, 256, (8, 8))
            x = g.uniform(-500, 500, (8, 8))
            back = spectral.dequantize(spectral.quantize(x, q), q)
            assert np.all(np.abs(x - back) <= q / 2.0 + 1e-9)


def spatial_tile_dct(spectrum, b):
    """Independent oracle: b x b DCTs of the spatial tiles of idct2(spectrum)."""
    spatial = spectral.idct2(spectrum)
    db = spectral.dct_basis(b).m
    g = 8 // b
    out = np.empty((g, g, b, b))
    for r in range(g):
        for c in range(g):
            tile = spatial[r * b:(r + 1) * b, c * b:(c + 1) * b]
            out[r, c] = db @ tile @ db.T
    return out


class TestSubblock:
    def test_b8_identity(self):
        g = rng(5)
        x = g.uniform(-100, 100, (8, 8))
        out = spectral.subblock_convert(x, 8)
        assert out.shape == (1, 1, 8, 8)
        assert np.abs(out[0, 0] - x).max() < 1e-9

    def test_b1_gives_pixels(self):
        g = rng(6)
        x = g.uniform(-100, 100, (8, 8))
        out = spectral.subblock_convert(x, 1)
        assert out.shape == (8, 8, 1, 1)
        assert np.abs(out[:, :, 0, 0] - spectral.idct2(x)).max() < 1e-9

    @pytest.mark.parametrize("b", [1, 2, 4])
    def test_matches_spatial_oracle(self, b):
        g = rng(7)
        for _ in range(50):
            x = g.uniform(-128, 128, (8, 8))
            assert np.abs(spectral.subblock_convert(x, b) - spatial_tile_dct(x, b)).max() < 1e-9

    @pytest.mark.parametrize("b", [1, 2, 4])
    def test_norm_preserved(self, b):
        g = rng(8)
        x = g.uniform(-128, 128, (8, 8))
        out = spectral.subblock_convert(x, b)
        assert np.sum(out**2) == pytest.approx(np.sum(x**2), rel=1e-12)

    @pytest.mark.parametrize("b", [1, 2, 4, 8])
    def test_roundtrip(self, b):
        g = rng(9)
        for _ in range(20):
            x = g.uniform(-128, 128, (8, 8))
            back = spectral.subblock_invert(spectral.subblock_convert(x, b), b)
            assert np.abs(back - x).max() < 1e-9

    def test_zero_grid(self):
        assert np.abs(spectral.subblock_invert(np.zeros((2, 2, 4, 4)), 4)).max() == 0.0

    def test_bad_b(self):
        with pytest.raises(ValueError):
            spectral.subblock_convert(np.zeros((8, 8)), 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            spectral.subblock_invert(np.zeros((2, 2, 2, 2)), 4)


class TestNormalization:
    def test_dc_bound_is_1024(self):
        b = spectral.normalization_bounds()
        assert b[0, 0] == pytest.approx(1024.0, abs=1e-9)

    def test_max_dc_maps_to_one(self):
        x = np.zeros((8, 8))
        x[0, 0] = 1024.0
        out = spectral.normalize_spectrum(x, spectral.normalization_bounds())
        assert out[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_zero(self):
        b = spectral.normalization_bounds()
        assert np.abs(spectral.normalize_spectrum(np.zeros((8, 8)), b)).max() == 0.0

    def test_in_unit_range_for_legal_blocks(self):
        g = rng(10)
        b = spectral.normalization_bounds()
        for _ in range(200):
            block = g.uniform(-128, 127, (8, 8))
            out = spectral.normalize_spectrum(spectral.dct2(block), b)
            assert np.abs(out).max() <= 1.0 + 1e-12

    def test_roundtrip(self):
        g = rng(11)
        b = spectral.normalization_bounds()
        for _ in range(50):
            x = g.uniform(-1000, 1000, (8, 8))
            back = spectral.denormalize_spectrum(spectral.normalize_spectrum(x, b), b)
            assert np.abs(back - x).max() < 1e-12 * np.abs(x).max()


class TestZigzag:
    def test_first_entries(self):
        block = np.arange(64).reshape(8, 8)
        v = spectral.zigzag_scan(block)
        assert v[0] == block[0, 0]
        assert v[1] == block[0, 1]
        assert v[2] == block[1, 0]

    def test_last_entry(self):
        block = np.arange(64).reshape(8, 8)
        assert spectral.zigzag_scan(block)[63] == block[7, 7]

    def test_roundtrip(self):
        g = rng(12)
        block = g.integers(-100, 100, (8, 8))
        assert np.array_equal(spectral.inverse_zigzag(spectral.zigzag_scan(block)), block)


class TestQualityTables:
    def test_q50_is_reference(self):
        luma, chroma = spectral.quality_to_qtables(50)
        assert np.array_equal(luma, spectral.BASE_LUMA_QT)
        assert np.array_equal(chroma, spectral.BASE_CHROMA_QT)

    def test_q100_all_ones(self):
        luma, chroma = spectral.quality_to_qtables(100)
        assert np.all(luma == 1) and np.all(chroma == 1)

    def test_q10_dc(self):
        luma, _ = spectral.quality_to_qtables(10)
        assert luma[0, 0] == 80

    def test_range_clamped(self):
        for q in (0, 1, 5, 95, 100):
            luma, chroma = spectral.quality_to_qtables(q)
            for t in (luma, chroma):
                assert t.min() >= 1 and t.max() <= 255

    def test_rejects_out_of_range(self):
        for q in (-1, 101):
            with pytest.raises(ValueError):
                spectral.quality_to_qtables(q)
