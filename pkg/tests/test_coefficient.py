import numpy as np
import pytest

from defect_schwarz.coefficient import (
    build_model,
    element_weights,
    patch_weights,
    rasterize,
    realization_from_bits,
    reference_patch_cells,
    sample_realization,
)
from defect_schwarz.errors import ConfigurationError, DimensionError
from defect_schwarz.mesh import build_hierarchy
from defect_schwarz.patches import build_patches


def enumerate_mask(r, inside):
    """Fine cells (row=y, col=x) whose centre satisfies ``inside(x, y)`` in units of eps."""
    m = np.zeros((r, r), dtype=bool)
    for j in range(r):
        for i in range(r):
            m[j, i] = inside((i + 0.5) / r, (j + 0.5) / r)
    return m


def centred(x, y):
    return 0.25 < x < 0.75 and 0.25 < y < 0.75


class TestModel:
    def test_erasure_resolution_4(self):
        m = build_model("erasure", 1.0, 10.0, 0.125, 4)
        assert np.array_equal(m.background_mask, enumerate_mask(4, centred))
        assert m.background_mask.sum() == 4 and m.background_mask[1:3, 1:3].all()
        assert not m.defect_mask.any()

    def test_lshape_resolution_8(self):
        m = build_model("lshape", 1.0, 10.0, 0.125, 8)

        def ell(x, y):
            vertical = 0.25 < x < 0.5 and 0.25 < y < 1.0
            horizontal = 0.25 < x < 1.0 and 0.25 < y < 0.5
            return vertical or horizontal

        assert np.array_equal(m.defect_mask, enumerate_mask(8, ell))
        # 2x6 + 6x2 bars sharing a 2x2 corner
        assert m.defect_mask.sum() == 20
        assert np.array_equal(m.background_mask, enumerate_mask(8, centred))

    def test_shifted(self):
        m = build_model("shifted", 1.0, 10.0, 0.125, 8)
        shifted = enumerate_mask(8, lambda x, y: 0.5 < x < 1.0 and 0.5 < y < 1.0)
        assert np.array_equal(m.defect_mask, shifted)
        assert m.defect_mask.sum() == m.background_mask.sum()

    @pytest.mark.parametrize("r", [2, 6])
    def test_resolution_guard(self, r):
        with pytest.raises(ConfigurationError):
            build_model("erasure", 1.0, 10.0, 0.125, r)

    def test_bounds(self):
        with pytest.raises(ConfigurationError):
            build_model("erasure", 2.0, 1.0, 0.125, 4)
        with pytest.raises(ConfigurationError):
            build_model("erasure", 0.0, 1.0, 0.125, 4)

    def test_unknown_geometry(self):
        with pytest.raises(ConfigurationError):
            build_model("circle", 1.0, 2.0, 0.125, 4)

    @pytest.mark.parametrize("geom", ["erasure", "lshape", "shifted"])
    def test_zero_contrast_constant(self, tiny, geom):
        m = build_model(geom, 3.0, 3.0, tiny.eps, tiny.fine_per_eps)
        real = sample_realization(m, tiny, 0.5, 1)
        assert np.all(rasterize(m, real, tiny).values == 3.0)

    def test_custom_mask_file(self, tmp_path):
        text = "4\n0000\n0110\n0110\n0000\n\n1000\n0000\n0000\n0000\n"
        f = tmp_path / "mask.txt"
        f.write_text(text)
        m = build_model("custom", 1.0, 5.0, 0.25, 4, mask_file=f)
        assert m.background_mask.sum() == 4
        # first text row is the top row of the cell
        assert m.defect_mask[3, 0] and m.defect_mask.sum() == 1

    def test_custom_mask_file_malformed(self, tmp_path):
        f = tmp_path / "bad.txt"
        f.write_text("4\n0000\n0110\n")
        with pytest.raises(ConfigurationError):
            build_model("custom", 1.0, 5.0, 0.25, 4, mask_file=f)

    def test_hierarchy_mismatch(self, tiny):
        m = build_model("erasure", 1.0, 10.0, 0.25, 8)
        with pytest.raises(ConfigurationError):
            rasterize(m, sample_realization(m, tiny, 0.1, 0), tiny)


class TestSampling:
    def test_extremes(self, tiny, erasure_tiny):
        model, _ = erasure_tiny
        assert sample_realization(model, tiny, 0.0, 3).n_defects == 0
        assert sample_realization(model, tiny, 1.0, 3).n_defects == tiny.n_cells_eps**2

    def test_binomial_band(self):
        hier = build_hierarchy("1/400", "1/50", "1/100")
        model = build_model("erasure", 1.0, 10.0, hier.eps, hier.fine_per_eps)
        real = sample_realization(model, hier, 0.1, 2024)
        n = hier.n_cells_eps**2
        assert n == 10_000
        assert abs(real.n_defects - 0.1 * n) <= 3 * np.sqrt(n * 0.1 * 0.9)

    def test_reproducible(self, tiny, erasure_tiny):
        model, _ = erasure_tiny
        a = sample_realization(model, tiny, 0.3, 99)
        b = sample_realization(model, tiny, 0.3, 99)
        c = sample_realization(model, tiny, 0.3, 100)
        assert np.array_equal(a.defect_bits, b.defect_bits)
        assert not np.array_equal(a.defect_bits, c.defect_bits)

    def test_probability_range(self, tiny, erasure_tiny):
        with pytest.raises(ConfigurationError):
            sample_realization(erasure_tiny[0], tiny, 1.5, 0)


class TestRasterize:
    def test_background_and_full_tiling(self, tiny):
        model = build_model("shifted", 1.0, 7.0, tiny.eps, tiny.fine_per_eps)
        n = tiny.n_cells_eps
        for bits, mask in ((np.zeros((n, n)), model.background_mask), (np.ones((n, n)), model.defect_mask)):
            f = rasterize(model, realization_from_bits(bits), tiny).grid()
            expected = np.where(np.tile(mask, (n, n)), 7.0, 1.0)
            assert np.array_equal(f, expected)

    def test_single_defect_footprint(self, tiny):
        model = build_model("lshape", 1.0, 7.0, tiny.eps, tiny.fine_per_eps)
        n, r = tiny.n_cells_eps, tiny.fine_per_eps
        bits = np.zeros((n, n), dtype=bool)
        bits[3, 5] = True
        base = rasterize(model, realization_from_bits(np.zeros((n, n))), tiny).grid()
        f = rasterize(model, realization_from_bits(bits), tiny).grid()
        diff = f != base
        footprint = np.zeros_like(diff)
        footprint[3 * r : 4 * r, 5 * r : 6 * r] = True
        assert not diff[~footprint].any()
        cell = np.where(model.defect_mask, 7.0, 1.0)
        assert np.array_equal(f[3 * r : 4 * r, 5 * r : 6 * r], cell)

    def test_values_two_level(self, tiny, erasure_tiny):
        model, _ = erasure_tiny
        v = rasterize(model, sample_realization(model, tiny, 0.4, 5), tiny).values
        assert set(np.unique(v)) <= {1.0, 100.0}

    def test_realization_size(self, tiny, erasure_tiny):
        with pytest.raises(DimensionError):
            rasterize(erasure_tiny[0], realization_from_bits(np.zeros((4, 4))), tiny)


class TestWeights:
    def test_no_defects(self, tiny):
        real = realization_from_bits(np.zeros((8, 8)))
        p = build_patches(tiny)[4]
        w = patch_weights(real, p, tiny)
        assert w.weights.tolist() == [1] + [0] * 16

    def test_two_defects(self, tiny):
        p = build_patches(tiny)[0]  # vertex (1, 1), eps-cells [0, 4)^2
        bits = np.zeros((8, 8), dtype=bool)
        for ell in (3, 7):
            ly, lx = divmod(ell - 1, 4)
            bits[ly, lx] = True
        w = patch_weights(realization_from_bits(bits), p, tiny).weights
        assert w[0] == -1 and w[3] == 1 and w[7] == 1 and w.sum() == 1
        assert np.count_nonzero(w) == 3

    def test_full_scale_lengths(self):
        hier = build_hierarchy("1/128", "1/16", "1/32")
        real = realization_from_bits(np.zeros((32, 32)))
        assert len(patch_weights(real, build_patches(hier)[0], hier).weights) == 17
        assert len(element_weights(real, (0, 0), hier).weights) == 5

    def test_element_full(self):
        hier = build_hierarchy("1/128", "1/16", "1/32")
        real = realization_from_bits(np.ones((32, 32)))
        assert element_weights(real, (3, 2), hier).weights.tolist() == [-3, 1, 1, 1, 1]
        real0 = realization_from_bits(np.zeros((32, 32)))
        assert element_weights(real0, (3, 2), hier).weights.tolist() == [1, 0, 0, 0, 0]

    def test_exact_representation(self, tiny, erasure_tiny, rng):
        model, _ = erasure_tiny
        patches = build_patches(tiny)
        refs = np.stack([reference_patch_cells(model, tiny, l) for l in range(17)])
        n = 2 * tiny.fine_per_coarse
        for _ in range(50):
            real = sample_realization(model, tiny, float(rng.uniform(0, 0.6)), int(rng.integers(2**63)))
            field = rasterize(model, real, tiny).grid()
            for p in patches:
                w = patch_weights(real, p, tiny)
                assert w.weights.sum() == 1
                ox, oy = p.offset
                combo = np.einsum("l,lij->ij", w.weights.astype(float), refs)
                assert np.array_equal(combo, field[oy : oy + n, ox : ox + n])
