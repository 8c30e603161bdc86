import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pithdetect.errors import InvalidInputError
from pithdetect.imgproc import SliceMask, apply_mask, derivatives, full_foreground_mask, resize_mask, resize_to_width, to_grayscale
from pithdetect.lo_sampler import (
    LoSamplerParams,
    LoSet,
    coherence_threshold,
    sample_lo,
    save_lo_csv,
)
from pithdetect.structure_tensor import StParams, coherence, compute_tensor, orientation

from conftest import radial_deviation


class TestParams:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            LoSamplerParams(lo_w=2)
        with pytest.raises(InvalidInputError):
            LoSamplerParams(percent_lo=0.0)
        with pytest.raises(InvalidInputError):
            LoSamplerParams(percent_lo=1.5)


class TestThreshold:
    def test_constant_field(self):
        st_c = np.full((6, 6), 0.5)
        assert coherence_threshold(st_c, full_foreground_mask((6, 6)), 0.7) == 0.5

    def test_decile_quantile(self):
        # ten distinct coherence levels; the 0.3-quantile with lower
        # interpolation is the third-smallest value
        st_c = np.repeat(np.linspace(0.1, 1.0, 10), 10).reshape(10, 10)
        assert coherence_threshold(st_c, full_foreground_mask((10, 10)), 0.7) == pytest.approx(0.3)

    def test_full_fraction_gives_minimum(self):
        rng = np.random.default_rng(0)
        st_c = rng.random((8, 8))
        assert coherence_threshold(st_c, full_foreground_mask((8, 8)), 1.0) == st_c.min()

    def test_threshold_is_observed_value(self):
        rng = np.random.default_rng(1)
        st_c = rng.random((9, 9))
        th = coherence_threshold(st_c, full_foreground_mask((9, 9)), 0.37)
        assert th in st_c

    def test_foreground_only(self):
        st_c = np.zeros((4, 4))
        st_c[0, 0] = 0.9
        inside = np.zeros((4, 4), dtype=bool)
        inside[0, 0] = True
        assert coherence_threshold(st_c, SliceMask(inside), 0.5) == 0.9


class TestSampleLo:
    def test_zero_coherence_gives_empty(self):
        shape = (9, 9)
        lo = sample_lo(
            np.zeros(shape), np.zeros(shape), full_foreground_mask(shape), LoSamplerParams()
        )
        assert len(lo) == 0

    def test_endpoint_formula(self):
        shape = (9, 9)
        st_c = np.zeros(shape)
        st_c[5, 5] = 0.8  # row 5, col 5: patch (1, 1) for lo_w = 3
        st_o = np.zeros(shape)
        lo = sample_lo(st_o, st_c, full_foreground_mask(shape), LoSamplerParams())
        assert len(lo) == 1
        seg = lo[0]
        assert seg.midpoint == (5.0, 5.0)
        assert seg.p1 == (4.0, 5.0) and seg.p2 == (6.0, 5.0)
        assert seg.coherence == pytest.approx(0.8)

    def test_row_major_tie_break(self):
        shape = (3, 3)
        st_c = np.full(shape, 0.5)
        lo = sample_lo(np.zeros(shape), st_c, full_foreground_mask(shape), LoSamplerParams())
        assert len(lo) == 1
        assert lo[0].midpoint == (0.0, 0.0)

    def test_patch_count_bound_and_partial_patches(self):
        shape = (7, 8)  # 3x3 patches -> ceil(7/3) * ceil(8/3) = 9
        rng = np.random.default_rng(2)
        st_c = rng.random(shape)
        lo = sample_lo(rng.random(shape), st_c, full_foreground_mask(shape),
                       LoSamplerParams(percent_lo=1.0))
        assert len(lo) == 9

    def test_midpoints_inside_mask_and_unit_half_length(self):
        shape = (30, 30)
        rng = np.random.default_rng(3)
        inside = np.zeros(shape, dtype=bool)
        inside[8:25, 5:20] = True
        mask = SliceMask(inside)
        lo = sample_lo(rng.random(shape) * np.pi, rng.random(shape), mask, LoSamplerParams())
        assert len(lo) > 0
        xs = lo.midpoints[:, 0].astype(int)
        ys = lo.midpoints[:, 1].astype(int)
        assert inside[ys, xs].all()
        assert np.allclose(np.hypot(*(lo.p2 - lo.midpoints).T), 1.0)
        assert np.allclose(np.hypot(*(lo.p2 - lo.p1).T), 2.0)

    def test_all_background_patches_skipped(self):
        shape = (9, 9)
        inside = np.zeros(shape, dtype=bool)
        inside[0:3, 0:3] = True  # only the first patch has foreground
        st_c = np.full(shape, 0.9)
        lo = sample_lo(np.zeros(shape), st_c, SliceMask(inside), LoSamplerParams())
        assert len(lo) == 1
        assert lo[0].midpoint == (0.0, 0.0)

    @given(
        seed=st.integers(0, 2**31 - 1),
        lower=st.floats(0.05, 0.5),
        step=st.floats(0.05, 0.45),
    )
    @settings(max_examples=25, deadline=None)
    def test_gate_monotone_in_percent_lo(self, seed, lower, step):
        rng = np.random.default_rng(seed)
        shape = (12, 12)
        st_c = rng.random(shape)
        st_o = rng.random(shape) * np.pi
        mask = full_foreground_mask(shape)
        n_low = len(sample_lo(st_o, st_c, mask, LoSamplerParams(percent_lo=lower)))
        n_high = len(sample_lo(st_o, st_c, mask, LoSamplerParams(percent_lo=lower + step)))
        assert n_low <= n_high

    def test_concentric_web_segments_are_radial(self, clean_web):
        img, mask, center = clean_web
        working, _ = resize_to_width(apply_mask(to_grayscale(img), mask), 640)
        wmask = resize_mask(mask, 640)
        t = compute_tensor(*derivatives(working), StParams())
        lo = sample_lo(orientation(t), coherence(t), wmask, LoSamplerParams())
        dev = radial_deviation(lo.midpoints, lo.angles, center)
        # every emitted segment within 0.1 rad of the radial direction
        assert len(lo) > 1000
        assert np.quantile(dev, 0.99) < 0.1

    def test_csv_export(self, tmp_path):
        lo = LoSet(np.array([[3.0, 4.0]]), np.array([0.0]), np.array([0.5]))
        path = tmp_path / "lo.csv"
        save_lo_csv(str(path), lo)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x1,y1,x2,y2,coherence"
        assert lines[1] == "2.000000,4.000000,4.000000,4.000000,0.500000"


class TestLoSet:
    def test_subset_and_concat(self):
        lo = LoSet(np.array([[0.0, 0], [1, 1], [2, 2]]), np.array([0.0, 0.5, 1.0]),
                   np.ones(3))
        sub = lo.subset([0, 2])
        assert len(sub) == 2 and sub.angles[1] == 1.0
        both = LoSet.concat(sub, lo.subset([1]))
        assert len(both) == 3 and both.angles[2] == 0.5

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            LoSet(np.zeros((2, 2)), np.zeros(3), np.zeros(3))
