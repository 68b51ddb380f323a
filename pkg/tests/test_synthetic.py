import numpy as np

from tinedge.kernels import sobel_detect
from tinedge.loss import class_weights
from tinedge.nms import nms_thin
from tinedge.evaluator import match_edges
from tinedge.synthetic import (
    AxisRect,
    Circle,
    Polygon,
    boundary_mask,
    coverage,
    dilate8,
    generate_dataset,
    generate_sample,
    ground_truth_from_edges,
    make_square_fixture,
)


class TestShapes:
    def test_circle_coverage_area(self):
        cov = coverage(Circle(24.0, 24.0, 10.0), 48)
        assert abs(cov.sum() - np.pi * 100) < 2.0
        assert cov.max() == 1.0 and cov.min() == 0.0

    def test_polygon_coverage_matches_regular_area(self):
        # regular hexagon area = 3*sqrt(3)/2 * r^2
        cov = coverage(Polygon(24.0, 24.0, 12.0, 6, rotation=0.3), 48)
        expected = 3 * np.sqrt(3) / 2 * 144
        assert abs(cov.sum() - expected) < 3.0

    def test_axis_rect_coverage_is_analytic(self):
        rect = AxisRect(10.3, 10.3, 20.7, 20.7)
        cov = rect.coverage(32)
        assert abs(cov.sum() - 10.4 * 10.4) < 1e-9
        assert cov[15, 15] == 1.0
        assert 0.0 < cov[10, 15] < 1.0

    def test_boundary_band_is_thin_ring(self):
        cov = coverage(Circle(24.0, 24.0, 10.0), 48)
        edges = boundary_mask(cov)
        assert 40 < edges.sum() < 100   # ~2*pi*r pixels

    def test_dilate8_grows_by_one(self):
        m = np.zeros((7, 7), dtype=bool)
        m[3, 3] = True
        d = dilate8(m)
        assert d.sum() == 9
        assert d[2:5, 2:5].all()


class TestGroundTruth:
    def test_default_is_binary(self):
        cov = coverage(Circle(16.0, 16.0, 8.0), 32)
        gt = ground_truth_from_edges(boundary_mask(cov))
        assert set(np.unique(gt.values)) == {0, 255}

    def test_optional_ignore_ring(self):
        cov = coverage(Circle(16.0, 16.0, 8.0), 32)
        gt = ground_truth_from_edges(boundary_mask(cov), ignore_ring=True)
        assert set(np.unique(gt.values)) == {0, 32, 255}
        pos, neg, ign = gt.masks(64)
        # the ignore ring hugs the edge pixels
        assert (dilate8(pos) & ~pos & ign).sum() == ign.sum()

    def test_weights_computable(self):
        _, gt = generate_sample(3)
        alpha, beta = class_weights(gt)
        assert 0 < alpha < 0.2 and 0.9 < beta <= 1.0


class TestDataset:
    def test_deterministic(self):
        a = generate_dataset(3, seed=9, size=64)
        b = generate_dataset(3, seed=9, size=64)
        for (ia, ga), (ib, gb) in zip(a, b):
            np.testing.assert_array_equal(ia, ib)
            np.testing.assert_array_equal(ga.values, gb.values)

    def test_every_image_has_edges_and_valid_range(self):
        for img, gt in generate_dataset(8, seed=0, size=96):
            assert img.shape == (3, 96, 96)
            assert img.min() >= 0.0 and img.max() <= 1.0
            assert (gt.values == 255).sum() > 50

    def test_seeds_differ(self):
        a = generate_dataset(2, seed=1, size=48)
        b = generate_dataset(2, seed=2, size=48)
        assert not np.array_equal(a[0][0], b[0][0])


class TestSquareFixture:
    def test_sobel_nms_is_perfect_at_one_pixel_radius(self):
        img, gt = make_square_fixture(64)
        thinned = nms_thin(sobel_detect(img.mean(axis=0)))
        gt_binary = gt.values >= 64
        tp, fp, fn = match_edges(thinned >= 0.05, gt_binary, 1.0)
        assert fp == 0 and fn == 0
        assert tp == int(gt_binary.sum())

    def test_ground_truth_is_closed_ring(self):
        _, gt = make_square_fixture(64)
        edges = gt.values == 255
        assert edges.sum() == 124   # 4 * 32 - 4 ring pixels
