import math

import numpy as np
import pytest

from tinedge.kernels import SOBEL_X, SOBEL_Y, directional_bank, sobel_detect


class TestDirectionalBank:
    def test_angle_zero_is_sobel_x(self):
        bank = directional_bank(16)
        np.testing.assert_array_equal(bank[0].weights, SOBEL_X)

    def test_quarter_turn_is_sobel_y(self):
        bank = directional_bank(16)
        np.testing.assert_array_equal(bank[4].weights, SOBEL_Y)

    def test_every_kernel_sums_to_zero(self):
        for k in directional_bank(16):
            assert abs(k.weights.sum()) < 1e-12

    def test_half_turn_negates(self):
        bank = directional_bank(16)
        for i in range(8):
            np.testing.assert_allclose(bank[i + 8].weights, -bank[i].weights, atol=1e-12)

    def test_angles_uniform(self):
        bank = directional_bank(16)
        for i, k in enumerate(bank):
            assert math.isclose(k.angle, 2 * math.pi * i / 16)

    def test_configurable_count(self):
        assert len(directional_bank(8)) == 8
        with pytest.raises(ValueError):
            directional_bank(0)

    def test_rotational_consistency_quarter_turn(self, rng):
        # response of kernel theta on an image rotated a quarter turn equals
        # the rotated response of kernel theta - 90 degrees on the original
        size = 33
        ys, xs = np.mgrid[0:size, 0:size]
        blob = np.exp(-(((ys - 16) / 6.0) ** 2 + ((xs - 12) / 4.0) ** 2))

        def response(image, kernel):
            out = np.zeros_like(image)
            p = np.pad(image, 1)
            for i in range(3):
                for j in range(3):
                    out += kernel[i, j] * p[i:i + size, j:j + size]
            return out

        bank = directional_bank(16)
        # rot90 counter-clockwise maps (y, x) -> (size-1-x, y): gradients rotate with it
        rotated = np.rot90(blob)
        for idx in (0, 2, 4, 7):
            resp_rot = response(rotated, bank[idx].weights)
            resp_orig = response(blob, bank[(idx + 4) % 16].weights)
            np.testing.assert_allclose(resp_rot[2:-2, 2:-2], np.rot90(resp_orig)[2:-2, 2:-2],
                                       atol=1e-10)


class TestSobelDetect:
    def test_constant_image_is_zero(self):
        out = sobel_detect(np.full((10, 10), 0.5))
        np.testing.assert_array_equal(out, np.zeros((10, 10)))

    def test_output_in_unit_range(self, rng):
        out = sobel_detect(rng.uniform(0, 1, (16, 16)))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_vertical_step_peaks_adjacent_to_edge(self):
        img = np.zeros((12, 12))
        img[:, 6:] = 1.0
        out = sobel_detect(img)
        # maximal response on the two columns straddling the step
        np.testing.assert_allclose(out[:, 5], 1.0)
        np.testing.assert_allclose(out[:, 6], 1.0)
        np.testing.assert_array_equal(out[:, :4], 0.0)
        np.testing.assert_array_equal(out[:, 8:], 0.0)

    def test_ramp_normalizes_to_uniform_interior(self):
        img = np.tile(np.arange(12, dtype=np.float64), (10, 1)) / 11.0
        out = sobel_detect(img)
        np.testing.assert_allclose(out[1:-1, 1:-1], 1.0)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            sobel_detect(np.zeros((2, 5)))
