import numpy as np
import pytest

from tinedge import tensor as T
from tinedge.kernels import SOBEL_X, directional_bank
from tinedge.model import (
    EnrichmentSpec,
    build_tin1,
    build_tin2,
    forward,
    init_params,
    param_count,
)


def closed_form_tin1(rates=4):
    fe1 = 3 * 3 * 3 * 16 + 16
    fe2 = 16 * 16 * 3 * 3 + 16
    enrich = rates * (16 * 32 * 3 * 3 + 32)
    summarizer = 32 * 8 + 8
    head = 8 * 1 + 1
    fuse = 8 * 1 + 1
    return fe1 + fe2 + 2 * enrich + 2 * summarizer + 2 * head + fuse


def closed_form_tin2(rates=4):
    stage1 = closed_form_tin1(rates) - (8 * 1 + 1)   # without the tin1 fusion
    fe3 = 64 * 16 * 3 * 3 + 64
    fe4 = 64 * 64 * 3 * 3 + 64
    enrich = rates * (64 * 32 * 3 * 3 + 32)
    summarizer = 32 * 8 + 8
    head = 8 * 1 + 1
    fuse = 16 * 1 + 1
    return stage1 + fe3 + fe4 + 2 * enrich + 2 * summarizer + 2 * head + fuse


class TestBuild:
    def test_tin1_default_param_count(self):
        assert param_count(build_tin1()) == 40443
        assert closed_form_tin1() == 40443

    def test_tin1_layer_sums(self):
        g = build_tin1()
        by_name = {info.name: info.params for info in g.layers}
        assert by_name["fe1"] == 448
        assert by_name["fe2"] == 2320
        assert by_name["sum1"] == 264
        assert by_name["head1"] == 9
        assert by_name["fuse"] == 9
        enrich1 = sum(p for n, p in by_name.items() if n.startswith("enrich1."))
        assert enrich1 == 18560

    def test_tin2_matches_enumeration_oracle(self):
        g = build_tin2()
        # brute-force enumeration over every parameter tensor
        enumerated = 0
        for tensor in g.params.values():
            n = 1
            for d in tensor.data.shape:
                n *= d
            enumerated += n
        assert param_count(g) == enumerated == closed_form_tin2()

    def test_param_count_respects_enrichment_spec(self):
        g = build_tin1(EnrichmentSpec(16, dilation_rates=(1, 2)))
        assert param_count(g) == closed_form_tin1(rates=2)

    def test_empty_graph_counts_zero(self):
        from tinedge.model import NetworkGraph
        g = NetworkGraph(variant="tin1", side_output_count=0, enrichment_specs=())
        assert param_count(g) == 0

    def test_unique_parameter_names(self):
        g = build_tin2()
        assert len(g.params) == len(set(g.params))

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError):
            build_tin1(EnrichmentSpec(8))
        with pytest.raises(ValueError):
            build_tin2(EnrichmentSpec(16), EnrichmentSpec(16))
        with pytest.raises(ValueError):
            EnrichmentSpec(16, dilation_rates=())
        with pytest.raises(ValueError):
            EnrichmentSpec(16, dilation_rates=(0, 1))


class TestInit:
    def test_same_seed_bit_identical(self):
        a, b = build_tin1(), build_tin1()
        init_params(a, 7)
        init_params(b, 7)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)

    def test_different_seed_differs(self):
        a, b = build_tin1(), build_tin1()
        init_params(a, 7)
        init_params(b, 8)
        assert any(not np.array_equal(a.params[n].data, b.params[n].data) for n in a.params)

    def test_all_biases_zero(self):
        g = build_tin2()
        init_params(g, 3)
        for name, tensor in g.params.items():
            if name.endswith(".bias"):
                np.testing.assert_array_equal(tensor.data, 0.0)

    def test_fe1_channel0_is_sobel_x_bank(self):
        g = build_tin1()
        init_params(g, 0)
        expected = (SOBEL_X / 3.0).astype(np.float32).astype(np.float64)
        for c in range(3):
            np.testing.assert_array_equal(g.params["fe1.weight"].data[0, c], expected)

    def test_fe1_all_channels_follow_bank(self):
        g = build_tin1()
        init_params(g, 0)
        bank = directional_bank(16)
        for k in (1, 5, 11):
            expected = (bank[k].weights / 3.0).astype(np.float32).astype(np.float64)
            np.testing.assert_array_equal(g.params["fe1.weight"].data[k, 1], expected)

    def test_gaussian_statistics(self):
        g = build_tin2()
        init_params(g, 5)
        samples = np.concatenate([
            t.data.reshape(-1)
            for name, t in g.params.items()
            if name.endswith(".weight") and name != "fe1.weight"
        ])
        assert samples.size >= 10_000
        assert abs(samples.mean()) < 0.002
        assert abs(samples.std() - 0.01) < 0.002

    def test_channel_sum_equals_grayscale_gradient(self, rng):
        # the three input channels each carry weights/3, so a gray image
        # sees exactly the bank response
        g = build_tin1()
        init_params(g, 0)
        gray = rng.uniform(0, 1, (12, 12))
        img = np.stack([gray] * 3)[None]
        out = T.conv2d(T.Tensor(img), g.params["fe1.weight"], g.params["fe1.bias"])
        bank = directional_bank(16)
        k = 3
        expected = np.zeros((12, 12))
        p = np.pad(gray, 1)
        wk = (bank[k].weights / 3.0).astype(np.float32).astype(np.float64) * 3.0
        for i in range(3):
            for j in range(3):
                expected += wk[i, j] * p[i:i + 12, j:j + 12]
        np.testing.assert_allclose(out.data[0, k], expected, atol=1e-12)


class TestForward:
    def test_tin1_shapes_and_range(self, rng):
        g = build_tin1()
        init_params(g, 0)
        x = T.Tensor(rng.uniform(0, 1, (1, 3, 32, 32)))
        sides, fused = forward(g, x)
        assert len(sides) == g.side_output_count == 2
        for m in sides + [fused]:
            assert m.data.shape == (1, 1, 32, 32)
            assert np.all(m.data > 0.0) and np.all(m.data < 1.0)

    def test_tin2_shapes(self, rng):
        g = build_tin2()
        init_params(g, 0)
        x = T.Tensor(rng.uniform(0, 1, (1, 3, 64, 64)))
        sides, fused = forward(g, x)
        assert len(sides) == g.side_output_count == 4
        for m in sides + [fused]:
            assert m.data.shape == (1, 1, 64, 64)
            assert np.all(m.data > 0.0) and np.all(m.data < 1.0)

    def test_tin2_stage2_runs_at_half_resolution(self, rng):
        g = build_tin2()
        init_params(g, 0)
        seen = {}
        from tinedge import model as M
        original = M.max_pool_2x2

        def spy(x):
            out = original(x)
            seen["pooled"] = out.data.shape
            return out

        M.max_pool_2x2 = spy
        try:
            forward(g, T.Tensor(rng.uniform(0, 1, (1, 3, 64, 64))))
        finally:
            M.max_pool_2x2 = original
        assert seen["pooled"] == (1, 16, 32, 32)

    def test_deterministic(self, rng):
        g = build_tin1()
        init_params(g, 0)
        x = T.Tensor(rng.uniform(0, 1, (1, 3, 24, 24)))
        s1, f1 = forward(g, x)
        s2, f2 = forward(g, x)
        np.testing.assert_array_equal(f1.data, f2.data)
        for a, b in zip(s1, s2):
            np.testing.assert_array_equal(a.data, b.data)

    def test_fully_convolutional_sizes(self, rng):
        for variant, build in (("tin1", build_tin1), ("tin2", build_tin2)):
            g = build()
            init_params(g, 0)
            for h, w in ((32, 32), (48, 32), (64, 48)):
                x = T.Tensor(rng.uniform(0, 1, (1, 3, h, w)))
                sides, fused = forward(g, x)
                assert fused.data.shape == (1, 1, h, w), variant

    def test_tin2_odd_sizes_pad_and_crop(self, rng):
        g = build_tin2()
        init_params(g, 0)
        x = T.Tensor(rng.uniform(0, 1, (1, 3, 33, 47)))
        sides, fused = forward(g, x)
        for m in sides + [fused]:
            assert m.data.shape == (1, 1, 33, 47)

    def test_zero_params_give_half(self, rng):
        g = build_tin1()   # parameters default to zero before init
        x = T.Tensor(rng.uniform(0, 1, (1, 3, 20, 20)))
        sides, fused = forward(g, x)
        np.testing.assert_array_equal(fused.data, np.full((1, 1, 20, 20), 0.5))
        for m in sides:
            np.testing.assert_array_equal(m.data, np.full((1, 1, 20, 20), 0.5))

    def test_non_finite_input_rejected(self):
        g = build_tin1()
        bad = np.full((1, 3, 20, 20), np.nan)
        with pytest.raises(ValueError, match="finite"):
            forward(g, T.Tensor(bad))

    def test_wrong_channel_count_rejected(self, rng):
        g = build_tin1()
        with pytest.raises(ValueError, match="3"):
            forward(g, T.Tensor(rng.uniform(0, 1, (1, 4, 20, 20))))


class TestDirectionalResponse:
    def test_fe1_channel_peaks_at_its_own_angle(self):
        g = build_tin1()
        init_params(g, 0)
        size = 16
        ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
        bank = directional_bank(16)
        for k in range(16):
            angle = bank[k].angle
            ramp = (np.cos(angle) * xs + np.sin(angle) * ys) / (2.0 * size)
            ramp -= ramp.min()
            img = np.stack([ramp] * 3)[None]
            out = T.conv2d(T.Tensor(img), g.params["fe1.weight"], g.params["fe1.bias"])
            center = out.data[0, :, size // 2, size // 2]
            assert int(np.argmax(center)) == k
