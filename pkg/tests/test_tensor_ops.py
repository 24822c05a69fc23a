import numpy as np
import pytest

from detlab import (
    ConvSpec,
    ParseError,
    ShapeMismatchError,
    bn_fold,
    conv2d_ref,
    count_macs,
    matmul,
    read_archive,
    reparam_fuse_lk,
    write_archive,
)


def sliding_window_conv(x, w, stride=1, padding=0, groups=1):
    """Blind re-implementation: per-output-pixel window dot products.

    Written independently of the kernel backends (explicit Python loops
    over numpy windows) to serve as the convolution oracle.
    """
    n, c_in, h, wd = x.shape
    c_out, cig, k, _ = w.shape
    cog = c_out // groups
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, c_out, h_out, w_out))
    for b in range(n):
        for oc in range(c_out):
            g = oc // cog
            window_channels = slice(g * cig, (g + 1) * cig)
            for i in range(h_out):
                for j in range(w_out):
                    patch = xp[b, window_channels, i * stride : i * stride + k, j * stride : j * stride + k]
                    out[b, oc, i, j] = float(np.sum(patch * w[oc]))
    return out


class TestConv2d:
    def test_identity_pointwise(self, rng):
        x = rng.standard_normal((2, 3, 5, 5))
        w = np.eye(3).reshape(3, 3, 1, 1)
        assert np.array_equal(conv2d_ref(x, w), x)

    def test_depthwise_ones_kernel_sums_window(self):
        x = np.ones((1, 2, 5, 5))
        w = np.ones((2, 1, 3, 3))
        spec = ConvSpec(c_in=2, c_out=2, kernel=3, padding=1, groups=2)
        out = conv2d_ref(x, w, spec=spec)
        assert out[0, 0, 2, 2] == 9.0  # interior: full window
        assert out[0, 0, 0, 0] == 4.0  # corner: 2x2 of the window in bounds
        assert out[0, 1, 0, 2] == 6.0  # edge: 2x3

    def test_matches_sliding_window_oracle(self, rng):
        for _ in range(25):
            c_in = int(rng.integers(1, 5))
            groups = 1 if c_in % 2 else int(rng.choice([1, 2]))
            c_out = int(rng.integers(1, 4)) * groups
            k = int(rng.choice([1, 3]))
            stride = int(rng.choice([1, 2]))
            padding = int(rng.choice([0, 1]))
            h = int(rng.integers(k, 8))
            w = int(rng.integers(k, 8))
            x = rng.standard_normal((2, c_in, h, w))
            wt = rng.standard_normal((c_out, c_in // groups, k, k))
            spec = ConvSpec(c_in, c_out, k, stride, padding, groups)
            got = conv2d_ref(x, wt, spec=spec)
            want = sliding_window_conv(x, wt, stride, padding, groups)
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_bias_added_per_channel(self, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        w = rng.standard_normal((4, 2, 1, 1))
        bias = np.array([1.0, -2.0, 0.5, 0.0])
        spec = ConvSpec(2, 4, 1)
        np.testing.assert_allclose(
            conv2d_ref(x, w, bias, spec), conv2d_ref(x, w, spec=spec) + bias[None, :, None, None]
        )

    def test_output_dims_floor(self, rng):
        x = rng.standard_normal((1, 1, 7, 9))
        w = rng.standard_normal((1, 1, 3, 3))
        out = conv2d_ref(x, w, spec=ConvSpec(1, 1, 3, stride=2, padding=1))
        assert out.shape == (1, 1, 4, 5)

    def test_shape_mismatches_raise(self, rng):
        x = rng.standard_normal((1, 3, 5, 5))
        with pytest.raises(ShapeMismatchError):
            conv2d_ref(x, rng.standard_normal((2, 4, 1, 1)), spec=ConvSpec(3, 2, 1))
        with pytest.raises(ShapeMismatchError):
            conv2d_ref(x, rng.standard_normal((2, 3, 9, 9)), spec=ConvSpec(3, 2, 9))

    def test_mac_counting_matches_loop_extents(self, rng):
        x = rng.standard_normal((2, 4, 6, 6))
        w = rng.standard_normal((6, 2, 3, 3))
        spec = ConvSpec(4, 6, 3, stride=1, padding=1, groups=2)
        with count_macs() as mc:
            conv2d_ref(x, w, spec=spec)
        assert mc.total == 2 * 6 * 6 * 6 * 2 * 9  # n * c_out * h_out * w_out * cig * k^2

    def test_counters_nest(self, rng):
        x = rng.standard_normal((1, 1, 4, 4))
        w = rng.standard_normal((1, 1, 1, 1))
        with count_macs() as outer:
            conv2d_ref(x, w)
            with count_macs() as inner:
                conv2d_ref(x, w)
        assert inner.total == 16
        assert outer.total == 32


class TestMatmul:
    def test_counts_batched_macs(self, rng):
        a = rng.standard_normal((2, 3, 4, 5))
        b = rng.standard_normal((2, 3, 5, 6))
        with count_macs() as mc:
            out = matmul(a, b)
        np.testing.assert_allclose(out, a @ b)
        assert mc.total == 2 * 3 * 4 * 5 * 6

    def test_inner_dim_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            matmul(rng.standard_normal((2, 3)), rng.standard_normal((4, 2)))


class TestBnFold:
    def test_identity_stats_change_nothing(self, rng):
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        ones, zeros = np.ones(3), np.zeros(3)
        w2, b2 = bn_fold(w, b, ones, zeros, zeros, ones, eps=0.0)
        np.testing.assert_array_equal(w2, w)
        np.testing.assert_array_equal(b2, b)

    def test_pure_scale(self, rng):
        w = rng.standard_normal((3, 2, 1, 1))
        b = rng.standard_normal(3)
        w2, b2 = bn_fold(w, b, 2.0 * np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), eps=0.0)
        np.testing.assert_allclose(w2, 2.0 * w)
        np.testing.assert_allclose(b2, 2.0 * b)

    def test_functional_equivalence_random_stats(self, rng):
        # unfused pipeline (conv then explicit normalization) is the oracle
        c_out = 4
        w = rng.standard_normal((c_out, 3, 3, 3))
        b = rng.standard_normal(c_out)
        gamma = rng.uniform(0.5, 2.0, c_out)
        beta = rng.standard_normal(c_out)
        mean = rng.standard_normal(c_out)
        var = rng.uniform(0.1, 2.0, c_out)
        eps = 1e-5
        spec = ConvSpec(3, c_out, 3, padding=1)
        x = rng.standard_normal((2, 3, 6, 6))
        raw = conv2d_ref(x, w, b, spec)
        want = (raw - mean[None, :, None, None]) / np.sqrt(var + eps)[None, :, None, None]
        want = gamma[None, :, None, None] * want + beta[None, :, None, None]
        w2, b2 = bn_fold(w, b, gamma, beta, mean, var, eps)
        got = conv2d_ref(x, w2, b2, spec)
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_negative_variance_rejected(self, rng):
        w = rng.standard_normal((2, 1, 1, 1))
        with pytest.raises(ValueError):
            bn_fold(w, None, np.ones(2), np.zeros(2), np.zeros(2), np.array([-1.0, 1.0]))


class TestReparamFuse:
    def test_zero_small_branch_is_identity(self, rng):
        dw7 = rng.standard_normal((4, 1, 7, 7))
        fused = reparam_fuse_lk(dw7, np.zeros((4, 1, 3, 3)))
        np.testing.assert_array_equal(fused, dw7)

    def test_dirac_small_branch_centers(self):
        dw3 = np.zeros((2, 1, 3, 3))
        dw3[:, :, 1, 1] = 1.0
        fused = reparam_fuse_lk(np.zeros((2, 1, 7, 7)), dw3)
        expected = np.zeros((2, 1, 7, 7))
        expected[:, :, 3, 3] = 1.0
        np.testing.assert_array_equal(fused, expected)

    def test_fused_equals_dual_branch_forward(self, rng):
        for _ in range(20):
            c = int(rng.integers(1, 6))
            h = int(rng.integers(4, 10))
            w = int(rng.integers(4, 10))
            dw7 = rng.standard_normal((c, 1, 7, 7))
            dw3 = rng.standard_normal((c, 1, 3, 3))
            x = rng.standard_normal((1, c, h, w))
            spec7 = ConvSpec(c, c, 7, padding=3, groups=c)
            spec3 = ConvSpec(c, c, 3, padding=1, groups=c)
            dual = conv2d_ref(x, dw7, spec=spec7) + conv2d_ref(x, dw3, spec=spec3)
            fused = conv2d_ref(x, reparam_fuse_lk(dw7, dw3), spec=spec7)
            assert np.max(np.abs(fused - dual)) < 1e-9

    def test_shape_validation(self, rng):
        with pytest.raises(ShapeMismatchError):
            reparam_fuse_lk(rng.standard_normal((2, 1, 5, 5)), rng.standard_normal((2, 1, 3, 3)))
        with pytest.raises(ShapeMismatchError):
            reparam_fuse_lk(rng.standard_normal((2, 1, 7, 7)), rng.standard_normal((3, 1, 3, 3)))


class TestArchive:
    def test_raw_round_trip(self, rng, tmp_path):
        tensors = {
            "stage1": rng.standard_normal((4, 2, 3, 3)),
            "stage2_bias": rng.standard_normal(7),
        }
        path = tmp_path / "weights.json"
        write_archive(path, tensors)
        back = read_archive(path)
        assert set(back) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(back[name], tensors[name])

    def test_inline_round_trip(self, rng, tmp_path):
        tensors = {"w": rng.standard_normal((2, 3))}
        path = tmp_path / "weights.json"
        write_archive(path, tensors, inline=True)
        assert not (tmp_path / "weights.bin").exists()
        np.testing.assert_array_equal(read_archive(path)["w"], tensors["w"])

    def test_write_is_deterministic(self, rng, tmp_path):
        tensors = {"a": rng.standard_normal((3, 3)), "b": rng.standard_normal(5)}
        p1, p2 = tmp_path / "one.json", tmp_path / "two.json"
        write_archive(p1, tensors)
        write_archive(p2, tensors)
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "one.bin").read_bytes() == (tmp_path / "two.bin").read_bytes()

    def test_offsets_are_element_indexed(self, tmp_path):
        raw = np.arange(10, dtype="<f8")
        raw.tofile(tmp_path / "arch.bin")
        manifest = {
            "tensors": [
                {"name": "tail", "shape": [2, 2], "dtype": "f64", "offset": 6, "length": 4}
            ]
        }
        import json

        (tmp_path / "arch.json").write_text(json.dumps(manifest))
        out = read_archive(tmp_path / "arch.json")
        np.testing.assert_array_equal(out["tail"], np.array([[6.0, 7.0], [8.0, 9.0]]))

    def test_corrupt_manifest_raises_parse_error(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ParseError):
            read_archive(bad)
        bad.write_text('{"tensors": [{"name": "x", "dtype": "f64", "shape": [0]}]}')
        with pytest.raises(ParseError):
            read_archive(bad)

    def test_length_must_match_shape(self, tmp_path):
        np.zeros(4, dtype="<f8").tofile(tmp_path / "a.bin")
        (tmp_path / "a.json").write_text(
            '{"tensors": [{"name": "x", "shape": [3], "dtype": "f64", "offset": 0, "length": 4}]}'
        )
        with pytest.raises(ParseError):
            read_archive(tmp_path / "a.json")
