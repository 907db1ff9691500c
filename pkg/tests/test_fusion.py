import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nightforge.errors import DimMismatch, InvalidDims, TapeMismatch, WrongChannelCount
from nightforge.fusion import (
    FusionParams,
    concat_aux,
    conv2d_same,
    fusion_backward,
    fusion_forward,
    grad_check,
    illumination_guidance,
    load_params,
    save_params,
    softmax_scales,
)


def naive_conv(x, kernel, bias):
    """Zero-padded 'same' cross-correlation, one output value at a time."""
    h, w, c_in = x.shape
    k, _, _, c_out = kernel.shape
    pad = k // 2
    out = np.zeros((h, w, c_out))
    for i in range(h):
        for j in range(w):
            for o in range(c_out):
                acc = bias[o]
                for dy in range(k):
                    for dx in range(k):
                        y, xx = i + dy - pad, j + dx - pad
                        if 0 <= y < h and 0 <= xx < w:
                            for c in range(c_in):
                                acc += x[y, xx, c] * kernel[dy, dx, c, o]
                out[i, j, o] = acc
    return out


def random_params(seed, c_in=4, c3=6, c1=3, scale=0.5):
    rng = np.random.default_rng(seed)
    shapes = FusionParams.shapes(c_in, c3, c1)
    return FusionParams(**{n: rng.normal(0, scale, s) for n, s in shapes.items()})


# guidance and concat


def test_guidance_equal_channels():
    img = np.full((4, 5, 3), 0.37)
    np.testing.assert_allclose(illumination_guidance(img), np.full((4, 5, 1), 0.37), atol=1e-15)


def test_guidance_pixel_mean():
    img = np.array([[[0.2, 0.4, 0.6]]])
    assert illumination_guidance(img)[0, 0, 0] == pytest.approx(0.4, abs=1e-15)


def test_guidance_shape_and_channel_check():
    assert illumination_guidance(np.zeros((7, 3, 3))).shape == (7, 3, 1)
    with pytest.raises(WrongChannelCount):
        illumination_guidance(np.zeros((4, 4, 4)))


def test_concat_layout():
    night = np.random.default_rng(0).random((5, 6, 3))
    guide = np.random.default_rng(1).random((5, 6, 1))
    aux = concat_aux(night, guide)
    assert aux.shape == (5, 6, 4)
    np.testing.assert_array_equal(aux[..., 3:], guide)
    np.testing.assert_array_equal(aux[..., :3], night)
    with pytest.raises(DimMismatch):
        concat_aux(night, np.zeros((4, 6, 1)))


# convolution


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv_matches_naive(k):
    rng = np.random.default_rng(k)
    x = rng.normal(size=(6, 6, 2))
    kernel = rng.normal(size=(k, k, 2, 3))
    bias = rng.normal(size=3)
    np.testing.assert_allclose(conv2d_same(x, kernel, bias), naive_conv(x, kernel, bias), atol=1e-10)


# forward


def test_zero_params_give_zero_output():
    p = FusionParams.zeros(4, 6, 3)
    x = np.random.default_rng(0).random((7, 7, 4))
    out, tape = fusion_forward(x, p)
    np.testing.assert_allclose(tape.alpha, 1 / 3)
    assert not out.any()


def test_saturated_attention_selects_first_scale():
    p = FusionParams.init(4, 6, 3, seed=0)
    for name in ("w1", "w2", "w3"):
        getattr(p, name)[:] = 0.0
    p.c1[:] = 20.0
    x = np.random.default_rng(1).random((8, 8, 4))
    out, tape = fusion_forward(x, p)
    assert tape.alpha[0].min() > 0.999999
    direct = conv2d_same(x, p.k1, p.b1) @ p.proj + p.proj_b
    np.testing.assert_allclose(out, direct, atol=1e-5)


def test_constant_input_interior_independent_of_attention():
    p = random_params(3, scale=1.0)
    for k_name, b_name in (("k1", "b1"), ("k3", "b3"), ("k5", "b5")):
        k = np.abs(getattr(p, k_name))
        setattr(p, k_name, k / k.sum(axis=(0, 1, 2), keepdims=True))
        getattr(p, b_name)[:] = 0.0
    x = np.full((9, 9, 4), 0.7)
    _, tape = fusion_forward(x, p)
    interior = (slice(2, 7), slice(2, 7))
    for e in tape.branches:
        np.testing.assert_allclose(e[interior], 0.7, atol=1e-12)
    np.testing.assert_allclose(tape.fused[interior], tape.branches[0][interior], atol=1e-12)


def test_output_restores_c1():
    for c1 in (1, 3, 5):
        p = FusionParams.init(4, 6, c1)
        out, _ = fusion_forward(np.zeros((5, 5, 4)), p)
        assert out.shape == (5, 5, c1)


def test_forward_dim_check():
    with pytest.raises(DimMismatch):
        fusion_forward(np.zeros((5, 5, 3)), FusionParams.init(4, 6, 3))


def test_params_shape_validation():
    p = FusionParams.init(4, 6, 3)
    with pytest.raises(InvalidDims):
        FusionParams(**{**dict(p.items()), "k3": np.zeros((3, 3, 4, 5))})


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.01, 5.0), h=st.integers(1, 8), w=st.integers(1, 8))
def test_partition_of_unity(seed, scale, h, w):
    p = random_params(seed, scale=scale)
    x = np.random.default_rng(seed + 1).normal(size=(h, w, 4))
    _, tape = fusion_forward(x, p)
    np.testing.assert_allclose(tape.alpha.sum(axis=0), 1.0, atol=1e-6)
    assert np.all(tape.alpha >= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), shift=st.floats(-50, 50))
def test_shared_bias_shift_changes_nothing(seed, shift):
    p = random_params(seed)
    x = np.random.default_rng(seed + 1).normal(size=(6, 6, 4))
    out, tape = fusion_forward(x, p)
    shifted = p.map(np.copy)
    for name in ("c1", "c2", "c3"):
        getattr(shifted, name)[:] += shift
    out2, tape2 = fusion_forward(x, shifted)
    np.testing.assert_allclose(tape2.alpha, tape.alpha, atol=1e-6)
    np.testing.assert_allclose(out2, out, atol=1e-6)


def test_softmax_is_stable_for_large_logits():
    logits = np.array([[1000.0], [999.0], [-1000.0]])
    a = softmax_scales(logits)
    assert np.all(np.isfinite(a))
    np.testing.assert_allclose(a.sum(axis=0), 1.0)


# backward


def test_zero_grad_out_gives_zero_grads():
    p = random_params(0)
    x = np.random.default_rng(0).normal(size=(6, 6, 4))
    out, tape = fusion_forward(x, p)
    gx, gp = fusion_backward(tape, np.zeros_like(out))
    assert not gx.any()
    assert all(not g.any() for _, g in gp.items())


def test_backward_is_linear_in_grad_out():
    p = random_params(1)
    x = np.random.default_rng(1).normal(size=(6, 6, 4))
    out, tape = fusion_forward(x, p)
    g = np.random.default_rng(2).normal(size=out.shape)
    gx1, gp1 = fusion_backward(tape, g)
    gx2, gp2 = fusion_backward(tape, 2 * g)
    np.testing.assert_array_equal(gx2, 2 * gx1)
    for (name, a), (_, b) in zip(gp1.items(), gp2.items()):
        np.testing.assert_array_equal(b, 2 * a, err_msg=name)


def test_backward_tape_mismatch():
    p = random_params(0)
    _, tape = fusion_forward(np.zeros((5, 5, 4)), p)
    with pytest.raises(TapeMismatch):
        fusion_backward(tape, np.zeros((5, 5, 2)))


def test_grad_check_documented_init():
    x = np.random.default_rng(0).uniform(0, 1, (7, 7, 4))
    report = grad_check(FusionParams.init(4, 6, 3, seed=0), x, tol=1e-5)
    assert report.passed, report.errors


def test_grad_check_random_weights_and_biases():
    x = np.random.default_rng(5).normal(size=(5, 6, 4))
    weights = np.random.default_rng(6).normal(size=(5, 6, 3))
    report = grad_check(random_params(4, scale=0.3), x, tol=1e-5, weights=weights)
    assert report.passed, report.errors


def test_grad_check_zero_params():
    x = np.random.default_rng(0).uniform(0, 1, (7, 7, 4))
    assert grad_check(FusionParams.zeros(4, 6, 3), x, tol=1e-5).passed


def test_grad_check_zero_tolerance_fails():
    x = np.random.default_rng(0).uniform(0, 1, (5, 5, 4))
    report = grad_check(FusionParams.init(4, 6, 3), x, tol=0.0)
    assert not report.passed


def test_grad_check_size_limit():
    with pytest.raises(InvalidDims):
        grad_check(FusionParams.init(4, 6, 3), np.zeros((17, 4, 4)))


# parameter file


def test_param_file_round_trip(tmp_path):
    p = random_params(9, c_in=4, c3=5, c1=3)
    save_params(tmp_path / "p.bin", p)
    q = load_params(tmp_path / "p.bin")
    for (name, a), (_, b) in zip(p.items(), q.items()):
        np.testing.assert_array_equal(a, b, err_msg=name)


def test_param_file_layout(tmp_path):
    import json

    p = FusionParams.init(4, 2, 3)
    save_params(tmp_path / "p.bin", p)
    raw = (tmp_path / "p.bin").read_bytes()
    assert raw.startswith(b"NFFUSE1\n")
    header_line, _, payload = raw[8:].partition(b"\n")
    header = json.loads(header_line)
    assert (header["c_in"], header["c3"], header["c1"]) == (4, 2, 3)
    assert len(payload) == 8 * sum(a.size for _, a in p.items())
    first = np.frombuffer(payload[: 8 * p.k1.size], "<f8").reshape(p.k1.shape)
    np.testing.assert_array_equal(first, p.k1)


def test_param_file_rejects_garbage(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"hello")
    with pytest.raises(ValueError):
        load_params(tmp_path / "bad.bin")
    p = FusionParams.init(4, 2, 3)
    save_params(tmp_path / "t.bin", p)
    raw = (tmp_path / "t.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_params(tmp_path / "t.bin")
