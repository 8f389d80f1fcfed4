import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from busnet.labels import ClassLabel
from busnet.neuralnet import (
    ModelSpec,
    Parameters,
    backward,
    build,
    cross_entropy,
    forward,
    layer_shapes,
    predict,
    predict_proba,
)
from busnet.neuralnet import checkpoint
from busnet.neuralnet import layers as L

import gradcheck
import oracles


def test_spec_validation():
    with pytest.raises(ValueError, match="family"):
        ModelSpec(family="vgg")
    with pytest.raises(ValueError, match="num_classes"):
        ModelSpec(num_classes=2)
    with pytest.raises(ValueError, match=">= 3"):
        ModelSpec(family="inception_lite", stage_widths=(2,))
    with pytest.raises(ValueError, match="too small"):
        ModelSpec(input_hw=(4, 4), stage_widths=(2, 2, 2))


def test_build_deterministic():
    spec = ModelSpec("residual", (16, 16), 1, (4, 6))
    a, b = build(spec, 5), build(spec, 5)
    assert all(np.array_equal(a[n], b[n]) for n in a.names())
    c = build(spec, 6)
    assert not np.array_equal(a["stage0.conv.w"], c["stage0.conv.w"])


@pytest.mark.parametrize("family", ["plain_stack", "residual", "inception_lite"])
def test_parameter_count_by_hand(family):
    spec = ModelSpec(family, (32, 32), 1, (8, 16))
    assert build(spec, 0).count() == oracles.hand_param_count((8, 16), 1, family)


def test_plain_count_explicit():
    # conv 1->8: 72+8, conv 8->16: 1152+16, dense 16->3: 48+3
    assert build(ModelSpec("plain_stack", (32, 32), 1, (8, 16)), 0).count() == 80 + 1168 + 51


def test_head_has_three_units():
    shapes = layer_shapes(ModelSpec())
    assert shapes["head.w"][1] == 3 and shapes["head.b"] == (3,)


def test_hand_convolution():
    x = np.ones((1, 1, 3, 3))
    w = np.ones((1, 1, 2, 2))
    out, _ = L.conv_forward(x, w, np.zeros(1), 1, 0)
    assert out.shape == (1, 1, 2, 2)
    assert np.array_equal(out[0, 0], np.full((2, 2), 4.0))


def _zero_head(params):
    t = dict(params.tensors)
    t["head.w"] = np.zeros_like(t["head.w"])
    t["head.b"] = np.zeros_like(t["head.b"])
    return Parameters(t, params.init_seed)


def test_zero_head_uniform():
    spec = ModelSpec("plain_stack", (16, 16), 1, (4,))
    p = _zero_head(build(spec, 0))
    logits, _ = forward(p, spec, np.random.default_rng(0).random((2, 1, 16, 16)))
    assert np.array_equal(logits, np.zeros((2, 3)))
    pred = predict(p, spec, np.random.default_rng(1).random((16, 16, 1)))
    assert np.allclose(pred.probabilities, 1 / 3)
    assert pred.predicted == ClassLabel.NORMAL


def test_identical_images_identical_rows():
    spec = ModelSpec("inception_lite", (16, 16), 3, (6,))
    p = build(spec, 1)
    img = np.random.default_rng(0).random((1, 3, 16, 16))
    logits, _ = forward(p, spec, np.repeat(img, 4, axis=0))
    assert np.all(logits == logits[0])


def test_forward_shape_error_names_layer():
    spec = ModelSpec("plain_stack", (16, 16), 1, (4,))
    with pytest.raises(ValueError, match="layer input"):
        forward(build(spec, 0), spec, np.zeros((1, 1, 8, 8)))


def test_forward_deterministic():
    spec = ModelSpec("residual", (16, 16), 1, (4, 4))
    p = build(spec, 2)
    x = np.random.default_rng(0).random((3, 1, 16, 16))
    assert np.array_equal(forward(p, spec, x)[0], forward(p, spec, x)[0])


def test_residual_blocks_start_as_identity():
    spec = ModelSpec("residual", (16, 16), 1, (4,))
    p = build(spec, 0)
    assert not p["stage0.res_b.w"].any()
    plain = ModelSpec("plain_stack", (16, 16), 1, (4,))
    q = Parameters({n: p[n] for n in layer_shapes(plain)}, 0)
    x = np.random.default_rng(0).random((2, 1, 16, 16))
    # identity block followed by the family's final relu equals the plain network (inputs already >= 0)
    assert np.allclose(forward(p, spec, x)[0], forward(q, plain, x)[0])


@pytest.mark.parametrize("name", list(gradcheck.TOY_SPECS))
def test_family_gradients(name):
    assert gradcheck.family_error(gradcheck.TOY_SPECS[name], seed=1) < 1e-6


def test_layer_gradients():
    errs = gradcheck.layer_errors(seed=3)
    assert max(errs.values()) < 1e-6, errs


def test_zero_upstream_gives_zero_grads():
    spec = ModelSpec("inception_lite", (8, 8), 1, (3,))
    p = build(spec, 0)
    logits, cache = forward(p, spec, np.random.default_rng(0).random((2, 1, 8, 8)))
    grads = backward(cache, np.zeros_like(logits))
    assert all(not g.any() for g in grads.values())


def test_duplicated_sample_doubles_gradient():
    spec = ModelSpec("plain_stack", (8, 8), 1, (3,))
    p = build(spec, 0)
    x = np.random.default_rng(0).random((1, 1, 8, 8))
    up = np.array([[0.3, -0.1, 0.5]])
    g1 = backward(forward(p, spec, x)[1], up)
    g2 = backward(forward(p, spec, np.repeat(x, 2, axis=0))[1], np.repeat(up, 2, axis=0))
    for n in g1:
        assert np.allclose(g2[n], 2 * g1[n], rtol=1e-12, atol=1e-15)


def test_stale_cache_rejected():
    spec = ModelSpec("plain_stack", (8, 8), 1, (3,))
    logits, cache = forward(build(spec, 0), spec, np.zeros((1, 1, 8, 8)))
    backward(cache, np.zeros_like(logits))
    with pytest.raises(ValueError, match="stale"):
        backward(cache, np.zeros_like(logits))


def test_loss_gradient_shape_mismatch():
    spec = ModelSpec("plain_stack", (8, 8), 1, (3,))
    _, cache = forward(build(spec, 0), spec, np.zeros((2, 1, 8, 8)))
    with pytest.raises(ValueError, match="shape"):
        backward(cache, np.zeros((1, 3)))


def test_cross_entropy_values():
    assert cross_entropy(np.zeros((1, 3)), [1])[0] == pytest.approx(np.log(3), abs=1e-15)
    assert cross_entropy(np.array([[20.0, 0, 0]]), [0])[0] < 1e-8
    assert cross_entropy(np.array([[1.0, 0, 0]]), [0])[0] == pytest.approx(np.log(1 + 2 * np.exp(-1)), abs=1e-15)


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3), st.floats(-100, 100))
def test_softmax_sums_and_shift(z, c):
    z = np.array([z])
    p = L.softmax(z)
    assert abs(p.sum() - 1) < 1e-12
    assert np.max(np.abs(L.softmax(z + c) - p)) < 1e-9


def test_one_by_one_model_matches_hand_softmax():
    spec = ModelSpec("plain_stack", (2, 2), 1, (1,))
    t = {
        "stage0.conv.w": np.zeros((1, 1, 3, 3)),
        "stage0.conv.b": np.array([0.5]),
        "head.w": np.array([[1.0, -2.0, 0.0]]),
        "head.b": np.array([0.1, 0.2, 0.3]),
    }
    t["stage0.conv.w"][0, 0, 1, 1] = 2.0
    img = np.array([[0.2, 0.4], [0.1, 0.3]])[:, :, None]
    # conv at each pixel = 2*v + 0.5; relu; maxpool over the 2x2 = 2*0.4+0.5 = 1.3
    feat = 1.3
    logits = np.array([feat + 0.1, -2 * feat + 0.2, 0.3])
    expected = np.exp(logits) / np.exp(logits).sum()
    got = predict(Parameters(t, 0), spec, img).probabilities
    assert np.allclose(got, expected, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["plain_stack", "residual", "inception_lite"]), st.integers(0, 1000))
def test_probabilities_sum_to_one(family, seed):
    spec = ModelSpec(family, (12, 12), 1, (3,))
    p = build(spec, seed)
    probs = predict_proba(p, spec, np.random.default_rng(seed).random((4, 1, 12, 12)))
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_checkpoint_roundtrip(tmp_path):
    spec = ModelSpec("inception_lite", (16, 16), 3, (6, 9), stem_stride=2, input_mean=0.2)
    p = build(spec, 4)
    checkpoint.save(tmp_path / "c.bin", p, spec, epoch=7)
    q, spec2, header = checkpoint.load(tmp_path / "c.bin")
    assert spec2 == spec and header["epoch"] == 7
    assert q.names() == p.names()
    for n in p.names():
        assert np.array_equal(q[n], p[n].astype(np.float32).astype(np.float64))
    assert checkpoint.dumps(q, spec, 7) == checkpoint.dumps(p, spec, 7)


def test_checkpoint_rejects_garbage():
    with pytest.raises(ValueError, match="magic"):
        checkpoint.loads(b"nope" * 10)
