import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodulefusion.neural import (
    ArchitectureError,
    ArchitectureSpec,
    Conv3D,
    Dense,
    LayerNormReLU,
    MaxPool3D,
    MultiCrop,
    Network,
    Output,
    TrainConfig,
    TrainingDiverged,
    balanced_batches,
    learning_rate,
    load_network,
    preset,
    save_network,
    softmax,
    softmax_cross_entropy,
    train,
    write_training_log,
)
from nodulefusion.neural import ops

from gradchecks import LAYER_CHECKS, check_dropout
from oracles import conv3d_loop, cross_entropy_loop, numeric_grad, rel_err


def blob_tensors(n=20, side=16, seed=0):
    """Ellipsoidal blobs; class 1 is larger than class 0."""
    rng = np.random.default_rng(seed)
    g = np.indices((side,) * 3).transpose(1, 2, 3, 0) - (side - 1) / 2
    xs, ys = [], []
    for i in range(n):
        label = i % 2
        r = rng.uniform(3, 5) if label == 0 else rng.uniform(5, 7)
        m = np.square(g / r).sum(-1) <= 1
        xs.append((m * (1 + 0.3 * rng.standard_normal(m.shape))).astype(np.float32))
        ys.append(label)
    return np.array(xs), np.array(ys)


# ---------------------------------------------------------------- softmax / loss


def test_softmax_examples():
    assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5], atol=0, rtol=1e-15)
    assert np.allclose(softmax([0.0, math.log(3)]), [0.25, 0.75], rtol=1e-12)
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0 and p[1] < 1e-300


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-100, 100))
def test_softmax_sums_to_one_and_is_shift_invariant(a, b, c):
    p = softmax([a, b])
    assert abs(p.sum() - 1) < 1e-12
    assert np.allclose(softmax([a + c, b + c]), p, rtol=1e-9, atol=1e-15)


def test_loss_examples():
    loss, _ = softmax_cross_entropy(np.array([[0.0, math.log(3)]]), [1])
    assert loss == pytest.approx(-math.log(0.75), abs=1e-12)
    assert loss == pytest.approx(0.287682, abs=1e-6)
    loss, _ = softmax_cross_entropy(np.array([[-40.0, 40.0], [40.0, -40.0]]), [1, 0])
    assert loss < 1e-30


def test_loss_matches_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(1, 20))
        logits = rng.normal(size=(n, 2)) * 4
        labels = rng.integers(0, 2, size=n)
        assert softmax_cross_entropy(logits, labels)[0] == pytest.approx(cross_entropy_loop(logits, labels), abs=1e-12)


def test_flipped_label_raises_loss():
    logits = np.array([[-2.0, 3.0], [1.5, -1.0], [0.5, 2.0]])
    labels = np.array([1, 0, 1])
    base = softmax_cross_entropy(logits, labels)[0]
    for i in range(3):
        flipped = labels.copy()
        flipped[i] ^= 1
        assert softmax_cross_entropy(logits, flipped)[0] > base


# ---------------------------------------------------------------- layer forward examples


def test_layer_norm_relu_example():
    y, _ = ops.layer_norm_relu_forward(np.array([[1.0, 2.0, 3.0]]), np.ones(3), np.zeros(3), eps=0.0)
    assert np.allclose(y, [[0, 0, 1.224744871391589]], atol=1e-12)
    y, _ = ops.layer_norm_relu_forward(np.full((1, 4), 7.0), np.ones(4), np.zeros(4))
    assert np.all(y == 0)


def test_layer_norm_statistics_span_channels_and_positions():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 4, 4, 4)) * 5 + 3
    _, cache = ops.layer_norm_relu_forward(x, np.ones(3), np.zeros(3), eps=0.0)
    xhat = cache[0]
    assert np.allclose(xhat.reshape(2, -1).mean(axis=1), 0, atol=1e-12)
    assert np.allclose(xhat.reshape(2, -1).std(axis=1), 1, atol=1e-12)


def test_identity_kernel():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 1, 5, 4, 3))
    y, _ = ops.conv3d_forward(x, np.ones((1, 1, 1, 1, 1)), 1, "same")
    assert np.array_equal(y, x)


@pytest.mark.parametrize("stride,padding", [(1, "same"), (2, "same"), (1, "valid"), (2, "valid"), (4, "same")])
def test_conv_matches_loop_oracle(stride, padding):
    rng = np.random.default_rng(stride)
    x = rng.normal(size=(2, 2, 7, 6, 9))
    W = rng.normal(size=(3, 2, 3, 3, 3))
    y, _ = ops.conv3d_forward(x, W, stride, padding)
    pad = [(0, 0)] * 3 if padding == "valid" else [ops.same_padding(n, 3, stride)[1:] for n in x.shape[2:]]
    assert np.allclose(y, conv3d_loop(x, W, stride, pad), atol=1e-12)


def test_maxpool_hand_example():
    x = np.arange(64, dtype=float).reshape(1, 1, 4, 4, 4)
    y, _ = ops.maxpool3d_forward(x, 2, 2)
    # the max of each 2x2x2 block is its far corner
    expected = np.array([[[21, 23], [29, 31]], [[53, 55], [61, 63]]], dtype=float)
    assert np.array_equal(y[0, 0], expected)


def test_maxpool_routes_to_first_tied_index():
    x = np.ones((1, 1, 2, 2, 2))
    y, cache = ops.maxpool3d_forward(x, 2, 2)
    dx = ops.maxpool3d_backward(np.ones_like(y), cache)
    assert dx[0, 0, 0, 0, 0] == 1 and dx.sum() == 1


def test_maxpool_same_padding_odd_dims():
    x = np.random.default_rng(0).normal(size=(1, 1, 5, 3, 7))
    y, _ = ops.maxpool3d_forward(x, 3, 2)
    assert y.shape[2:] == (3, 2, 4)
    assert np.all(np.isfinite(y))


def test_multicrop_shapes_and_constant():
    x = np.random.default_rng(0).normal(size=(1, 5, 8, 8, 8))
    y, _ = ops.multicrop_forward(x)
    assert y.shape == (1, 15, 2, 2, 2)
    y, _ = ops.multicrop_forward(np.full((1, 2, 8, 8, 8), 3.5))
    assert np.all(y == 3.5)


def test_multicrop_incompatible_dims():
    with pytest.raises(ValueError, match="different shapes"):
        ops.multicrop_geometry((8, 8, 8), (1.0, 0.5, 0.25), (2, 1, 1))
    with pytest.raises(ValueError, match="at least 4"):
        ops.multicrop_geometry((8, 3, 8), (1.0, 0.5, 0.25), (2, 1, 0))
    with pytest.raises(ArchitectureError, match="layer 1"):
        ArchitectureSpec("bad", [Conv3D(2), MultiCrop(), Dense(4), Output()], (8, 8, 3))


def test_dropout_inference_identity_and_train_scaling():
    x = np.ones((4, 1000))
    y, _ = ops.dropout_forward(x, 0.9, np.random.default_rng(0), train=False)
    assert y is x
    y, mask = ops.dropout_forward(x, 0.9, np.random.default_rng(0), train=True)
    kept = y[y > 0]
    assert np.allclose(kept, 1 / 0.9)
    assert abs(y.mean() - 1) < 0.05


# ---------------------------------------------------------------- gradient checks


@pytest.mark.parametrize("index,layer", list(enumerate(sorted(LAYER_CHECKS))))
def test_gradient_check(index, layer):
    rng = np.random.default_rng(index)
    for _ in range(5):
        assert LAYER_CHECKS[layer](rng) < 1e-4


def test_dropout_gradient():
    rng = np.random.default_rng(5)
    for _ in range(5):
        assert check_dropout(rng) < 1e-4


def test_whole_network_gradient_float64():
    spec = ArchitectureSpec(
        "tiny",
        [Conv3D(2, 3), LayerNormReLU(), MultiCrop(), Conv3D(2, 3), LayerNormReLU(), MaxPool3D(2, 2),
         Dense(4), LayerNormReLU(), Output()],
        (8, 8, 8),
    )
    net = Network(spec, seed=3, dtype=np.float64)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 1, 8, 8, 8))
    y = np.array([0, 1])
    _, grads, _ = net.loss_and_grads(x, y, train=False)
    for name, p in net.params.items():
        f = lambda: net.loss_and_grads(x, y, train=False)[0]
        assert rel_err(grads[name], numeric_grad(f, p)) < 1e-4, name


# ---------------------------------------------------------------- architectures


@pytest.mark.parametrize(
    "name,target", [("alexnet3d", 113e6), ("vgg16_3d", 65e6), ("multicrop3d", 0.5e6)]
)
def test_preset_parameter_counts(name, target):
    count = preset(name).parameter_count
    assert abs(count - target) <= 0.15 * target


def test_preset_printed_shapes():
    alex = preset("alexnet3d").output_shapes
    assert (7, 7, 9, 256) in alex and alex[-8] == (4, 4, 5, 256)
    vgg = preset("vgg16_3d").output_shapes
    assert vgg[-9] == (2, 2, 3, 512) and vgg[-8] == (1, 1, 2, 512)
    mc = preset("multicrop3d").output_shapes
    assert mc[6] == (4, 4, 5, 64) and mc[8] == (2, 2, 3, 64)


@pytest.mark.parametrize("name,length", [("multicrop3d", 32), ("alexnet3d", 4096), ("vgg16_3d", 4096)])
def test_ffl_length_for_presets(name, length):
    spec = preset(name)
    assert spec.output_shapes[spec.ffl_index] == (length,)


def test_toy_presets_keep_topology():
    for name in ("alexnet3d", "vgg16_3d", "multicrop3d"):
        full = [l.kind for l in preset(name).layers]
        toy = [l.kind for l in preset(name + "_toy").layers]
        assert full == toy


def test_unknown_preset_lists_choices():
    with pytest.raises(KeyError, match="multicrop3d_toy"):
        preset("resnet")


def test_architecture_validation():
    with pytest.raises(ArchitectureError, match="last"):
        ArchitectureSpec("x", [Conv3D(2), Dense(3)], (4, 4, 4))
    with pytest.raises(ArchitectureError, match="layer 0"):
        ArchitectureSpec("x", [Conv3D(2, 5, padding="valid"), Output()], (4, 4, 4))
    with pytest.raises(ArchitectureError, match="layer 1"):
        ArchitectureSpec("x", [Dense(3), Conv3D(2), Output()], (4, 4, 4))
    with pytest.raises(ArchitectureError, match="hidden dense"):
        ArchitectureSpec("x", [Conv3D(2), Output()], (4, 4, 4)).ffl_index


# ---------------------------------------------------------------- features


def test_zero_output_layer_gives_zero_features():
    net = Network(preset("multicrop3d_toy"), seed=0)
    out = [k for k in net.params if k.startswith(f"{len(net.spec.layers) - 1}.")]
    for k in out:
        net.params[k][:] = 0
    x, _ = blob_tensors(3)
    assert np.all(net.output_features(x) == 0)


def test_softmax_of_output_features_is_prediction():
    net = Network(preset("multicrop3d_toy"), seed=1)
    x, _ = blob_tensors(4)
    assert np.allclose(softmax(net.output_features(x)), net.predict_proba(x), rtol=0, atol=0)


def test_ffl_features_nonnegative_and_sized():
    net = Network(preset("multicrop3d_toy"), seed=1)
    x, _ = blob_tensors(4)
    f = net.ffl_features(x)
    assert f.shape == (4, 32) and np.all(f >= 0)


def test_forward_is_batch_independent():
    net = Network(preset("multicrop3d_toy"), seed=2)
    x, _ = blob_tensors(5)
    full = net.forward(x)
    single = np.concatenate([net.forward(x[i : i + 1]) for i in range(5)])
    assert np.allclose(full, single, rtol=1e-5, atol=1e-6)


# ---------------------------------------------------------------- training


def test_learning_rate_schedule():
    assert [learning_rate(e) for e in (1, 2, 4, 5, 8, 9, 50)] == [0.005, 0.001, 0.001, 0.0005, 0.0005, 1e-4, 1e-4]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule=((1, 0.0),))
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule=((2, 0.1),))


@given(st.integers(1, 30), st.integers(1, 30), st.integers(2, 12), st.integers(0, 100))
@settings(max_examples=50, deadline=None)
def test_balanced_batches_have_equal_class_counts(n_pos, n_neg, batch, seed):
    labels = np.array([1] * n_pos + [0] * n_neg)
    batches = balanced_batches(labels, batch, np.random.default_rng(seed))
    seen = np.concatenate(batches)
    assert len(seen) == len(set(seen)) == 2 * min(n_pos, n_neg)
    for b in batches:
        assert np.sum(labels[b] == 1) == np.sum(labels[b] == 0)


def test_training_is_deterministic_and_round_trips(tmp_path):
    x, y = blob_tensors(8)
    cfg = TrainConfig(batch_size=4, max_epochs=3, seed=11)
    a = train(preset("multicrop3d_toy"), x, y, cfg)
    b = train(preset("multicrop3d_toy"), x, y, cfg)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    assert a.log == b.log and len(a.log) == 3
    path = tmp_path / "net.bin"
    save_network(path, a)
    c = load_network(path)
    assert np.array_equal(a.forward(x), c.forward(x))
    assert c.log == a.log
    write_training_log(tmp_path / "log.csv", a.log)
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,lr" and len(lines) == 4


def test_training_reduces_loss():
    x, y = blob_tensors(12, seed=4)
    net = train(preset("multicrop3d_toy"), x, y, TrainConfig(batch_size=4, max_epochs=15, seed=0))
    assert net.log[-1]["loss"] < net.log[0]["loss"]
    assert all(np.all(np.isfinite(p)) for p in net.params.values())


def test_training_needs_both_classes():
    x, _ = blob_tensors(4)
    with pytest.raises(ValueError):
        train(preset("multicrop3d_toy"), x, np.zeros(4, int), TrainConfig(max_epochs=1))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_keeps_last_finite_checkpoint():
    x, y = blob_tensors(4)
    x[0, 0, 0, 0] = np.inf
    net0 = Network(preset("multicrop3d_toy"), seed=0)
    with pytest.raises(TrainingDiverged) as info:
        train(net0, x, y, TrainConfig(batch_size=4, max_epochs=2, seed=0))
    ckpt = info.value.network
    assert all(np.array_equal(ckpt.params[k], net0.params[k]) for k in net0.params)
