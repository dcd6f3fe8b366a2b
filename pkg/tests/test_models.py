import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.config import DATASET_PRESETS
from src.errors import ShapeError, ValidationError
from src.losses import bce_gradient, bce_loss
from src.models import NetworkConfig, build_network, forward, load_checkpoint, save_checkpoint
from src.rng import make_rng


ARCHS = ["attrCNN", "attrDeepConvLSTM", "attrCNN-IMU"]


def _sampled_indices(shape, gen, k=6):
    size = int(np.prod(shape))
    flat = gen.choice(size, size=min(k, size), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


@pytest.mark.parametrize("architecture", ARCHS)
def test_network_gradients_match_finite_differences(architecture, tiny_netcfg, fd):
    groups = [[0, 1, 2], [3, 4, 5]] if architecture == "attrCNN-IMU" else None
    cfg = tiny_netcfg(architecture, n=4, channels=6, filters=4, hidden=5, groups=groups)
    net = build_network(cfg, seed=3)
    gen = np.random.default_rng(0)
    x = gen.uniform(size=(2, 12, 6))
    target = gen.integers(0, 2, size=(2, 4)).astype(float)

    loss = lambda: bce_loss(target, net.forward(x, mode="eval"))
    net.backward(bce_gradient(target, net.forward(x, mode="eval")), from_logits=True)
    analytic = net.get_gradients()
    for name, value in net.get_parameters().items():
        idx = _sampled_indices(value.shape, gen)
        numeric = fd(loss, value, indices=idx)
        a = np.array([analytic[name][i] for i in idx])
        n = np.array([numeric[i] for i in idx])
        # error relativo a la escala del tensor: las entradas muestreadas pueden ser casi nulas
        scale = max(float(np.max(np.abs(analytic[name]))), 1e-5)
        assert np.max(np.abs(a - n)) / scale < 1e-4, name


@pytest.mark.parametrize("architecture", ARCHS)
@pytest.mark.parametrize("shape", [(24, 113, 10, False), (24, 113, 32, False), (100, 40, 24, True)])
def test_dataset_scale_shapes_emit_scores_in_unit_interval(architecture, shape):
    T, D, n, pooling = shape
    groups = None
    if architecture == "attrCNN-IMU":
        preset = "opportunity-locomotion" if D == 113 else "pamap2"
        groups = list(DATASET_PRESETS[preset]["groups"].values())
    cfg = NetworkConfig(architecture, T, D, n, pooling=pooling, groups=groups)
    net = build_network(cfg, seed=0)
    scores = forward(net, np.random.default_rng(0).uniform(size=(2, T, D))).scores
    assert scores.shape == (2, n)
    assert np.all((scores > 0) & (scores < 1))


def test_imu_with_one_group_equals_cnn(tiny_netcfg):
    x = np.random.default_rng(1).uniform(size=(3, 12, 4))
    cnn = build_network(tiny_netcfg("attrCNN"), seed=11)
    imu = build_network(tiny_netcfg("attrCNN-IMU", groups=[[0, 1, 2, 3]]), seed=11)
    assert_array_equal(forward(cnn, x).scores, forward(imu, x).scores)


def test_window_too_short_is_rejected():
    with pytest.raises(ShapeError):
        build_network(NetworkConfig("attrCNN", 12, 4, 5), seed=0)


def test_groups_must_partition_channels():
    with pytest.raises(ValidationError):
        NetworkConfig("attrCNN-IMU", 24, 4, 5, groups=[[0, 1], [1, 2, 3]])
    with pytest.raises(ValidationError):
        NetworkConfig("attrCNN-IMU", 24, 4, 5, groups=[[0, 1]])
    with pytest.raises(ValidationError):
        NetworkConfig("resnet", 24, 4, 5)


def test_eval_is_deterministic_and_batch_independent(tiny_netcfg):
    net = build_network(tiny_netcfg("attrDeepConvLSTM"), seed=2)
    x = np.random.default_rng(2).uniform(size=(4, 12, 4))
    first = forward(net, x).scores
    assert_array_equal(first, forward(net, x).scores)
    for i in range(4):
        assert_allclose(forward(net, x[i:i + 1]).scores[0], first[i], rtol=1e-12, atol=1e-15)


def test_forward_validates_input(tiny_netcfg):
    net = build_network(tiny_netcfg(dropout=0.5), seed=0)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 10, 4)))
    with pytest.raises(ValidationError):
        net.forward(np.full((1, 12, 4), np.inf))
    with pytest.raises(ValidationError):
        net.forward(np.zeros((1, 12, 4)), mode="train")
    out = net.forward(np.zeros((1, 12, 4)), mode="train", rng=make_rng(0, "dropout"))
    assert out.shape == (1, 4)


def test_seed_controls_initialization(tiny_netcfg):
    a = build_network(tiny_netcfg(), seed=0)
    b = build_network(tiny_netcfg(), seed=0)
    c = build_network(tiny_netcfg(), seed=1)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_softmax_head_outputs_distribution(tiny_netcfg):
    net = build_network(tiny_netcfg(n=3, head="softmax"), seed=0)
    scores = forward(net, np.random.default_rng(0).uniform(size=(5, 12, 4))).scores
    assert_allclose(scores.sum(axis=1), 1.0)


def test_checkpoint_round_trip(tmp_path, tiny_netcfg):
    net = build_network(tiny_netcfg("attrCNN-IMU", groups=[[0, 1], [2, 3]]), seed=5)
    path = tmp_path / "model.npz"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.digest() == net.digest()
    x = np.random.default_rng(0).uniform(size=(2, 12, 4))
    assert_array_equal(forward(loaded, x).scores, forward(net, x).scores)


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.npz"
    np.savez(path, meta=np.array('{"format": "other", "version": 1}'))
    with pytest.raises(ValidationError):
        load_checkpoint(path)


def test_set_parameters_checks_shapes(tiny_netcfg):
    net = build_network(tiny_netcfg(), seed=0)
    params = net.get_parameters()
    name = next(iter(params))
    params[name] = np.zeros((1,))
    with pytest.raises(ShapeError):
        net.set_parameters(params)


def test_zero_lstm_outputs_sigmoid_of_final_bias(tiny_netcfg):
    net = build_network(tiny_netcfg("attrDeepConvLSTM"), seed=0)
    params = net.get_parameters()
    for name in params:
        if ".lstm." in name:
            params[name] = np.zeros_like(params[name])
    bias_name = [name for name in params if name.endswith("dense.bias")][-1]
    params[bias_name] = np.array([-1.0, 0.0, 0.5, 2.0])
    net.set_parameters(params)
    scores = forward(net, np.random.default_rng(0).uniform(size=(3, 12, 4))).scores
    assert_allclose(scores, np.tile(1 / (1 + np.exp(-params[bias_name])), (3, 1)), rtol=1e-12)


def test_imu_permuting_channels_within_group_with_weights_keeps_output(tiny_netcfg):
    x = np.random.default_rng(4).uniform(size=(3, 12, 6))
    base = build_network(tiny_netcfg("attrCNN-IMU", channels=6, groups=[[0, 1, 2], [3, 4, 5]]), seed=9)
    perm = [2, 0, 1]
    permuted = build_network(tiny_netcfg("attrCNN-IMU", channels=6, groups=[perm, [3, 4, 5]]), seed=9)

    params = {name: value.copy() for name, value in base.get_parameters().items()}
    name = next(k for k in params if k.startswith("0.branch0.") and k.endswith("dense.weights"))
    t_out = base.config.time_after_convs()
    w = params[name].reshape(t_out, 3, base.config.filters, -1)
    # el sensor d de la rama permutada es el sensor perm[d] de la original
    params[name] = w[:, perm].reshape(params[name].shape)
    permuted.set_parameters(params)
    assert_allclose(forward(permuted, x).scores, forward(base, x).scores, rtol=1e-10)


def test_opportunity_imu_layout_builds_seven_branches():
    groups = list(DATASET_PRESETS["opportunity-locomotion"]["groups"].values())
    assert [len(g) for g in groups] == [16, 16, 16, 16, 16, 16, 17]
    cfg = NetworkConfig("attrCNN-IMU", 24, 113, 10, filters=4, hidden=8, groups=groups)
    net = build_network(cfg, seed=0)
    assert sum(1 for name in net.get_parameters() if name.endswith("conv.weights")) == 7 * 4
    scores = forward(net, np.random.default_rng(0).uniform(size=(2, 24, 113))).scores
    assert scores.shape == (2, 10)


def test_summary_lists_layers(tiny_netcfg):
    net = build_network(tiny_netcfg(), seed=0)
    lines = net.summary()
    assert lines[0].startswith("attrCNN:")
    assert lines[1] == "  0: conv[3x1] 1->4"
    assert lines[-1].endswith("sigmoid")
