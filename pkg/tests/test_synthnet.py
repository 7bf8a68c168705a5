import math

import numpy as np
import pytest

from bwnas.errors import ShapeError
from bwnas.nsr import nsr_loss
from bwnas.space import BlockSpec, OpChoice, SearchSpace
from bwnas.synthnet import (
    DEFAULT_SAMPLES,
    BlockNet,
    LayerWeights,
    depthwise_conv,
    evaluate_block,
    export_batches,
    fit_projection,
    forward_block,
    import_batches,
    make_calibration_set,
    make_layer,
    make_student_block,
    make_teacher,
    solve_projection,
)


def unit_net(expand=2.0, dw=1.0, proj=1.0):
    layer = LayerWeights(np.array([[expand]]), np.array([[dw]]), np.array([[proj]]))
    return BlockNet(0, (OpChoice(1, 1),), (layer,))


def test_tiny_forward_hand_value():
    # tanh(tanh(2 * 0.5)) evaluated by hand
    out = forward_block(unit_net(), np.array([[[0.5]]]))
    assert out[0, 0, 0] == pytest.approx(0.6420149920119997, abs=1e-15)
    assert out[0, 0, 0] == pytest.approx(math.tanh(math.tanh(1.0)), abs=0)


def test_depthwise_same_padding():
    h = np.arange(1.0, 6.0).reshape(1, 1, 5)
    k = np.array([[1.0, 10.0, 100.0]])
    out = depthwise_conv(h, k)[0, 0]
    ref = [sum(k[0, j] * (h[0, 0, p + j - 1] if 0 <= p + j - 1 < 5 else 0) for j in range(3))
           for p in range(5)]
    np.testing.assert_array_equal(out, ref)


def test_linear_mode_matches_matrix_products(rng):
    net = BlockNet(0, (OpChoice(1, 3),), (make_layer(rng, 4, 5, OpChoice(1, 3)),))
    x = rng.standard_normal((3, 4, 7))
    layer = net.layers[0]
    ref = np.einsum("oh,hc,mcl->mol", layer.project, layer.depthwise[:, 0:1] * layer.expand, x)
    np.testing.assert_allclose(forward_block(net, x, activation=None), ref, atol=1e-12)


def test_shape_error(rng):
    net = BlockNet(0, (OpChoice(3, 3),), (make_layer(rng, 4, 4, OpChoice(3, 3)),))
    with pytest.raises(ShapeError):
        forward_block(net, np.zeros((2, 5, 8)))


def test_fan_in_scaling():
    rng = np.random.default_rng(0)
    layer = make_layer(rng, 16, 16, OpChoice(3, 6))
    assert layer.expand.size >= 1536
    vals = np.concatenate([make_layer(rng, 16, 16, OpChoice(3, 6)).expand.ravel() for _ in range(8)])
    assert vals.size >= 10_000
    assert abs(vals.var() - 1 / 16) / (1 / 16) < 0.2


def test_chaining_and_defaults():
    space = SearchSpace.from_layers([1, 2, 1], [8, 12, 12], 4)
    calib = make_calibration_set(space, make_teacher(space, 3), 4)
    assert calib.num_samples == DEFAULT_SAMPLES == 20
    for i in range(space.num_blocks - 1):
        assert calib.targets[i].tobytes() == calib.inputs[i + 1].tobytes()
    assert calib.inputs[0].shape == (20, 4, 16)


def test_weights_deterministic_and_shared():
    b = BlockSpec(1, 3, 8, 8)
    n1 = make_student_block(b, 121, seed=5)
    n2 = make_student_block(b, 121, seed=5)
    for a, c in zip(n1.weight_tensors(), n2.weight_tensors()):
        assert a.tobytes() == c.tobytes()
    # subnets 121 and 1 share the layer-0 op index 1
    other = make_student_block(b, 1, seed=5)
    assert other.layers[0].expand.tobytes() == n1.layers[0].expand.tobytes()
    assert make_student_block(b, 121, seed=6).layers[0].expand.tobytes() != n1.layers[0].expand.tobytes()


def dense_ridge(hidden, target, ridge):
    """Per-channel ridge solve via an augmented least-squares system."""
    m, h, l = hidden.shape
    rows = hidden.transpose(0, 2, 1).reshape(m * l, h)
    a = np.vstack([rows, math.sqrt(ridge) * np.eye(h)])
    out = []
    for c in range(target.shape[1]):
        y = np.concatenate([target[:, c, :].reshape(m * l), np.zeros(h)])
        out.append(np.linalg.lstsq(a, y, rcond=None)[0])
    return np.array(out)


def test_fit_matches_dense_solve(rng):
    hidden = rng.standard_normal((6, 5, 4))
    target = rng.standard_normal((6, 2, 4))
    got = solve_projection(hidden, target, 1e-6)
    np.testing.assert_allclose(got, dense_ridge(hidden, target, 1e-6), atol=1e-9)


def test_fit_on_toy_block(rng):
    space = SearchSpace.from_layers([1], [2], 2)
    teacher = make_teacher(space, 0)
    calib = make_calibration_set(space, teacher, 2, samples=6, length=8)
    net = make_student_block(space.blocks[0], 3, 1)
    fitted = fit_projection(net, calib.inputs[0], calib.targets[0])
    before = evaluate_block(net, calib.inputs[0], calib.targets[0])
    after = evaluate_block(fitted, calib.inputs[0], calib.targets[0])
    assert after <= before
    from bwnas.synthnet import final_hidden
    h = final_hidden(net, calib.inputs[0])
    np.testing.assert_allclose(fitted.layers[-1].project,
                               dense_ridge(h, calib.targets[0], 1e-6), atol=1e-9)


def test_quantized_eval_differs(smoke_setup):
    space, _, calib = smoke_setup
    net = make_student_block(space.blocks[0], 7, 1)
    l4 = evaluate_block(net, calib.inputs[0], calib.targets[0], bits=4)
    l8 = evaluate_block(net, calib.inputs[0], calib.targets[0], bits=8)
    assert l4 != l8
    assert evaluate_block(net, calib.inputs[0], calib.targets[0]) == nsr_loss(
        calib.targets[0], forward_block(net, calib.inputs[0]))


def test_batch_export_roundtrip(tmp_path, rng):
    batches = [rng.standard_normal((2, 3, 4)), rng.standard_normal((1, 5, 2))]
    export_batches(tmp_path / "b.bin", batches)
    back = import_batches(tmp_path / "b.bin")
    assert all(a.tobytes() == b.tobytes() for a, b in zip(batches, back))
