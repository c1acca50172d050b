import numpy as np
import pytest

from lcsplat import diffmath as dm
from fd_oracle import numeric_grad, max_rel_error


def test_mlp_zero_weights_returns_last_bias():
    net = dm.Mlp([2, 3, 4], ["relu", "none"], seed=0)
    for w in net.weights:
        w.data[:] = 0.0
    net.biases[-1].data[:] = np.array([0.5, -1.0, 2.0, 0.25], dtype=np.float32)
    out = net(dm.Tensor([[1.0, -3.0]]))
    np.testing.assert_allclose(out.data, [[0.5, -1.0, 2.0, 0.25]])


def test_mlp_identity_layer_passes_input_through():
    net = dm.Mlp([2, 2], ["none"], seed=0)
    net.weights[0].data[:] = np.eye(2, dtype=np.float32)
    net.biases[0].data[:] = 0.0
    out = net(dm.Tensor([1.0, 2.0]))
    np.testing.assert_allclose(out.data, [1.0, 2.0])


def test_mlp_forward_matches_straight_line_oracle():
    # independent oracle: explicit matrix multiplies outside the tape
    net = dm.Mlp([1, 3, 2], ["relu", "sigmoid"], seed=7)
    x = np.array([[0.5]], dtype=np.float32)
    h = np.maximum(x @ net.weights[0].data + net.biases[0].data, 0.0)
    z = h @ net.weights[1].data + net.biases[1].data
    expect = 1.0 / (1.0 + np.exp(-z))
    out = net(dm.Tensor(x))
    np.testing.assert_allclose(out.data, expect, rtol=1e-6)


def test_mlp_forward_deterministic():
    a = dm.Mlp([3, 8, 1], ["relu", "none"], seed=11)
    b = dm.Mlp([3, 8, 1], ["relu", "none"], seed=11)
    x = dm.Tensor(np.random.default_rng(0).normal(size=(5, 3)).astype(np.float32))
    np.testing.assert_array_equal(a(x).data, b(x).data)


def test_mlp_shape_mismatch_raises():
    net = dm.Mlp([2, 2], ["none"], seed=0)
    with pytest.raises(dm.TapeError):
        net(dm.Tensor([[1.0, 2.0, 3.0]]))


def test_backward_sum_of_squares():
    x = dm.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = dm.tsum(dm.mul(x, x))
    loss.backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])


def test_backward_sigmoid_at_zero():
    # d sigmoid(w.x)/dw at w=0 is 0.25 * x
    x = np.array([0.7, -1.2], dtype=np.float32)
    w = dm.Tensor([0.0, 0.0], requires_grad=True)
    loss = dm.tsum(dm.sigmoid(dm.tsum(dm.mul(w, x))))
    loss.backward()
    np.testing.assert_allclose(w.grad, 0.25 * x, rtol=1e-6)


def test_backward_requires_scalar():
    x = dm.Tensor([1.0, 2.0], requires_grad=True)
    y = dm.mul(x, x)
    with pytest.raises(dm.TapeError):
        y.backward()


def test_graph_cleared_after_backward():
    x = dm.Tensor([1.0, 2.0], requires_grad=True)
    y = dm.tsum(dm.mul(x, x))
    y.backward()
    assert y._parents == () and y._bwd is None


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_composed_loss_matches_finite_differences(seed):
    # draw instances until relu/abs arguments are clear of their kinks, where
    # the central-difference oracle itself is invalid
    for sub in range(100):
        rng = np.random.default_rng(1000 * seed + sub)
        w0 = rng.normal(size=(4, 5)) * 0.5
        b0 = rng.normal(size=5) * 0.1
        w1 = rng.normal(size=(5, 1)) * 0.5
        x = rng.normal(size=(3, 4))
        pre = x @ w0 + b0
        s_val = 1.0 / (1.0 + np.exp(-(np.maximum(pre, 0.0) @ w1)))
        if np.min(np.abs(pre)) > 5e-3 and np.min(np.abs(s_val - 0.25)) > 5e-3:
            break
    else:
        pytest.fail("no kink-free instance found")

    def loss_fn(w0v, b0v, w1v):
        h = np.maximum(x @ w0v + b0v, 0.0)
        s = 1.0 / (1.0 + np.exp(-(h @ w1v)))
        return np.abs(s - 0.25).sum() + np.exp(-s).mean()

    tw0 = dm.Tensor(w0, requires_grad=True, dtype=np.float64)
    tb0 = dm.Tensor(b0, requires_grad=True, dtype=np.float64)
    tw1 = dm.Tensor(w1, requires_grad=True, dtype=np.float64)
    h = dm.relu(dm.add(dm.matmul(dm.Tensor(x, dtype=np.float64), tw0), tb0))
    s = dm.sigmoid(dm.matmul(h, tw1))
    loss = dm.add(dm.tsum(dm.absval(dm.sub(s, 0.25))), dm.tmean(dm.exp(dm.neg(s))))
    loss.backward()

    num = numeric_grad(loss_fn, [w0, b0, w1], h=1e-3)
    assert max_rel_error([tw0.grad, tb0.grad, tw1.grad], num) < 1e-3


@pytest.mark.parametrize("op_name", ["div", "log", "sqrt", "clamp", "normalize_rows", "crop", "concat", "conv"])
def test_op_gradients_match_finite_differences(op_name):
    rng = np.random.default_rng(42)
    x = rng.uniform(0.5, 2.0, size=(4, 3))
    y = rng.uniform(0.5, 2.0, size=(4, 3))

    if op_name == "div":
        fn = lambda a, b: (a / b).sum()
        tape = lambda ta, tb: dm.tsum(dm.div(ta, tb))
    elif op_name == "log":
        fn = lambda a, b: (np.log(a) * b).sum()
        tape = lambda ta, tb: dm.tsum(dm.mul(dm.log(ta), tb))
    elif op_name == "sqrt":
        fn = lambda a, b: np.sqrt(a + b).sum()
        tape = lambda ta, tb: dm.tsum(dm.sqrt(dm.add(ta, tb)))
    elif op_name == "clamp":
        fn = lambda a, b: (np.clip(a, 0.8, 1.5) * b).sum()
        tape = lambda ta, tb: dm.tsum(dm.mul(dm.clamp(ta, 0.8, 1.5), tb))
    elif op_name == "normalize_rows":
        fn = lambda a, b: (a / np.sqrt((a ** 2).sum(-1, keepdims=True) + 1e-12) * b).sum()
        tape = lambda ta, tb: dm.tsum(dm.mul(dm.normalize_rows(ta), tb))
    elif op_name == "crop":
        fn = lambda a, b: (a[1:3, :2] ** 2).sum() + b.sum()
        tape = lambda ta, tb: dm.add(dm.tsum(dm.mul(ta[1:3, :2], ta[1:3, :2])), dm.tsum(tb))
    elif op_name == "concat":
        fn = lambda a, b: (np.concatenate([a, b], axis=1) ** 3).sum()
        c3 = lambda t: dm.mul(dm.mul(t, t), t)
        tape = lambda ta, tb: dm.tsum(c3(dm.concat([ta, tb], axis=1)))
    else:  # conv
        k = np.array([0.25, 0.5, 0.25])
        def fn(a, b):
            padded = a + b
            outh = sum(k[t] * padded[t:t + 2] for t in range(3))
            out = sum(k[t] * outh[:, t:t + 1] for t in range(3))
            return (out ** 2).sum()
        tape = lambda ta, tb: dm.tsum(
            dm.mul(dm.conv2d_separable(dm.add(ta, tb), k), dm.conv2d_separable(dm.add(ta, tb), k)))

    ta = dm.Tensor(x, requires_grad=True, dtype=np.float64)
    tb = dm.Tensor(y, requires_grad=True, dtype=np.float64)
    tape(ta, tb).backward()
    num = numeric_grad(fn, [x, y], h=1e-4)
    assert max_rel_error([ta.grad, tb.grad], num) < 1e-3


def test_gather_and_corner_sum_gradients():
    rng = np.random.default_rng(3)
    feats = rng.normal(size=(6, 4))
    idx = np.array([[0, 1, 2, 5], [5, 5, 3, 0]])
    w = rng.uniform(0.1, 1.0, size=(2, 4))

    def fn(f):
        return (w[:, :, None] * f[idx]).sum(axis=1).sum() ** 2

    tf = dm.Tensor(feats, requires_grad=True, dtype=np.float64)
    out = dm.tsum(dm.weighted_corner_sum(tf, idx, w))
    dm.mul(out, out).backward()
    num = numeric_grad(fn, [feats], h=1e-4)
    assert max_rel_error([tf.grad], num) < 1e-3

    tf2 = dm.Tensor(feats, requires_grad=True, dtype=np.float64)
    dm.tsum(dm.mul(dm.gather_rows(tf2, idx), dm.gather_rows(tf2, idx))).backward()
    def fn2(f):
        return (f[idx] ** 2).sum()
    num2 = numeric_grad(fn2, [feats], h=1e-4)
    assert max_rel_error([tf2.grad], num2) < 1e-3


def test_no_nan_on_finite_inputs():
    rng = np.random.default_rng(9)
    x = dm.Tensor(rng.normal(size=(16, 8)).astype(np.float32) * 50)
    for op in (dm.relu, dm.sigmoid):
        assert np.all(np.isfinite(op(x).data))
    assert np.all(np.isfinite(dm.exp(dm.clamp(x, -60, 60)).data))


# --- Adam ---------------------------------------------------------------


def test_adam_zero_grad_leaves_params():
    p = dm.Tensor([1.0, 2.0], requires_grad=True)
    opt = dm.Adam([("p", [p], 0.1)])
    p.grad = np.zeros(2, dtype=np.float32)
    opt.step()
    np.testing.assert_allclose(p.data, [1.0, 2.0])


def test_adam_first_step_is_lr_sized():
    # bias correction makes the very first step ~= lr regardless of |g|
    p = dm.Tensor([0.0], requires_grad=True)
    opt = dm.Adam([("p", [p], 0.1)])
    p.grad = np.array([1.0], dtype=np.float32)
    opt.step()
    # m_hat = 1, v_hat = 1 -> step = lr * 1/(1 + eps)
    assert abs(p.data[0] + 0.1) < 1e-5


def test_adam_step_magnitude_converges_to_lr():
    p = dm.Tensor([0.0], requires_grad=True)
    opt = dm.Adam([("p", [p], 0.05)])
    prev = 0.0
    steps = []
    for _ in range(200):
        p.grad = np.array([2.5], dtype=np.float32)
        opt.step()
        steps.append(prev - p.data[0])
        prev = float(p.data[0])
    assert abs(steps[-1] - 0.05) < 1e-3


def test_adam_nan_grad_aborts_with_name():
    p = dm.Tensor([0.0], requires_grad=True, name="means")
    opt = dm.Adam([("g", [p], 0.1)])
    p.grad = np.array([np.nan], dtype=np.float32)
    with pytest.raises(dm.NumericFailure, match="means"):
        opt.step()


# --- checkpoint ----------------------------------------------------------


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "model.tclc"
    tensors = {
        "a": np.arange(6, dtype=np.float32).reshape(2, 3),
        "nested.name": np.array(3.5, dtype=np.float32),
    }
    dm.save_checkpoint(path, tensors, sections={"OCTO": b"\x01\x02\x03"})
    loaded, sections = dm.load_checkpoint(path)
    np.testing.assert_array_equal(loaded["a"], tensors["a"])
    np.testing.assert_array_equal(loaded["nested.name"], tensors["nested.name"])
    assert sections["OCTO"] == b"\x01\x02\x03"


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.tclc"
    path.write_bytes(b"NOPE1234")
    with pytest.raises(dm.CheckpointError, match="magic"):
        dm.load_checkpoint(path)
