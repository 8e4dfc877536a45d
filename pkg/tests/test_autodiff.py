import numpy as np
import pytest

from imagine import autodiff as ad
from imagine.errors import ArchitectureError, DimensionError, FormatError, NumericsError


def rng(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# build_mlp


def test_build_mlp_structure():
    mlp = ad.build_mlp([4, 8, 2], "elu", rng(), "m")
    assert len(mlp.layers) == 2
    assert mlp.layers[0].w.data.shape == (4, 8)
    assert mlp.layers[1].w.data.shape == (8, 2)
    assert all(np.all(layer.b.data == 0) for layer in mlp.layers)


def test_build_mlp_single_affine_is_linear():
    mlp = ad.build_mlp([1, 1], "none", rng(3), "m")
    w = float(mlp.layers[0].w.data[0, 0])
    x = np.array([[2.5]])
    out = mlp.forward_np(x)
    assert out[0, 0] == pytest.approx(w * 2.5)


def test_build_mlp_rejects_bad_architectures():
    with pytest.raises(ArchitectureError):
        ad.build_mlp([3], "elu", rng(), "m")
    with pytest.raises(ArchitectureError):
        ad.build_mlp([], "elu", rng(), "m")
    with pytest.raises(ArchitectureError):
        ad.build_mlp([3, 0, 2], "elu", rng(), "m")


def test_elu_values():
    x = ad.constant(np.array([-1.0, 2.0]))
    out = ad.elu(x)
    assert out.data[0] == pytest.approx(np.exp(-1.0) - 1.0, abs=1e-12)
    assert out.data[1] == 2.0


def test_weight_init_scale():
    mlp = ad.build_mlp([100, 50], "none", rng(1), "m")
    s = np.sqrt(6.0 / 150.0)
    w = mlp.layers[0].w.data
    assert w.max() <= s and w.min() >= -s
    assert w.std() == pytest.approx(s / np.sqrt(3.0), rel=0.1)


# ---------------------------------------------------------------------------
# forward_backward


def test_linear_gradient():
    w = ad.parameter("w", np.array([[1.0, 2.0], [3.0, 4.0]]))
    x = ad.constant(np.array([[1.0], [1.0]]))
    graph = ad.Graph(lambda: ad.sum_all(ad.matmul(w, x)), {"w": w})
    loss, grads = ad.forward_backward(graph)
    assert loss == 10.0
    np.testing.assert_array_equal(grads["w"], np.ones((2, 2)))


def test_forward_deterministic_bit_identical():
    mlp = ad.build_mlp([3, 5, 1], "elu", rng(7), "m")
    x = ad.constant(rng(8).standard_normal((4, 3)))
    graph = ad.Graph(lambda: ad.sum_all(mlp(x)), mlp.params())
    l1, g1 = ad.forward_backward(graph)
    l2, g2 = ad.forward_backward(graph)
    assert l1 == l2
    for k in g1:
        np.testing.assert_array_equal(g1[k], g2[k])


def test_nonscalar_loss_rejected():
    w = ad.parameter("w", np.ones((2, 2)))
    graph = ad.Graph(lambda: ad.mul(w, w), {"w": w})
    with pytest.raises(DimensionError):
        ad.forward_backward(graph)


def test_shape_mismatch_raises():
    a = ad.constant(np.ones((2, 3)))
    b = ad.constant(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        ad.matmul(a, b)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_intermediate_reports_node():
    w = ad.parameter("w", np.array([-1.0]))
    graph = ad.Graph(lambda: ad.sum_all(ad.log(w)), {"w": w})
    with pytest.raises(NumericsError, match="node"):
        ad.forward_backward(graph)


def test_stop_gradient_exactly_zero():
    mlp = ad.build_mlp([3, 4, 1], "elu", rng(2), "dec")
    x = ad.constant(rng(5).standard_normal((6, 3)))
    graph = ad.Graph(lambda: ad.sum_all(mlp(x, frozen=True)), mlp.params())
    loss, grads = ad.forward_backward(graph)
    assert loss != 0.0
    for name, g in grads.items():
        assert np.all(g == 0.0), name
    assert graph.frozen == set(mlp.params())


# ---------------------------------------------------------------------------
# grad_check


def test_grad_check_quadratic():
    w = ad.parameter("w", rng(3).standard_normal((4,)))
    graph = ad.Graph(lambda: ad.sum_all(ad.mul(w, w)), {"w": w})
    assert ad.grad_check(graph, 1e-5) < 1e-7


def test_grad_check_mlp_ops():
    mlp = ad.build_mlp([4, 6, 3], "elu", rng(11), "m")
    x = ad.constant(rng(12).standard_normal((5, 4)))
    y_idx = rng(13).integers(0, 3, size=5)

    def build():
        logits = mlp(x)
        ll = ad.sum_all(ad.gather_cols(ad.log_softmax(logits), y_idx))
        probs = ad.clip(ad.sigmoid(logits), 1e-7, 1 - 1e-7)
        extra = ad.sum_all(ad.log(probs)) + ad.sum_all(ad.exp(ad.scale(logits, 0.1)))
        return ad.sub(extra, ll)

    graph = ad.Graph(build, mlp.params())
    assert ad.grad_check(graph, 1e-5) < 1e-6


def test_grad_check_excludes_frozen():
    enc = ad.build_mlp([2, 3, 2], "elu", rng(20), "enc")
    dec = ad.build_mlp([2, 3, 2], "elu", rng(21), "dec")
    x = ad.constant(rng(22).standard_normal((4, 2)))

    def build():
        h = enc(x)
        out = dec(h, frozen=True)
        return ad.sum_all(ad.mul(out, out))

    params = {**enc.params(), **dec.params()}
    graph = ad.Graph(build, params)
    err = ad.grad_check(graph, 1e-5)
    assert err < 1e-6
    assert set(graph.frozen) == set(dec.params())


def test_broadcast_bias_gradient():
    w = ad.parameter("w", rng(1).standard_normal((3, 2)))
    b = ad.parameter("b", rng(2).standard_normal(2))
    x = ad.constant(rng(3).standard_normal((5, 3)))
    graph = ad.Graph(lambda: ad.sum_all(ad.exp(ad.add(ad.matmul(x, w), b))), {"w": w, "b": b})
    assert ad.grad_check(graph, 1e-6) < 1e-6


# ---------------------------------------------------------------------------
# Adam


def test_adam_zero_gradient_fixed_point():
    p = ad.parameter("p", np.array([1.0, -2.0, 3.5]))
    before = p.data.copy()
    state = ad.AdamState.create({"p": p}, learning_rate=0.1)
    ad.adam_step({"p": p}, {"p": np.zeros(3)}, state)
    np.testing.assert_array_equal(p.data, before)


def test_adam_first_step_magnitude():
    p = ad.parameter("p", np.array([0.0]))
    lr = 0.01
    state = ad.AdamState.create({"p": p}, learning_rate=lr)
    ad.adam_step({"p": p}, {"p": np.array([1.0])}, state)
    assert state.step == 1
    assert p.data[0] == pytest.approx(-lr, rel=1e-6)


def test_adam_default_hyperparameters():
    state = ad.AdamState.create({}, learning_rate=1e-4)
    assert state.learning_rate == 1e-4
    assert (state.beta1, state.beta2, state.epsilon) == (0.9, 0.999, 1e-8)


def test_adam_nan_gradient_aborts():
    p = ad.parameter("p", np.array([1.0]))
    state = ad.AdamState.create({"p": p})
    with pytest.raises(NumericsError, match="p"):
        ad.adam_step({"p": p}, {"p": np.array([np.nan])}, state)


def test_adam_converges_on_quadratic():
    p = ad.parameter("p", np.array([5.0]))
    graph = ad.Graph(lambda: ad.sum_all(ad.mul(p, p)), {"p": p})
    state = ad.AdamState.create({"p": p}, learning_rate=0.3)
    for _ in range(200):
        _, grads = ad.forward_backward(graph)
        ad.adam_step({"p": p}, grads, state)
    assert abs(p.data[0]) < 1e-2


# ---------------------------------------------------------------------------
# Checkpoints


def test_checkpoint_roundtrip(tmp_path):
    path = tmp_path / "model.jvc"
    tensors = {
        "a.w": rng(4).standard_normal((3, 2)).astype(np.float32).astype(np.float64),
        "b": np.array(2.5),
        "c.long_name": np.arange(4.0),
    }
    ad.save_checkpoint(path, tensors)
    loaded = ad.load_checkpoint(path)
    assert set(loaded) == set(tensors)
    for k in tensors:
        np.testing.assert_allclose(loaded[k], tensors[k], rtol=1e-6)
        assert loaded[k].dtype == np.float32


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.jvc"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(FormatError, match="magic"):
        ad.load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    path = tmp_path / "model.jvc"
    ad.save_checkpoint(path, {"w": np.ones((4, 4))})
    raw = path.read_bytes()
    path.write_bytes(raw[:-7])
    with pytest.raises(FormatError, match="truncated"):
        ad.load_checkpoint(path)


def test_checkpoint_deterministic_bytes(tmp_path):
    tensors = {"b": np.ones(3), "a": np.zeros((2, 2))}
    p1, p2 = tmp_path / "one.jvc", tmp_path / "two.jvc"
    ad.save_checkpoint(p1, tensors)
    ad.save_checkpoint(p2, dict(reversed(list(tensors.items()))))
    assert p1.read_bytes() == p2.read_bytes()
