import numpy as np
import pytest

from imagine import autodiff as ad
from imagine.errors import DataError, FormatError, QueryError
from imagine.gaussian import DiagGaussian, poe_product
from imagine.model import JvaeModel, ModelConfig, load_model, save_model
from imagine.schema import AttributeSchema, PartialAttributeVector, mnist2bit_schema, mnista_schema


def toy_schema():
    return AttributeSchema((("shade", ("dark", "light")), ("shape", ("bar", "dot", "ring"))))


def toy_config(seed=0, **kw):
    base = dict(
        schema=toy_schema(),
        image_size=2,
        latent_dim=2,
        enc_hidden=(5,),
        dec_hidden=(5,),
        joint_hidden=(5, 4),
        expert_hidden=(4,),
        attr_dec_hidden=(4,),
        label_embed=3,
        lambda_y=2.0,
        gamma=1.5,
        seed=seed,
    )
    base.update(kw)
    return ModelConfig(**base)


def rng(seed=0):
    return np.random.default_rng(seed)


def zero_final_layer(mlp):
    mlp.layers[-1].w.data[:] = 0.0
    mlp.layers[-1].b.data[:] = 0.0


# ---------------------------------------------------------------------------
# init


def test_default_latent_dim_is_ten():
    config = ModelConfig(schema=mnista_schema(), image_size=16)
    assert config.latent_dim == 10
    assert JvaeModel(config).latent_dim == 10


def test_mnist2bit_config_small_latent():
    config = ModelConfig(schema=mnist2bit_schema(), image_size=8, latent_dim=2)
    assert JvaeModel(config).latent_dim == 2


def test_init_deterministic_checkpoint_bytes(tmp_path):
    p1, p2 = tmp_path / "a.jvc", tmp_path / "b.jvc"
    save_model(JvaeModel(toy_config(seed=3)), p1)
    save_model(JvaeModel(toy_config(seed=3)), p2)
    assert p1.read_bytes() == p2.read_bytes()
    save_model(JvaeModel(toy_config(seed=4)), tmp_path / "c.jvc")
    assert p1.read_bytes() != (tmp_path / "c.jvc").read_bytes()


def test_config_validation():
    with pytest.raises(DataError):
        ModelConfig(schema=toy_schema(), image_size=2, mu=1.5)
    with pytest.raises(DataError):
        ModelConfig(schema=toy_schema(), image_size=2, alpha=-0.1)
    with pytest.raises(DataError):
        ModelConfig(schema=toy_schema(), image_size=2, lambda_y=0.0)


# ---------------------------------------------------------------------------
# decoders


def test_log_lik_image_uniform_decoder():
    model = JvaeModel(toy_config())
    zero_final_layer(model.image_dec)
    x = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    z = np.zeros((1, 2))
    assert model.log_lik_image(z, x) == pytest.approx(4 * np.log(0.5), abs=1e-9)


def test_log_lik_image_nonpositive():
    model = JvaeModel(toy_config(seed=5))
    r = rng(1)
    for _ in range(20):
        z = r.standard_normal((1, 2))
        x = r.integers(0, 2, size=(2, 2))
        assert model.log_lik_image(z, x) <= 0.0


def test_log_lik_attrs_cases():
    model = JvaeModel(toy_config(seed=6))
    z = rng(2).standard_normal((1, 2))
    empty = PartialAttributeVector((None, None))
    assert model.log_lik_attrs(z, empty) == 0.0
    zero_final_layer(model.attr_dec[1])
    only_b = PartialAttributeVector((None, 2))
    assert model.log_lik_attrs(z, only_b) == pytest.approx(-np.log(3.0), abs=1e-9)
    full = PartialAttributeVector((1, 2))
    parts = model.log_lik_attrs(z, PartialAttributeVector((1, None))) + model.log_lik_attrs(z, only_b)
    assert model.log_lik_attrs(z, full) == pytest.approx(parts, abs=1e-12)


def test_decoder_gradient_matches_finite_differences():
    model = JvaeModel(toy_config(seed=7))
    x = rng(3).integers(0, 2, size=(3, 4)).astype(np.float64)
    z0 = rng(4).standard_normal((3, 2))
    z_param = ad.parameter("z", z0.copy())
    graph = ad.Graph(lambda: model.log_lik_image_t(z_param, x), {"z": z_param})
    assert ad.grad_check(graph, 1e-6) < 1e-6


# ---------------------------------------------------------------------------
# encoders


def test_encode_joint_requires_full_vector():
    model = JvaeModel(toy_config())
    x = np.zeros((2, 2))
    with pytest.raises(QueryError):
        model.encode_joint(x, PartialAttributeVector((0, None)))
    g = model.encode_joint(x, PartialAttributeVector((0, 1)))
    assert g.dim == 2
    assert np.all(np.abs(g.log_var) <= 20.0)


def test_encode_attrs_empty_query_is_prior():
    model = JvaeModel(toy_config(seed=8))
    g = model.encode_attrs(PartialAttributeVector((None, None)))
    np.testing.assert_array_equal(g.mean, np.zeros(2))
    np.testing.assert_array_equal(g.var, np.ones(2))


def test_encode_attrs_matches_manual_poe():
    model = JvaeModel(toy_config(seed=9))
    full = PartialAttributeVector((1, 2))
    experts = [model.expert_gaussian(0, 1), model.expert_gaussian(1, 2)]
    manual = poe_product(experts, include_prior=True)
    out = model.encode_attrs(full)
    np.testing.assert_allclose(out.mean, manual.mean, atol=1e-12)
    np.testing.assert_allclose(out.var, manual.var, atol=1e-12)


def test_encode_attrs_precision_monotone():
    model = JvaeModel(toy_config(seed=10))
    partial = model.encode_attrs(PartialAttributeVector((0, None)))
    full = model.encode_attrs(PartialAttributeVector((0, 1)))
    assert np.all(1.0 / full.var >= 1.0 / partial.var - 1e-12)
    assert np.all(full.var <= partial.var + 1e-12)


def test_graph_and_numpy_posteriors_agree():
    model = JvaeModel(toy_config(seed=11))
    schema = model.schema
    y_idx = np.array([[1, 2], [0, 0]])
    onehots = [ad.constant(schema.one_hot(k, y_idx[:, k])) for k in range(2)]
    mean_t, lv_t = model.attrs_gaussian_t(onehots)
    for row, values in enumerate(y_idx):
        g = model.encode_attrs(PartialAttributeVector.full(values))
        np.testing.assert_allclose(mean_t.data[row], g.mean, atol=1e-12)
        np.testing.assert_allclose(np.exp(lv_t.data[row]), g.var, atol=1e-12)


def test_unrestricted_attr_encoder_flag():
    model = JvaeModel(toy_config(seed=12, poe=False))
    full = model.encode_attrs(PartialAttributeVector((1, 0)))
    assert full.dim == 2
    with pytest.raises(QueryError, match="product-of-experts"):
        model.encode_attrs(PartialAttributeVector((1, None)))


# ---------------------------------------------------------------------------
# imagine


def test_imagine_shapes_and_codomains():
    model = JvaeModel(toy_config(seed=13))
    for query in (PartialAttributeVector((1, 2)), PartialAttributeVector((None, 1)), PartialAttributeVector((None, None))):
        mean_images = model.imagine(query, 10, rng(1), mode="mean_image")
        assert mean_images.shape == (10, 2, 2)
        assert np.all((mean_images > 0) & (mean_images < 1))
        samples = model.imagine(query, 10, rng(1), mode="sampled_image")
        assert samples.shape == (10, 2, 2)
        assert np.isin(samples, (0, 1)).all()


def test_imagine_reproducible():
    model = JvaeModel(toy_config(seed=14))
    q = PartialAttributeVector((0, None))
    a = model.imagine(q, 5, rng(42))
    b = model.imagine(q, 5, rng(42))
    np.testing.assert_array_equal(a, b)


def test_imagine_validates_mode_and_n():
    model = JvaeModel(toy_config())
    with pytest.raises(DataError):
        model.imagine(PartialAttributeVector((0, 0)), 0, rng(0))
    with pytest.raises(DataError):
        model.imagine(PartialAttributeVector((0, 0)), 1, rng(0), mode="nope")


# ---------------------------------------------------------------------------
# save / load


def test_save_load_roundtrip(tmp_path):
    model = JvaeModel(toy_config(seed=15))
    path = tmp_path / "model.jvc"
    save_model(model, path)
    loaded = load_model(path)
    q = PartialAttributeVector((1, 1))
    a = model.imagine(q, 4, rng(3), mode="mean_image")
    b = loaded.imagine(q, 4, rng(3), mode="mean_image")
    np.testing.assert_allclose(a, b, atol=1e-6)
    # float32 quantization is a fixed point: a second round trip is identical
    save_model(loaded, tmp_path / "again.jvc")
    reloaded = load_model(tmp_path / "again.jvc")
    for name, p in loaded.params.items():
        np.testing.assert_array_equal(p.data, reloaded.params[name].data)


def test_load_truncated_checkpoint(tmp_path):
    model = JvaeModel(toy_config(seed=16))
    path = tmp_path / "model.jvc"
    save_model(model, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(FormatError, match="truncated"):
        load_model(path)


def test_load_missing_manifest(tmp_path):
    model = JvaeModel(toy_config(seed=17))
    path = tmp_path / "model.jvc"
    save_model(model, path)
    (tmp_path / "model.jvc.json").unlink()
    with pytest.raises(FormatError, match="manifest"):
        load_model(path)


def test_load_missing_tensor(tmp_path):
    model = JvaeModel(toy_config(seed=18))
    path = tmp_path / "model.jvc"
    save_model(model, path)
    tensors = ad.load_checkpoint(path)
    name = sorted(tensors)[0]
    del tensors[name]
    ad.save_checkpoint(path, tensors)
    with pytest.raises(FormatError, match="missing tensor"):
        load_model(path)
