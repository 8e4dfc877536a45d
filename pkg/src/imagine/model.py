"""The joint image-attribute VAE.

Holds the image decoder, per-attribute decoders, the joint encoder, the image
encoder, and one Gaussian expert network per attribute. The attribute-side
posterior for a (possibly partial) query is the product of the observed
experts with the N(0, I) universal expert, so missing attributes simply drop
factors and the empty query reduces to the prior.

The model is mutable only through the optimizer; all inference entry points
read parameters without touching them and are safe to call concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DataError, DimensionError, FormatError, QueryError
from .gaussian import LOG_VAR_MAX, LOG_VAR_MIN, DiagGaussian, poe_product
from .schema import AttributeSchema, PartialAttributeVector

BERNOULLI_EPS = 1e-7


@dataclass
class ModelConfig:
    """Architecture sizes plus the likelihood/objective scalings swept in
    experiments. Widths are desk-scale knobs, not claims."""

    schema: AttributeSchema
    image_size: int
    latent_dim: int = 10
    enc_hidden: tuple[int, ...] = (128, 128)
    dec_hidden: tuple[int, ...] = (128, 128)
    joint_hidden: tuple[int, ...] = (128, 128)
    expert_hidden: tuple[int, ...] = (32,)
    attr_dec_hidden: tuple[int, ...] = (128,)
    label_embed: int = 32
    lambda_x: float = 1.0
    lambda_y: float = 50.0
    gamma: float = 50.0
    beta: float = 1.0
    alpha: float = 1.0
    mu: float = 0.7
    attr_decoder_l2: float = 1e-4
    poe: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim <= 0 or self.image_size <= 0:
            raise DataError("latent_dim and image_size must be positive")
        for sizes in (self.enc_hidden, self.dec_hidden, self.joint_hidden, self.expert_hidden, self.attr_dec_hidden):
            if any(s <= 0 for s in sizes):
                raise DataError("hidden sizes must be positive")
        if self.lambda_x <= 0 or self.lambda_y <= 0 or self.gamma <= 0 or self.beta <= 0:
            raise DataError("likelihood scalings must be positive")
        if self.alpha < 0:
            raise DataError("alpha must be nonnegative")
        if not 0.0 <= self.mu <= 1.0:
            raise DataError("mu must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = {
            "schema": self.schema.to_dict(),
            "image_size": self.image_size,
            "latent_dim": self.latent_dim,
            "enc_hidden": list(self.enc_hidden),
            "dec_hidden": list(self.dec_hidden),
            "joint_hidden": list(self.joint_hidden),
            "expert_hidden": list(self.expert_hidden),
            "attr_dec_hidden": list(self.attr_dec_hidden),
            "label_embed": self.label_embed,
            "lambda_x": self.lambda_x,
            "lambda_y": self.lambda_y,
            "gamma": self.gamma,
            "beta": self.beta,
            "alpha": self.alpha,
            "mu": self.mu,
            "attr_decoder_l2": self.attr_decoder_l2,
            "poe": self.poe,
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["schema"] = AttributeSchema.from_dict(d["schema"])
        for key in ("enc_hidden", "dec_hidden", "joint_hidden", "expert_hidden", "attr_dec_hidden"):
            d[key] = tuple(d[key])
        return cls(**d)


def _as_query(query, schema: AttributeSchema) -> PartialAttributeVector:
    if not isinstance(query, PartialAttributeVector):
        query = PartialAttributeVector(tuple(query))
    query.validate(schema)
    return query


class JvaeModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        schema = config.schema
        rng = np.random.default_rng(config.seed)
        d = config.latent_dim
        n_pixels = config.image_size**2
        cards = schema.cardinalities

        self.image_dec = ad.build_mlp([d, *config.dec_hidden, n_pixels], "elu", rng, "dec_image")
        self.attr_dec = [
            ad.build_mlp([d, *config.attr_dec_hidden, c], "elu", rng, f"dec_attr{k}") for k, c in enumerate(cards)
        ]
        self.image_enc = ad.build_mlp([n_pixels, *config.enc_hidden, 2 * d], "elu", rng, "enc_image")
        self.joint_image = ad.build_mlp([n_pixels, config.joint_hidden[0]], "elu", rng, "enc_joint_image")
        self.joint_embed = [
            ad.build_mlp([c, config.label_embed], "none", rng, f"enc_joint_embed{k}") for k, c in enumerate(cards)
        ]
        merge_in = config.joint_hidden[0] + len(cards) * config.label_embed
        self.joint_merge = ad.build_mlp([merge_in, *config.joint_hidden[1:], 2 * d], "elu", rng, "enc_joint_merge")
        self.experts = [
            ad.build_mlp([c, *config.expert_hidden, 2 * d], "elu", rng, f"enc_expert{k}") for k, c in enumerate(cards)
        ]
        self.attr_enc = None
        if not config.poe:
            self.attr_enc = ad.build_mlp([sum(cards), *config.enc_hidden, 2 * d], "elu", rng, "enc_attrs")

    # -- parameter bookkeeping ------------------------------------------------

    @property
    def schema(self) -> AttributeSchema:
        return self.config.schema

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def nets(self) -> list[ad.Mlp]:
        out = [self.image_dec, *self.attr_dec, self.image_enc, self.joint_image, *self.joint_embed, self.joint_merge]
        out.extend(self.experts)
        if self.attr_enc is not None:
            out.append(self.attr_enc)
        return out

    @property
    def params(self) -> dict[str, ad.Tensor]:
        out: dict[str, ad.Tensor] = {}
        for net in self.nets():
            out.update(net.params())
        return out

    def attr_decoder_weights(self) -> list[ad.Tensor]:
        return [w for net in self.attr_dec for w in net.weight_tensors()]

    # -- graph-mode forwards (training) ---------------------------------------

    @staticmethod
    def _split_gaussian(out: ad.Tensor, d: int) -> tuple[ad.Tensor, ad.Tensor]:
        mean = ad.slice_cols(out, 0, d)
        log_var = ad.clip(ad.slice_cols(out, d, 2 * d), LOG_VAR_MIN, LOG_VAR_MAX)
        return mean, log_var

    def joint_gaussian_t(self, x: ad.Tensor, y_onehots: list[ad.Tensor]) -> tuple[ad.Tensor, ad.Tensor]:
        hx = ad.elu(self.joint_image(x))
        embeds = [net(y) for net, y in zip(self.joint_embed, y_onehots)]
        merged = self.joint_merge(ad.concat_cols([hx, *embeds]))
        return self._split_gaussian(merged, self.latent_dim)

    def image_gaussian_t(self, x: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
        return self._split_gaussian(self.image_enc(x), self.latent_dim)

    def attrs_gaussian_t(self, y_onehots: list[ad.Tensor]) -> tuple[ad.Tensor, ad.Tensor]:
        """Attribute-side posterior over a full vector, as used in training:
        the PoE product of all experts with the prior (or the unrestricted
        encoder when the PoE form is disabled)."""
        if self.attr_enc is not None:
            return self._split_gaussian(self.attr_enc(ad.concat_cols(y_onehots)), self.latent_dim)
        precision = None
        weighted = None
        for net, y in zip(self.experts, y_onehots):
            mean_k, lv_k = self._split_gaussian(net(y), self.latent_dim)
            prec_k = ad.exp(ad.neg(lv_k))
            term = ad.mul(prec_k, mean_k)
            precision = prec_k if precision is None else ad.add(precision, prec_k)
            weighted = term if weighted is None else ad.add(weighted, term)
        precision = ad.shift(precision, 1.0)  # universal expert N(0, I)
        var = ad.pow_const(precision, -1.0)
        mean = ad.mul(var, weighted)
        return mean, ad.neg(ad.log(precision))

    def decode_image_t(self, z: ad.Tensor, frozen: bool = False) -> ad.Tensor:
        """Per-pixel Bernoulli means, clamped away from 0 and 1."""
        return ad.clip(ad.sigmoid(self.image_dec(z, frozen=frozen)), BERNOULLI_EPS, 1.0 - BERNOULLI_EPS)

    def log_lik_image_t(self, z: ad.Tensor, x: np.ndarray, frozen: bool = False) -> ad.Tensor:
        """Sum over the batch of per-example Bernoulli log-likelihood."""
        return ad.bernoulli_loglik(self.image_dec(z, frozen=frozen), x, eps=BERNOULLI_EPS)

    def log_lik_attrs_t(self, z: ad.Tensor, y_idx: np.ndarray, frozen: bool = False) -> ad.Tensor:
        """Sum over batch and attributes of categorical log-likelihood."""
        total = None
        for k, net in enumerate(self.attr_dec):
            term = ad.categorical_loglik(net(z, frozen=frozen), y_idx[:, k])
            total = term if total is None else ad.add(total, term)
        return total

    # -- numpy-mode forwards (inference) ---------------------------------------

    def _flat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n_pixels = self.config.image_size**2
        if x.ndim >= 2 and x.shape[-2:] == (self.config.image_size, self.config.image_size):
            x = x.reshape(-1, n_pixels)
        elif x.ndim == 1 and x.size == n_pixels:
            x = x.reshape(1, n_pixels)
        elif x.ndim == 2 and x.shape[1] == n_pixels:
            pass
        else:
            raise DimensionError(f"image shape {x.shape} does not match size {self.config.image_size}")
        return x

    def _split_np(self, out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self.latent_dim
        return out[:, :d], np.clip(out[:, d:], LOG_VAR_MIN, LOG_VAR_MAX)

    def encode_image_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._split_np(self.image_enc.forward_np(self._flat(x)))

    def encode_image(self, x: np.ndarray) -> DiagGaussian:
        mean, lv = self.encode_image_batch(x)
        if mean.shape[0] != 1:
            raise DimensionError("encode_image takes a single image; use encode_image_batch")
        return DiagGaussian(mean[0], lv[0])

    def encode_joint(self, x: np.ndarray, y) -> DiagGaussian:
        y = _as_query(y, self.schema)
        if not y.is_full:
            raise QueryError("the joint encoder requires a fully observed attribute vector")
        x2 = self._flat(x)
        hx = self.joint_image.forward_np(x2)
        hx = np.where(hx > 0, hx, np.expm1(np.minimum(hx, 0.0)))
        embeds = [
            net.forward_np(self.schema.one_hot(k, np.array([y.values[k]])))
            for k, net in enumerate(self.joint_embed)
        ]
        merged = self.joint_merge.forward_np(np.concatenate([hx, *embeds], axis=1))
        mean, lv = self._split_np(merged)
        return DiagGaussian(mean[0], lv[0])

    def expert_gaussian(self, k: int, value: int) -> DiagGaussian:
        onehot = self.schema.one_hot(k, np.array([value]))
        mean, lv = self._split_np(self.experts[k].forward_np(onehot))
        return DiagGaussian(mean[0], lv[0])

    def encode_attrs(self, query) -> DiagGaussian:
        """Posterior for a possibly partial query: product of the observed
        attribute experts with the universal prior expert."""
        query = _as_query(query, self.schema)
        if self.attr_enc is not None:
            if not query.is_full:
                raise QueryError("abstract queries need the product-of-experts posterior; this model disables it")
            onehots = [self.schema.one_hot(k, np.array([v])) for k, v in enumerate(query.values)]
            mean, lv = self._split_np(self.attr_enc.forward_np(np.concatenate(onehots, axis=1)))
            return DiagGaussian(mean[0], lv[0])
        experts = [self.expert_gaussian(k, query.values[k]) for k in query.observed]
        return poe_product(experts, include_prior=True, dim=self.latent_dim)

    def decode_image_np(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        logits = self.image_dec.forward_np(z)
        p = np.where(logits >= 0, 1.0 / (1.0 + np.exp(-np.abs(logits))), np.exp(-np.abs(logits)) / (1.0 + np.exp(-np.abs(logits))))
        return p

    def log_lik_image(self, z: np.ndarray, x: np.ndarray) -> float:
        p = np.clip(self.decode_image_np(z), BERNOULLI_EPS, 1.0 - BERNOULLI_EPS)
        xf = self._flat(x)
        return float((xf * np.log(p) + (1.0 - xf) * np.log(1.0 - p)).sum())

    def decode_attrs_np(self, z: np.ndarray) -> list[np.ndarray]:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        out = []
        for net in self.attr_dec:
            logits = net.forward_np(z)
            logits = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(logits)
            out.append(e / e.sum(axis=1, keepdims=True))
        return out

    def log_lik_attrs(self, z: np.ndarray, query) -> float:
        query = _as_query(query, self.schema)
        probs = self.decode_attrs_np(z)
        total = 0.0
        for k in query.observed:
            total += float(np.log(np.maximum(probs[k][:, query.values[k]], 1e-300)).sum())
        return total

    # -- imagination -----------------------------------------------------------

    def imagine(self, query, n: int, rng: np.random.Generator, mode: str = "sampled_image") -> np.ndarray:
        """Ground a (possibly partial) query as n images: z ~ q(z|query), then
        either the per-pixel Bernoulli means or binary samples from them."""
        if n < 1:
            raise DataError(f"need n >= 1 samples, got {n}")
        if mode not in ("mean_image", "sampled_image"):
            raise DataError(f"unknown imagine mode {mode!r}")
        g = self.encode_attrs(query)
        z = g.sample(rng, n)
        probs = self.decode_image_np(z)
        size = self.config.image_size
        images = probs.reshape(n, size, size)
        if mode == "mean_image":
            return images
        return (rng.random(images.shape) < images).astype(np.uint8)


def init_model(config: ModelConfig) -> JvaeModel:
    return JvaeModel(config)


def save_model(model: JvaeModel, path) -> None:
    """JVC1 checkpoint plus a JSON manifest (at <path>.json) holding the
    architecture config needed to rebuild the model."""
    path = str(path)
    ad.save_checkpoint(path, {name: t.data for name, t in model.params.items()})
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump({"format": "JVC1", "kind": "jvae", "config": model.config.to_dict()}, f, sort_keys=True, indent=1)
        f.write("\n")


def load_model(path) -> JvaeModel:
    path = str(path)
    try:
        with open(path + ".json", "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing model manifest {path}.json")
    if manifest.get("format") != "JVC1":
        raise FormatError(f"unsupported model manifest format {manifest.get('format')!r}")
    config = ModelConfig.from_dict(manifest["config"])
    model = JvaeModel(config)
    tensors = ad.load_checkpoint(path)
    for name, p in model.params.items():
        if name not in tensors:
            raise FormatError(f"checkpoint is missing tensor {name!r}")
        if tuple(tensors[name].shape) != p.data.shape:
            raise FormatError(f"tensor {name!r} has shape {tensors[name].shape}, expected {p.data.shape}")
        p.data = tensors[name].astype(np.float64)
    return model


def prepare_batch(dataset, indices: np.ndarray) -> dict:
    """Flatten images and one-hot attribute values for a set of examples."""
    x = dataset.images[indices].reshape(len(indices), -1).astype(np.float64)
    y_idx = dataset.attrs[indices].astype(np.int64)
    y_onehots = [dataset.schema.one_hot(k, y_idx[:, k]) for k in range(dataset.schema.n_attributes)]
    return {"x": x, "y_idx": y_idx, "y_onehots": y_onehots}
