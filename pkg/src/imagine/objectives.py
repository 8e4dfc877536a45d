"""Training objectives and the training loop.

Three ways to train the joint model from paired data:

- telbo: joint ELBO plus the two unimodal ELBOs, optimized jointly; the
  decoders are frozen (stop-gradient) inside the unimodal terms so the
  unimodal encoders map into the latent space the paired data defined.
- jmvae: joint ELBO minus alpha-weighted KLs pulling each unimodal posterior
  toward the joint posterior.
- bivcca: a mu-weighted pair of cross-reconstruction ELBOs under q(z|x) and
  q(z|y).

All objectives are maximized; graphs returned here are the objective itself
and the train loop minimizes its negation. Losses are summed over the batch
(per-example mean times batch size).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DataError, NumericsError
from .gaussian import DiagGaussian, GaussianMixture
from .model import JvaeModel, prepare_batch
from .schema import PartialAttributeVector

OBJECTIVE_KINDS = ("telbo", "jmvae", "bivcca")

LAMBDA_Y_GRID = (1.0, 50.0, 100.0)
GAMMA_GRID = (1.0, 50.0, 100.0)
ALPHA_GRID = (0.01, 0.1, 1.0)
MU_GRID = (0.3, 0.5, 0.7)


@dataclass
class ObjectiveConfig:
    kind: str
    lambda_x: float = 1.0
    lambda_y: float = 50.0
    gamma: float = 50.0
    alpha: float = 1.0
    mu: float = 0.7
    beta: float = 1.0
    mc_samples: int = 1
    freeze_likelihood: bool = True  # telbo only

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise DataError(f"unknown objective kind {self.kind!r}; choices: {', '.join(OBJECTIVE_KINDS)}")
        if self.mc_samples < 1:
            raise DataError("mc_samples must be >= 1")

    @classmethod
    def from_model(cls, model: JvaeModel, kind: str, **overrides) -> "ObjectiveConfig":
        cfg = model.config
        base = dict(kind=kind, lambda_x=cfg.lambda_x, lambda_y=cfg.lambda_y, gamma=cfg.gamma, alpha=cfg.alpha, mu=cfg.mu, beta=cfg.beta)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# Graph-mode Gaussian helpers


def reparam_t(mean: ad.Tensor, log_var: ad.Tensor, eps: np.ndarray) -> ad.Tensor:
    return ad.gaussian_reparam(mean, log_var, eps)


def kl_to_prior_t(mean: ad.Tensor, log_var: ad.Tensor) -> ad.Tensor:
    """Sum over batch and dims of KL(N(mean, exp(log_var)) || N(0, I))."""
    return ad.kl_std_normal(mean, log_var)


def kl_diag_t(mean_a: ad.Tensor, lv_a: ad.Tensor, mean_b: ad.Tensor, lv_b: ad.Tensor) -> ad.Tensor:
    """Sum over batch and dims of KL(a || b) for diagonal Gaussians."""
    return ad.kl_gaussians(mean_a, lv_a, mean_b, lv_b)


def draw_eps(kind: str, n: int, d: int, rng: np.random.Generator, mc_samples: int = 1) -> dict[str, list[np.ndarray]]:
    keys = {"telbo": ("joint", "image", "attrs"), "jmvae": ("joint",), "bivcca": ("image", "attrs")}[kind]
    return {k: [rng.standard_normal((n, d)) for _ in range(mc_samples)] for k in keys}


def _mc_average(terms: list[ad.Tensor]) -> ad.Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms))


# ---------------------------------------------------------------------------
# ELBO building blocks


def elbo_uni(
    model: JvaeModel,
    batch: dict,
    modality: str,
    lam: float,
    beta: float,
    eps: list[np.ndarray],
    freeze_decoder: bool = False,
) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """Unimodal ELBO (batch sum): E_q[lam log p(.|z)] - beta KL(q, prior)."""
    if modality == "image":
        mean, lv = model.image_gaussian_t(ad.constant(batch["x"]))
        lls = [model.log_lik_image_t(reparam_t(mean, lv, e), batch["x"], frozen=freeze_decoder) for e in eps]
    elif modality == "attrs":
        y_onehots = [ad.constant(y) for y in batch["y_onehots"]]
        mean, lv = model.attrs_gaussian_t(y_onehots)
        lls = [model.log_lik_attrs_t(reparam_t(mean, lv, e), batch["y_idx"], frozen=freeze_decoder) for e in eps]
    else:
        raise DataError(f"unknown modality {modality!r}")
    ll = _mc_average(lls)
    kl = kl_to_prior_t(mean, lv)
    total = ad.sub(ad.scale(ll, lam), ad.scale(kl, beta))
    return total, {f"ll_{modality}": ll, f"kl_{modality}": kl}


def elbo_joint(
    model: JvaeModel,
    batch: dict,
    lambda_x: float,
    lambda_y: float,
    beta: float,
    eps: list[np.ndarray],
) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """Joint ELBO (batch sum) under q(z|x,y)."""
    y_onehots = [ad.constant(y) for y in batch["y_onehots"]]
    mean, lv = model.joint_gaussian_t(ad.constant(batch["x"]), y_onehots)
    ll_x_terms, ll_y_terms = [], []
    for e in eps:
        z = reparam_t(mean, lv, e)
        ll_x_terms.append(model.log_lik_image_t(z, batch["x"]))
        ll_y_terms.append(model.log_lik_attrs_t(z, batch["y_idx"]))
    ll_x = _mc_average(ll_x_terms)
    ll_y = _mc_average(ll_y_terms)
    kl = kl_to_prior_t(mean, lv)
    total = ad.sub(ad.add(ad.scale(ll_x, lambda_x), ad.scale(ll_y, lambda_y)), ad.scale(kl, beta))
    parts = {"joint_ll_x": ll_x, "joint_ll_y": ll_y, "joint_kl": kl, "joint_mean": mean, "joint_lv": lv}
    return total, parts


# ---------------------------------------------------------------------------
# The three objectives


def telbo(model: JvaeModel, batch: dict, cfg: ObjectiveConfig, eps: dict) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """Joint + image-only + attribute-only ELBOs, optimized jointly; with
    freeze_likelihood the decoders receive zero gradient from the two
    unimodal terms."""
    joint, parts = elbo_joint(model, batch, cfg.lambda_x, cfg.lambda_y, cfg.beta, eps["joint"])
    img, img_parts = elbo_uni(model, batch, "image", 1.0, 1.0, eps["image"], freeze_decoder=cfg.freeze_likelihood)
    att, att_parts = elbo_uni(model, batch, "attrs", cfg.gamma, 1.0, eps["attrs"], freeze_decoder=cfg.freeze_likelihood)
    total = ad.add(ad.add(joint, img), att)
    out = {"elbo_joint": joint, "elbo_image": img, "elbo_attrs": att}
    out.update({k: v for k, v in {**img_parts, **att_parts}.items()})
    out.update({k: v for k, v in parts.items() if not k.startswith("joint_mean") and not k.startswith("joint_lv")})
    return total, out


def jmvae(model: JvaeModel, batch: dict, cfg: ObjectiveConfig, eps: dict) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """Joint ELBO minus alpha * [KL(q(z|x,y), q(z|y)) + KL(q(z|x,y), q(z|x))]."""
    joint, parts = elbo_joint(model, batch, cfg.lambda_x, cfg.lambda_y, cfg.beta, eps["joint"])
    j_mean, j_lv = parts["joint_mean"], parts["joint_lv"]
    x_mean, x_lv = model.image_gaussian_t(ad.constant(batch["x"]))
    y_onehots = [ad.constant(y) for y in batch["y_onehots"]]
    y_mean, y_lv = model.attrs_gaussian_t(y_onehots)
    kl_y = kl_diag_t(j_mean, j_lv, y_mean, y_lv)
    kl_x = kl_diag_t(j_mean, j_lv, x_mean, x_lv)
    total = ad.sub(joint, ad.scale(ad.add(kl_y, kl_x), cfg.alpha))
    out = {"elbo_joint": joint, "kl_joint_attrs": kl_y, "kl_joint_image": kl_x}
    out.update({k: v for k, v in parts.items() if k not in ("joint_mean", "joint_lv")})
    return total, out


def bivcca(model: JvaeModel, batch: dict, cfg: ObjectiveConfig, eps: dict) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """mu-weighted cross-reconstruction ELBOs under q(z|x) and q(z|y); the
    attribute likelihood is scaled by lambda_y in both brackets."""
    x_mean, x_lv = model.image_gaussian_t(ad.constant(batch["x"]))
    y_onehots = [ad.constant(y) for y in batch["y_onehots"]]
    y_mean, y_lv = model.attrs_gaussian_t(y_onehots)

    def bracket(mean, lv, eps_list):
        terms = []
        for e in eps_list:
            z = reparam_t(mean, lv, e)
            ll = ad.add(
                ad.scale(model.log_lik_image_t(z, batch["x"]), cfg.lambda_x),
                ad.scale(model.log_lik_attrs_t(z, batch["y_idx"]), cfg.lambda_y),
            )
            terms.append(ll)
        return ad.sub(_mc_average(terms), kl_to_prior_t(mean, lv)), kl_to_prior_t(mean, lv)

    bx, kl_x = bracket(x_mean, x_lv, eps["image"])
    by, kl_y = bracket(y_mean, y_lv, eps["attrs"])
    total = ad.add(ad.scale(bx, cfg.mu), ad.scale(by, 1.0 - cfg.mu))
    return total, {"bracket_image": bx, "bracket_attrs": by, "kl_image": kl_x, "kl_attrs": kl_y}


def objective(model: JvaeModel, batch: dict, cfg: ObjectiveConfig, eps: dict) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    fn = {"telbo": telbo, "jmvae": jmvae, "bivcca": bivcca}[cfg.kind]
    return fn(model, batch, cfg, eps)


def objective_graph(model: JvaeModel, batch: dict, cfg: ObjectiveConfig, eps: dict, weight_decay: bool = False):
    """A Graph computing the negated objective (a loss to minimize), plus a
    cell that holds the term breakdown after each build."""
    parts_cell: dict[str, float] = {}

    def build():
        total, parts = objective(model, batch, cfg, eps)
        loss = ad.neg(total)
        if weight_decay and model.config.attr_decoder_l2 > 0.0:
            penalty = None
            for w in model.attr_decoder_weights():
                term = ad.sum_all(ad.mul(w, w))
                penalty = term if penalty is None else ad.add(penalty, term)
            loss = ad.add(loss, ad.scale(penalty, model.config.attr_decoder_l2))
        parts_cell.clear()
        parts_cell["objective"] = float(total.data)
        for k, v in parts.items():
            parts_cell[k] = float(v.data.sum())
        return loss

    return ad.Graph(build, model.params), parts_cell


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainLog:
    objective: str
    seed: int
    steps: int
    batch_size: int
    learning_rate: float
    records: list[dict] = field(default_factory=list)
    wall_time_s: float = 0.0
    final_step: int = 0

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            meta = {k: getattr(self, k) for k in ("objective", "seed", "steps", "batch_size", "learning_rate", "wall_time_s", "final_step")}
            f.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
            for rec in self.records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def train(
    model: JvaeModel,
    dataset,
    cfg: ObjectiveConfig,
    steps: int,
    rng: np.random.Generator,
    batch_size: int = 64,
    learning_rate: float = 1e-4,
    log_every: int = 100,
    snapshot_every: int = 500,
    seed: int | None = None,
) -> TrainLog:
    """Adam on shuffled minibatches of the train split; deterministic given
    the generator state. A non-finite loss aborts after restoring the last
    snapshot of the parameters."""
    train_idx = dataset.indices("train")
    if train_idx.size == 0:
        raise DataError("dataset has no train split")
    params = model.params
    state = ad.AdamState.create(params, learning_rate=learning_rate)
    log = TrainLog(cfg.kind, -1 if seed is None else seed, steps, batch_size, learning_rate)
    started = time.perf_counter()
    snapshot = {k: p.data.copy() for k, p in params.items()}
    snapshot_step = 0

    order = rng.permutation(train_idx)
    cursor = 0
    d = model.latent_dim
    for step in range(1, steps + 1):
        if train_idx.size >= batch_size:
            if cursor + batch_size > order.size:
                order = rng.permutation(train_idx)
                cursor = 0
            idx = order[cursor : cursor + batch_size]
            cursor += batch_size
        else:
            idx = train_idx[rng.integers(0, train_idx.size, size=batch_size)]
        batch = prepare_batch(dataset, idx)
        eps = draw_eps(cfg.kind, len(idx), d, rng, cfg.mc_samples)
        graph, parts = objective_graph(model, batch, cfg, eps, weight_decay=True)
        try:
            _, grads = ad.forward_backward(graph)
            ad.adam_step(params, grads, state)
        except NumericsError as err:
            for k, p in params.items():
                p.data = snapshot[k]
            raise NumericsError(f"{err} at step {step}; parameters restored to step {snapshot_step}") from err
        if step % snapshot_every == 0:
            snapshot = {k: p.data.copy() for k, p in params.items()}
            snapshot_step = step
        if step == 1 or step % log_every == 0 or step == steps:
            rec = {"step": step, "total": parts["objective"] / len(idx)}
            rec["terms"] = {k: v / len(idx) for k, v in parts.items() if k != "objective"}
            log.records.append(rec)
        log.final_step = step
    log.wall_time_s = time.perf_counter() - started
    return log


# ---------------------------------------------------------------------------
# KL-decomposition verifier: the batch-averaged KL(q(z|x,y), q(z|y)), grouped
# by unique attribute vector, equals the KL from the per-concept posterior
# mixture to q(z|y), plus log N_i, minus the expected index-posterior entropy
# under that mixture.


def verify_jmvae_decomposition(
    model: JvaeModel,
    dataset,
    mc_samples: int,
    rng: np.random.Generator,
    max_group: int = 5,
) -> tuple[float, float, float, float]:
    """Returns (lhs, rhs, |lhs - rhs|, stderr of the Monte Carlo rhs)."""
    from .gaussian import kl_diag

    ids = dataset.concept_ids()
    groups: dict[int, list[int]] = {}
    for i, cid in enumerate(ids):
        groups.setdefault(int(cid), []).append(i)
    lhs_terms, rhs_terms, variances = [], [], []
    for cid, members in sorted(groups.items()):
        members = members[:max_group]
        y = PartialAttributeVector.full(dataset.attrs[members[0]])
        q_y = model.encode_attrs(y)
        posteriors = [model.encode_joint(dataset.images[i], y) for i in members]
        lhs_i = float(np.mean([kl_diag(q, q_y) for q in posteriors]))
        lhs_terms.append(lhs_i)
        n_i = len(members)
        if n_i == 1:
            rhs_terms.append(kl_diag(posteriors[0], q_y))
            variances.append(0.0)
            continue
        mix = GaussianMixture.equal_weight(posteriors)
        z = mix.sample(rng, mc_samples)
        resp = mix.responsibilities(z)
        entropy = -np.sum(np.where(resp > 0, resp * np.log(resp), 0.0), axis=1)
        integrand = mix.log_pdf(z) - q_y.log_pdf(z) - entropy
        rhs_terms.append(float(integrand.mean()) + float(np.log(n_i)))
        variances.append(float(integrand.var(ddof=1) / mc_samples))
    lhs = float(np.mean(lhs_terms))
    rhs = float(np.mean(rhs_terms))
    stderr = float(np.sqrt(np.sum(variances)) / len(rhs_terms))
    return lhs, rhs, abs(lhs - rhs), stderr
