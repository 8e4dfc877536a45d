"""The observation classifier and the generation metrics.

A fixed multi-head attribute classifier stands in for a human judge of
generated images. On top of it: correctness (observed attributes matched),
coverage (diversity over unobserved attributes, via base-2 Jensen-Shannon
divergence against training marginals), the combined JS-overall selection
score, and the inception score for contrast.

The classifier and all metrics are read-only after training; evaluation can
fan out per-query work across threads with per-query generators.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import Dataset, train_marginals
from .errors import DataError, DimensionError, NumericsError
from .model import JvaeModel, prepare_batch
from .schema import AttributeSchema, PartialAttributeVector


# ---------------------------------------------------------------------------
# Observation classifier


@dataclass
class ClassifierConfig:
    trunk_hidden: tuple[int, ...] = (256, 256)
    head_hidden: int = 128
    dropout: float = 0.5
    steps: int = 4000
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0


class ObservationClassifier:
    """Shared MLP trunk with one softmax head per attribute."""

    def __init__(self, schema: AttributeSchema, image_size: int, config: ClassifierConfig):
        self.schema = schema
        self.image_size = image_size
        self.config = config
        rng = np.random.default_rng(config.seed)
        n_pixels = image_size**2
        self.trunk = ad.build_mlp([n_pixels, *config.trunk_hidden], "elu", rng, "cls_trunk")
        self.head_h = [
            ad.build_mlp([config.trunk_hidden[-1], config.head_hidden], "elu", rng, f"cls_head{k}_h")
            for k in range(schema.n_attributes)
        ]
        self.head_out = [
            ad.build_mlp([config.head_hidden, c], "elu", rng, f"cls_head{k}_out")
            for k, c in enumerate(schema.cardinalities)
        ]
        self.accuracies: dict[str, float] = {}

    @property
    def params(self) -> dict[str, ad.Tensor]:
        out = dict(self.trunk.params())
        for net in (*self.head_h, *self.head_out):
            out.update(net.params())
        return out

    def _flat(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-2:] != (self.image_size, self.image_size):
            raise DimensionError(f"image shape {x.shape[-2:]} != {(self.image_size, self.image_size)}")
        return x.reshape(x.shape[0], -1)

    def logits_t(self, x: ad.Tensor, dropout_masks: list[np.ndarray] | None = None) -> list[ad.Tensor]:
        h = ad.elu(self.trunk(x))
        out = []
        for k in range(self.schema.n_attributes):
            hk = ad.elu(self.head_h[k](h))
            if dropout_masks is not None:
                hk = ad.mul(hk, ad.constant(dropout_masks[k]))
            out.append(self.head_out[k](hk))
        return out

    def logits_np(self, images: np.ndarray) -> list[np.ndarray]:
        x = self._flat(images)
        h = self.trunk.forward_np(x)
        h = np.where(h > 0, h, np.expm1(np.minimum(h, 0.0)))
        out = []
        for k in range(self.schema.n_attributes):
            hk = self.head_h[k].forward_np(h)
            hk = np.where(hk > 0, hk, np.expm1(np.minimum(hk, 0.0)))
            out.append(self.head_out[k].forward_np(hk))
        return out

    def head_probs(self, images: np.ndarray) -> list[np.ndarray]:
        probs = []
        for logits in self.logits_np(images):
            logits = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(logits)
            probs.append(e / e.sum(axis=1, keepdims=True))
        return probs

    def classify_batch(self, images: np.ndarray) -> np.ndarray:
        """(B, H, W) images -> (B, K) predicted attribute vector (argmax per
        head; np.argmax breaks ties toward the lowest index)."""
        return np.stack([logits.argmax(axis=1) for logits in self.logits_np(images)], axis=1)

    def classify(self, image: np.ndarray) -> tuple[int, ...]:
        return tuple(int(v) for v in self.classify_batch(image)[0])


def train_classifier(dataset: Dataset, config: ClassifierConfig | None = None, rng: np.random.Generator | None = None) -> ObservationClassifier:
    """Cross-entropy training of all heads on the train split; records
    held-out per-attribute accuracy (val split, falling back to test)."""
    config = config or ClassifierConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    clf = ObservationClassifier(dataset.schema, dataset.image_size, config)
    train_idx = dataset.indices("train")
    if train_idx.size == 0:
        raise DataError("dataset has no train split")
    params = clf.params
    state = ad.AdamState.create(params, learning_rate=config.learning_rate)
    order = rng.permutation(train_idx)
    cursor = 0
    keep = 1.0 - config.dropout
    for step in range(1, config.steps + 1):
        if cursor + config.batch_size > order.size:
            order = rng.permutation(train_idx)
            cursor = 0
        idx = order[cursor : cursor + config.batch_size]
        cursor += config.batch_size
        batch = prepare_batch(dataset, idx)
        masks = [
            (rng.random((len(idx), config.head_hidden)) < keep) / keep
            for _ in range(dataset.schema.n_attributes)
        ]

        def build():
            logits = clf.logits_t(ad.constant(batch["x"]), dropout_masks=masks)
            loss = None
            for k, lg in enumerate(logits):
                nll = ad.neg(ad.sum_all(ad.gather_cols(ad.log_softmax(lg), batch["y_idx"][:, k])))
                loss = nll if loss is None else ad.add(loss, nll)
            return loss

        graph = ad.Graph(build, params)
        loss, grads = ad.forward_backward(graph)
        if not np.isfinite(loss):
            raise NumericsError(f"classifier loss diverged at step {step}")
        ad.adam_step(params, grads, state)

    heldout = dataset.indices("val")
    if heldout.size == 0:
        heldout = dataset.indices("test")
    if heldout.size == 0:
        heldout = train_idx
    preds = clf.classify_batch(dataset.images[heldout])
    truth = dataset.attrs[heldout]
    for k, name in enumerate(dataset.schema.names):
        clf.accuracies[name] = float((preds[:, k] == truth[:, k]).mean())
    return clf


def save_classifier(clf: ObservationClassifier, path) -> None:
    import json

    path = str(path)
    ad.save_checkpoint(path, {name: t.data for name, t in clf.params.items()})
    manifest = {
        "format": "JVC1",
        "kind": "classifier",
        "schema": clf.schema.to_dict(),
        "image_size": clf.image_size,
        "config": {
            "trunk_hidden": list(clf.config.trunk_hidden),
            "head_hidden": clf.config.head_hidden,
            "dropout": clf.config.dropout,
            "steps": clf.config.steps,
            "batch_size": clf.config.batch_size,
            "learning_rate": clf.config.learning_rate,
            "seed": clf.config.seed,
        },
        "accuracies": clf.accuracies,
    }
    with open(path + ".json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")


def load_classifier(path) -> ObservationClassifier:
    import json

    from .errors import FormatError

    path = str(path)
    try:
        with open(path + ".json", "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise FormatError(f"missing classifier manifest {path}.json")
    if manifest.get("kind") != "classifier":
        raise FormatError(f"manifest at {path}.json is not a classifier manifest")
    cfg_d = dict(manifest["config"])
    cfg_d["trunk_hidden"] = tuple(cfg_d["trunk_hidden"])
    config = ClassifierConfig(**cfg_d)
    clf = ObservationClassifier(AttributeSchema.from_dict(manifest["schema"]), manifest["image_size"], config)
    tensors = ad.load_checkpoint(path)
    for name, p in clf.params.items():
        if name not in tensors:
            raise FormatError(f"classifier checkpoint is missing tensor {name!r}")
        p.data = tensors[name].astype(np.float64)
    clf.accuracies = {k: float(v) for k, v in manifest.get("accuracies", {}).items()}
    return clf


# ---------------------------------------------------------------------------
# Metrics


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence between categorical distributions;
    symmetric and bounded in [0, 1]. Zeros follow the 0 log 0 = 0 convention;
    the mixture midpoint keeps every term finite."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError(f"JS shapes {p.shape} vs {q.shape}")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise DataError("JS inputs must be normalized distributions")
    if np.any(p < 0) or np.any(q < 0):
        raise DataError("JS inputs must be nonnegative")
    m = 0.5 * (p + q)

    def kl2(a, b):
        mask = a > 0
        return float((a[mask] * np.log2(a[mask] / b[mask])).sum())

    return 0.5 * kl2(p, m) + 0.5 * kl2(q, m)


def correctness(samples: np.ndarray, query: PartialAttributeVector, classifier: ObservationClassifier) -> float:
    """Fraction of observed attributes the classifier recovers, averaged over
    the sample set."""
    observed = query.observed
    if not observed:
        raise DataError("correctness is undefined for an empty observed set")
    preds = classifier.classify_batch(samples)
    hits = [(preds[:, k] == query.values[k]).mean() for k in observed]
    return float(np.mean(hits))


def _empirical_head_distribution(preds: np.ndarray, k: int, cardinality: int) -> np.ndarray:
    counts = np.bincount(preds[:, k], minlength=cardinality).astype(np.float64)
    return counts / counts.sum()


def coverage(
    samples: np.ndarray,
    query: PartialAttributeVector,
    classifier: ObservationClassifier,
    marginals: list[np.ndarray],
) -> float:
    """Mean over missing attributes of 1 - JS(training marginal, empirical
    prediction distribution). Undefined (raises) for concrete queries."""
    missing = query.missing
    if not missing:
        raise DataError("coverage is undefined when every attribute is observed")
    preds = classifier.classify_batch(samples)
    scores = []
    for k in missing:
        q_k = _empirical_head_distribution(preds, k, classifier.schema.cardinalities[k])
        scores.append(1.0 - js_divergence(marginals[k], q_k))
    return float(np.mean(scores))


def js_overall(
    samples: np.ndarray,
    query: PartialAttributeVector,
    classifier: ObservationClassifier,
    marginals: list[np.ndarray],
) -> float:
    """Mean over all attributes of 1 - JS(target, empirical): the target is a
    point mass at the queried value for observed attributes and the training
    marginal for missing ones. Used to pick hyperparameters."""
    preds = classifier.classify_batch(samples)
    scores = []
    for k, card in enumerate(classifier.schema.cardinalities):
        q_k = _empirical_head_distribution(preds, k, card)
        if query.values[k] is not None:
            p_k = np.zeros(card)
            p_k[query.values[k]] = 1.0
        else:
            p_k = marginals[k]
        scores.append(1.0 - js_divergence(p_k, q_k))
    return float(np.mean(scores))


def inception_score(samples: np.ndarray, classifier: ObservationClassifier, attribute_index: int) -> float:
    """exp(E_x[KL(p(y|x) || p(y))]) for one attribute head, with the marginal
    p(y) estimated from the sample set. Always >= 1."""
    if samples.shape[0] < 2:
        raise DataError("inception score needs at least 2 samples")
    probs = classifier.head_probs(samples)[attribute_index]
    marginal = probs.mean(axis=0)
    mask = probs > 0
    kl = np.where(mask, probs * (np.log(np.where(mask, probs, 1.0)) - np.log(marginal)), 0.0).sum(axis=1)
    return float(np.exp(kl.mean()))


# ---------------------------------------------------------------------------
# Scenario evaluation


@dataclass
class EvalReport:
    scenario: str
    n_queries: int
    samples_per_query: int
    splits: int
    metrics: dict[str, tuple[float, float]] = field(default_factory=dict)  # name -> (mean, std)
    per_query: list[dict] | None = None
    wall_time_s: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"scenario: {self.scenario}",
            f"queries: {self.n_queries}  samples/query: {self.samples_per_query}  splits: {self.splits}",
        ]
        for name, (mean, std) in sorted(self.metrics.items()):
            lines.append(f"{name}: {mean:.4f} +/- {std:.4f}")
        lines.append(f"wall_time_s: {self.wall_time_s:.1f}")
        return "\n".join(lines) + "\n"


def concrete_queries(schema: AttributeSchema) -> list[PartialAttributeVector]:
    return [PartialAttributeVector.full(c) for c in schema.all_concepts()]


def evaluate(
    model: JvaeModel,
    classifier: ObservationClassifier,
    queries: list[PartialAttributeVector],
    dataset: Dataset,
    scenario: str,
    rng: np.random.Generator,
    samples_per_query: int = 10,
    splits: int = 5,
    collect_details: bool = False,
) -> EvalReport:
    """Imagine each query (binary samples; the classifier never sees mean
    images), score it, and aggregate mean +/- std across query-set splits.

    Concrete scenarios (iid-concrete, comp) report correctness only; abstract
    scenarios add coverage. JS-overall is always reported.
    """
    if model.schema != classifier.schema:
        raise DataError("model and classifier schemas differ")
    marginals = train_marginals(dataset)
    started = time.perf_counter()
    rows = []
    for qi, query in enumerate(queries):
        q_rng = np.random.default_rng(rng.integers(0, 2**63))
        samples = model.imagine(query, samples_per_query, q_rng, mode="sampled_image")
        row = {"query": query, "js_overall": js_overall(samples, query, classifier, marginals)}
        if query.observed:
            row["correctness"] = correctness(samples, query, classifier)
        if query.missing and scenario.startswith("abstract"):
            row["coverage"] = coverage(samples, query, classifier, marginals)
        rows.append(row)
    report = EvalReport(scenario, len(queries), samples_per_query, splits)
    names = sorted({k for row in rows for k in row if k != "query"})
    for name in names:
        values = np.array([row[name] for row in rows if name in row])
        fold_means = [values[f::splits].mean() for f in range(splits) if values[f::splits].size]
        report.metrics[name] = (float(np.mean(fold_means)), float(np.std(fold_means)))
    if collect_details:
        report.per_query = [dict(row, query=row["query"].values) for row in rows]
    report.wall_time_s = time.perf_counter() - started
    return report
