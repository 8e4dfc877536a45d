"""Command-line entry points tying the library into reproducible experiments.

Commands: gen-data, train, classifier-train, eval, sample, interpolate, name,
gradcheck, latent-map, sweep. Every command that takes --seed is
bit-reproducible; IMAGINE_SEED is the fallback when --seed is omitted. Each
run writes its fully resolved configuration into the output directory.

Exit codes: 0 success, 2 usage or malformed input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as dt
from . import eval3c, gridio, naming, objectives
from .errors import DataError, FormatError, NumericsError, QueryError
from .gaussian import slerp
from .model import JvaeModel, ModelConfig, load_model, save_model
from .schema import AttributeSchema, PartialAttributeVector, format_query, mnista_schema, parse_query

USAGE_EXIT = 2
NUMERIC_EXIT = 3


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("IMAGINE_SEED")
    return int(env) if env else 0


def _record_run(out_dir: Path, command: str, args, seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    resolved["seed"] = seed
    resolved["command"] = command
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as f:
        json.dump(resolved, f, sort_keys=True, indent=1, default=str)
        f.write("\n")


def _load_dataset(path: str) -> dt.Dataset:
    return dt.read_dataset(path)


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    _record_run(out_dir, "gen-data", args, seed)
    rng = np.random.default_rng(seed)
    if args.kind == "mnista":
        config = dt.GenConfig(
            source=args.source,
            image_size=args.image_size,
            per_concept=args.per_concept if args.per_source is None else None,
            per_source=args.per_source,
            seed=seed,
            idx_images=args.idx_images,
            idx_labels=args.idx_labels,
            glyph_size=args.glyph_size,
        )
        d = dt.generate_mnista(config)
    else:
        if args.source == "idx":
            images, labels = dt.load_idx(args.idx_images, args.idx_labels)
        else:
            glyph_size = args.glyph_size or max(8, args.image_size)
            images = np.stack(dt.procedural_glyphs(glyph_size))
            labels = np.arange(10)
        d = dt.make_mnist2bit(images, labels, rng, copies=args.copies)
    if args.split == "iid":
        d = dt.make_iid_split(d, rng)
    elif args.split == "comp":
        d = dt.make_comp_split(d, rng)
    path = out_dir / "data.mna"
    dt.write_dataset(d, path)
    counts = {name: int((d.split == code).sum()) for name, code in dt.SPLIT_NAMES.items()}
    n_concepts = np.unique(d.concept_ids()).size
    print(f"wrote {path}: {d.n} examples, {d.image_size}x{d.image_size}, {n_concepts} distinct concepts")
    print(f"split ({d.split_kind}): train {counts['train']}  val {counts['val']}  test {counts['test']}")
    if d.split_kind == "comp":
        sets = dt.concept_split_sets(d)
        print(f"concept split: train {len(sets['train'])}  val {len(sets['val'])}  test {len(sets['test'])}")
    return 0


# ---------------------------------------------------------------------------
# train


def _model_config_from_args(args, schema: AttributeSchema, image_size: int, seed: int) -> ModelConfig:
    hidden = tuple(args.hidden)
    return ModelConfig(
        schema=schema,
        image_size=image_size,
        latent_dim=args.latent_dim,
        enc_hidden=hidden,
        dec_hidden=hidden,
        joint_hidden=hidden,
        expert_hidden=tuple(args.expert_hidden),
        attr_dec_hidden=(args.attr_dec_hidden,),
        lambda_y=args.lambda_y,
        gamma=args.gamma,
        alpha=args.alpha,
        mu=args.mu,
        beta=args.beta,
        poe=not args.no_poe,
        seed=seed,
    )


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    _record_run(out_dir, "train", args, seed)
    d = _load_dataset(args.data)
    config = _model_config_from_args(args, d.schema, d.image_size, seed)
    model = JvaeModel(config)
    cfg = objectives.ObjectiveConfig.from_model(model, args.objective, freeze_likelihood=not args.no_freeze)
    rng = np.random.default_rng(seed)
    log = objectives.train(
        model, d, cfg, steps=args.steps, rng=rng, batch_size=args.batch, learning_rate=args.lr, seed=seed,
        log_every=args.log_every,
    )
    save_model(model, out_dir / "model.jvc")
    log.to_jsonl(out_dir / "trainlog.jsonl")
    final = log.records[-1]["total"] if log.records else float("nan")
    print(f"trained {args.objective} for {log.final_step} steps in {log.wall_time_s:.1f}s; final objective/example {final:.3f}")
    print(f"wrote {out_dir / 'model.jvc'} and trainlog.jsonl")
    return 0


# ---------------------------------------------------------------------------
# classifier-train


def cmd_classifier_train(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    _record_run(out_dir, "classifier-train", args, seed)
    d = _load_dataset(args.data)
    config = eval3c.ClassifierConfig(steps=args.steps, learning_rate=args.lr, batch_size=args.batch, seed=seed)
    clf = eval3c.train_classifier(d, config, np.random.default_rng(seed))
    eval3c.save_classifier(clf, out_dir / "classifier.jvc")
    accs = "  ".join(f"{k}={v:.4f}" for k, v in clf.accuracies.items())
    print(f"classifier held-out accuracy: {accs}")
    print(f"wrote {out_dir / 'classifier.jvc'}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _scenario_queries(args, d: dt.Dataset, seed: int) -> tuple[list[PartialAttributeVector], str]:
    if args.scenario == "iid-concrete":
        return eval3c.concrete_queries(d.schema), "iid-concrete"
    if args.scenario == "abstract":
        bank_offset = {"train": 0, "val": 1, "test": 2}[args.bank]
        rng = np.random.default_rng(np.random.SeedSequence([seed, bank_offset]))
        queries = dt.make_abstract_queries(d.schema, args.level, rng)
        return queries, f"abstract-{args.level}"
    if args.scenario == "comp":
        sets = dt.concept_split_sets(d)
        return [PartialAttributeVector.full(c) for c in sets["test"]], "comp"
    raise DataError(f"unknown scenario {args.scenario!r}")


def cmd_eval(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    _record_run(out_dir, "eval", args, seed)
    model = load_model(args.model)
    clf = eval3c.load_classifier(args.classifier)
    d = _load_dataset(args.data)
    if model.schema != clf.schema:
        raise DataError("model and classifier schemas differ")
    queries, tag = _scenario_queries(args, d, seed)
    rng = np.random.default_rng(seed)
    report = eval3c.evaluate(
        model, clf, queries, d, scenario=tag, rng=rng,
        samples_per_query=args.samples_per_query, splits=args.splits, collect_details=True,
    )
    text = report.to_text()
    print(text, end="")
    (out_dir / f"report_{tag}.txt").write_text(text, encoding="utf-8")
    with open(out_dir / f"report_{tag}.json", "w", encoding="utf-8") as f:
        payload = {
            "scenario": report.scenario,
            "metrics": {k: {"mean": m, "std": s} for k, (m, s) in report.metrics.items()},
            "n_queries": report.n_queries,
            "samples_per_query": report.samples_per_query,
            "splits": report.splits,
            "per_query": [
                {k: (list(v) if isinstance(v, tuple) else v) for k, v in row.items()} for row in report.per_query
            ],
        }
        json.dump(payload, f, sort_keys=True, indent=1)
    if args.grids:
        grid_rng = np.random.default_rng(seed + 1)
        for qi, query in enumerate(queries[: args.grids]):
            mean_images = model.imagine(query, args.samples_per_query, np.random.default_rng(grid_rng.integers(2**63)), mode="mean_image")
            samples = model.imagine(query, args.samples_per_query, np.random.default_rng(grid_rng.integers(2**63)), mode="sampled_image")
            preds = clf.classify_batch(samples)
            wrong = np.array([any(preds[i, k] != query.values[k] for k in query.observed) for i in range(len(samples))])
            gridio.sample_sheet(str(out_dir / f"grid_{tag}_{qi:03d}"), mean_images, wrong=wrong)
    return 0


# ---------------------------------------------------------------------------
# sample / interpolate


def cmd_sample(args) -> int:
    seed = _resolve_seed(args)
    model = load_model(args.model)
    query = parse_query(args.query, model.schema)
    rng = np.random.default_rng(seed)
    out_prefix = Path(args.out)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    mean_images = model.imagine(query, args.n, np.random.default_rng(rng.integers(2**63)), mode="mean_image")
    samples = model.imagine(query, args.n, np.random.default_rng(rng.integers(2**63)), mode="sampled_image")
    gridio.write_pgm(f"{out_prefix}_mean.pgm", gridio.tile_images(mean_images))
    gridio.write_pgm(f"{out_prefix}_sampled.pgm", gridio.tile_images(samples))
    print(f"wrote {out_prefix}_mean.pgm and {out_prefix}_sampled.pgm for query {format_query(query, model.schema)}")
    return 0


def cmd_interpolate(args) -> int:
    seed = _resolve_seed(args)
    model = load_model(args.model)
    q1 = parse_query(getattr(args, "from"), model.schema)
    q2 = parse_query(args.to, model.schema)
    rng = np.random.default_rng(seed)
    z1 = model.encode_attrs(q1).sample(rng, 1)[0]
    z2 = model.encode_attrs(q2).sample(rng, 1)[0]
    frames = []
    for t in np.linspace(0.0, 1.0, args.steps):
        z = slerp(z1, z2, float(t))
        frames.append(model.decode_image_np(z[None])[0].reshape(model.config.image_size, model.config.image_size))
    strip = gridio.tile_images(np.stack(frames), cols=args.steps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gridio.write_pgm(out, strip)
    print(f"wrote {out} ({args.steps} frames)")
    return 0


# ---------------------------------------------------------------------------
# name


def cmd_name(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    _record_run(out_dir, "name", args, seed)
    model = load_model(args.model)
    d = _load_dataset(args.data)
    split = args.bank_split or ("test" if d.split_kind != "none" else "all")
    rng = np.random.default_rng(seed)
    bank = dt.build_naming_bank(
        d, rng, split=split, queries_per_split=args.queries_per_split, images_per_query=args.images_per_query
    )
    result = naming.naming_accuracy(model, bank, args.method, rng, mc_samples=args.mc_samples)
    text = result.to_text()
    print(text, end="")
    (out_dir / f"naming_{args.method}.txt").write_text(text, encoding="utf-8")
    with open(out_dir / f"naming_{args.method}.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "method": result.method,
                "mean": result.mean,
                "std": result.std,
                "splits": result.split_accuracies,
                "chance": result.chance,
                "most_frequent": [result.most_frequent_mean, result.most_frequent_std],
                "effective_options": result.n_options,
                "bank_skipped": bank.n_skipped,
            },
            f,
            sort_keys=True,
            indent=1,
        )
    return 0


# ---------------------------------------------------------------------------
# gradcheck


def _toy_setup(seed: int):
    schema = AttributeSchema((("shade", ("dark", "light")), ("shape", ("bar", "dot", "ring"))))
    config = ModelConfig(
        schema=schema, image_size=2, latent_dim=2, enc_hidden=(5,), dec_hidden=(5,), joint_hidden=(5, 4),
        expert_hidden=(4,), attr_dec_hidden=(4,), label_embed=3, lambda_y=2.0, gamma=1.5, alpha=0.7, mu=0.6,
        seed=seed,
    )
    model = JvaeModel(config)
    r = np.random.default_rng(seed + 1)
    images = r.integers(0, 2, size=(6, 2, 2)).astype(np.uint8)
    attrs = np.stack([r.integers(0, 2, size=6), r.integers(0, 3, size=6)], axis=1).astype(np.uint8)
    d = dt.Dataset(schema, images, attrs, np.zeros(6, np.uint8), "none", {})
    from .model import prepare_batch

    return model, prepare_batch(d, np.arange(6))


def cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args)
    threshold = args.threshold
    worst = 0.0
    for kind in objectives.OBJECTIVE_KINDS:
        model, batch = _toy_setup(seed)
        cfg = objectives.ObjectiveConfig(kind, lambda_y=2.0, gamma=1.5, alpha=0.7, mu=0.6)
        eps = objectives.draw_eps(kind, 6, model.latent_dim, np.random.default_rng(seed + 2))
        graph, _ = objectives.objective_graph(model, batch, cfg, eps)
        err = ad.grad_check(graph, args.epsilon)
        worst = max(worst, err)
        status = "ok" if err < threshold else "FAIL"
        print(f"{kind}: max relative error {err:.3e}  [{status}]")
    if worst >= threshold:
        print(f"gradcheck failed: worst {worst:.3e} >= {threshold:.1e}")
        return NUMERIC_EXIT
    print(f"gradcheck passed: worst {worst:.3e} < {threshold:.1e}")
    return 0


# ---------------------------------------------------------------------------
# latent-map


LATENT_MAP_COLORS = np.array(
    [
        (230, 60, 60),
        (60, 130, 230),
        (60, 200, 90),
        (235, 200, 60),
        (170, 90, 220),
        (90, 220, 220),
        (240, 140, 60),
        (150, 150, 150),
    ],
    dtype=np.uint8,
)


def cmd_latent_map(args) -> int:
    model = load_model(args.model)
    if model.latent_dim != 2:
        raise DataError(f"latent-map needs a 2-d latent space, got d={model.latent_dim}")
    n = args.grid
    span = args.span
    axis = np.linspace(-span, span, n)
    zz = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    probs = model.decode_attrs_np(zz)
    cards = model.schema.cardinalities
    combo = np.zeros(len(zz), dtype=np.int64)
    for k, card in enumerate(cards):
        combo = combo * card + probs[k].argmax(axis=1)
    colors = LATENT_MAP_COLORS[combo % len(LATENT_MAP_COLORS)].reshape(n, n, 3)
    cell = max(1, args.cell)
    image = np.repeat(np.repeat(colors, cell, axis=0), cell, axis=1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gridio.write_ppm(out, image)
    n_regions = np.unique(combo).size
    print(f"wrote {out}: {n}x{n} latent sweep over [-{span}, {span}]^2, {n_regions} distinct predicted concepts")
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    seed = _resolve_seed(args)
    out_dir = Path(args.out)
    _record_run(out_dir, "sweep", args, seed)
    d = _load_dataset(args.data)
    clf = eval3c.load_classifier(args.classifier)
    val_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    queries = dt.make_abstract_queries(d.schema, args.level, val_rng)
    if args.max_queries and len(queries) > args.max_queries:
        pick = np.random.default_rng(seed).choice(len(queries), size=args.max_queries, replace=False)
        queries = [queries[i] for i in sorted(pick)]
    grids = {
        "telbo": [("lambda_y", ly, "gamma", g) for ly in objectives.LAMBDA_Y_GRID for g in objectives.GAMMA_GRID],
        "jmvae": [("lambda_y", ly, "alpha", a) for ly in objectives.LAMBDA_Y_GRID for a in objectives.ALPHA_GRID],
        "bivcca": [("lambda_y", ly, "mu", m) for ly in objectives.LAMBDA_Y_GRID for m in objectives.MU_GRID],
    }[args.objective]
    results = []
    best = None
    for k1, v1, k2, v2 in grids:
        overrides = {k1: v1, k2: v2}
        config = _model_config_from_args(args, d.schema, d.image_size, seed)
        for key, value in overrides.items():
            setattr(config, key, value)
        model = JvaeModel(config)
        cfg = objectives.ObjectiveConfig.from_model(model, args.objective)
        objectives.train(model, d, cfg, steps=args.steps, rng=np.random.default_rng(seed), batch_size=args.batch, learning_rate=args.lr, seed=seed)
        report = eval3c.evaluate(model, clf, queries, d, scenario=f"abstract-{args.level}", rng=np.random.default_rng(seed + 7))
        score = report.metrics["js_overall"][0]
        row = {"overrides": overrides, "js_overall": score}
        results.append(row)
        label = f"{k1}={v1},{k2}={v2}"
        print(f"{label}: js_overall {score:.4f}")
        if best is None or score > best[0]:
            best = (score, overrides, model)
    save_model(best[2], out_dir / "best_model.jvc")
    with open(out_dir / "sweep_results.json", "w", encoding="utf-8") as f:
        json.dump({"objective": args.objective, "results": results, "best": best[1]}, f, sort_keys=True, indent=1)
    print(f"best: {best[1]} (js_overall {best[0]:.4f}); wrote best_model.jvc")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imagine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset file")
    p.add_argument("--kind", choices=["mnista", "mnist2bit"], default="mnista")
    p.add_argument("--source", choices=["procedural", "idx"], default="procedural")
    p.add_argument("--image-size", type=int, default=16)
    p.add_argument("--per-concept", type=int, default=20)
    p.add_argument("--per-source", type=int, default=None)
    p.add_argument("--copies", type=int, default=24, help="mnist2bit replicas per source image")
    p.add_argument("--glyph-size", type=int, default=None)
    p.add_argument("--idx-images")
    p.add_argument("--idx-labels")
    p.add_argument("--split", choices=["iid", "comp", "none"], default="iid")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a joint model")
    p.add_argument("--data", required=True)
    p.add_argument("--objective", choices=list(objectives.OBJECTIVE_KINDS), required=True)
    p.add_argument("--lambda-y", type=float, default=50.0)
    p.add_argument("--gamma", type=float, default=50.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.7)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--latent-dim", type=int, default=10)
    p.add_argument("--hidden", type=int, nargs="+", default=[128, 128])
    p.add_argument("--expert-hidden", type=int, nargs="+", default=[32])
    p.add_argument("--attr-dec-hidden", type=int, default=128)
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--log-every", type=int, default=100)
    p.add_argument("--no-freeze", action="store_true", help="disable the frozen-likelihood rule (telbo)")
    p.add_argument("--no-poe", action="store_true", help="use an unrestricted q(z|attrs) network")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classifier-train", help="train the observation classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classifier_train)

    p = sub.add_parser("eval", help="run a 3C evaluation scenario")
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scenario", choices=["iid-concrete", "abstract", "comp"], required=True)
    p.add_argument("--level", type=int, default=1, choices=[1, 2, 3])
    p.add_argument("--bank", choices=["train", "val", "test"], default="test")
    p.add_argument("--samples-per-query", type=int, default=10)
    p.add_argument("--splits", type=int, default=5)
    p.add_argument("--grids", type=int, default=0, help="emit sample grids for the first N queries")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample", help="imagine images for a query")
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("interpolate", help="spherical interpolation between two queries")
    p.add_argument("--model", required=True)
    p.add_argument("--from", required=True)
    p.add_argument("--to", required=True)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("name", help="concept naming over a generated bank")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["latent", "nb"], required=True)
    p.add_argument("--bank-split", choices=["train", "val", "test", "all"], default=None)
    p.add_argument("--queries-per-split", type=int, default=100)
    p.add_argument("--images-per-query", type=int, default=5)
    p.add_argument("--mc-samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_name)

    p = sub.add_parser("gradcheck", help="finite-difference check of all objectives")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("latent-map", help="render a 2-d latent sweep colored by predicted concept")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", type=int, default=96)
    p.add_argument("--span", type=float, default=3.0)
    p.add_argument("--cell", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_latent_map)

    p = sub.add_parser("sweep", help="hyperparameter grid for one objective")
    p.add_argument("--data", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--objective", choices=list(objectives.OBJECTIVE_KINDS), required=True)
    p.add_argument("--level", type=int, default=1, choices=[1, 2, 3])
    p.add_argument("--max-queries", type=int, default=120)
    p.add_argument("--latent-dim", type=int, default=10)
    p.add_argument("--hidden", type=int, nargs="+", default=[128, 128])
    p.add_argument("--expert-hidden", type=int, nargs="+", default=[32])
    p.add_argument("--attr-dec-hidden", type=int, default=128)
    p.add_argument("--lambda-y", type=float, default=50.0)
    p.add_argument("--gamma", type=float, default=50.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.7)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (QueryError, DataError, FormatError) as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_EXIT
    except NumericsError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return NUMERIC_EXIT
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
