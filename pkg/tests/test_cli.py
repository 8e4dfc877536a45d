import json

import numpy as np
import pytest

from imagine import cli
from imagine.data import read_dataset
from imagine.schema import PartialAttributeVector, format_query, mnista_schema, parse_query
from imagine.errors import QueryError


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def mini_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = run(
        [
            "gen-data", "--source", "procedural", "--image-size", "16", "--per-concept", "2",
            "--split", "comp", "--seed", "7", "--out", str(out),
        ]
    )
    assert code == 0
    return out / "data.mna"


@pytest.fixture(scope="module")
def tiny_model(tmp_path_factory, mini_data):
    out = tmp_path_factory.mktemp("model")
    code = run(
        [
            "train", "--data", str(mini_data), "--objective", "telbo", "--steps", "30",
            "--hidden", "24", "--latent-dim", "4", "--expert-hidden", "8", "--attr-dec-hidden", "16",
            "--batch", "16", "--seed", "1", "--out", str(out),
        ]
    )
    assert code == 0
    return out / "model.jvc"


@pytest.fixture(scope="module")
def tiny_classifier(tmp_path_factory, mini_data):
    out = tmp_path_factory.mktemp("clf")
    code = run(["classifier-train", "--data", str(mini_data), "--steps", "60", "--seed", "2", "--out", str(out)])
    assert code == 0
    return out / "classifier.jvc"


# ---------------------------------------------------------------------------
# query grammar


def test_parse_query_full_and_partial():
    schema = mnista_schema()
    q = parse_query("class=7,scale=big,orientation=upright,location=top-left", schema)
    assert q.values == (7, 0, 1, 0)
    assert q.is_full
    q2 = parse_query("class=3", schema)
    assert q2.values == (3, None, None, None)
    q3 = parse_query("scale=*,class=3", schema)
    assert q3.values == q2.values
    assert parse_query("", schema).values == (None, None, None, None)


def test_parse_query_errors_list_choices():
    schema = mnista_schema()
    with pytest.raises(QueryError, match="choices"):
        parse_query("scale=huge", schema)
    with pytest.raises(QueryError, match="schema has"):
        parse_query("size=big", schema)
    with pytest.raises(QueryError):
        parse_query("scale", schema)


def test_format_query_roundtrip():
    schema = mnista_schema()
    q = PartialAttributeVector((7, None, 1, None))
    assert parse_query(format_query(q, schema), schema) == q


# ---------------------------------------------------------------------------
# gen-data


def test_gen_data_writes_comp_split(mini_data):
    d = read_dataset(mini_data)
    assert d.n == 480
    assert d.split_kind == "comp"
    assert (mini_data.parent / "run_config.json").exists()


def test_gen_data_deterministic(tmp_path):
    args = [
        "gen-data", "--source", "procedural", "--image-size", "16", "--per-concept", "1",
        "--split", "iid", "--seed", "11",
    ]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "data.mna").read_bytes() == (tmp_path / "b" / "data.mna").read_bytes()


def test_gen_data_bad_source_usage_error(tmp_path, capsys):
    code = run(["gen-data", "--source", "idx", "--out", str(tmp_path)])
    assert code == 2


def test_gen_data_mnist2bit(tmp_path):
    code = run(["gen-data", "--kind", "mnist2bit", "--copies", "3", "--split", "iid", "--seed", "3", "--out", str(tmp_path)])
    assert code == 0
    d = read_dataset(tmp_path / "data.mna")
    assert d.n == 30
    assert d.schema.names == ("parity", "magnitude")


# ---------------------------------------------------------------------------
# train / eval / sample / interpolate / name


def test_train_writes_artifacts(tiny_model):
    assert tiny_model.exists()
    assert (tiny_model.parent / "trainlog.jsonl").exists()
    lines = (tiny_model.parent / "trainlog.jsonl").read_text().splitlines()
    meta = json.loads(lines[0])["meta"]
    assert meta["objective"] == "telbo"
    assert (tiny_model.parent / "run_config.json").exists()


def test_eval_scenarios(tmp_path, tiny_model, tiny_classifier, mini_data):
    out = tmp_path / "eval"
    code = run(
        [
            "eval", "--model", str(tiny_model), "--classifier", str(tiny_classifier), "--data", str(mini_data),
            "--scenario", "comp", "--samples-per-query", "4", "--splits", "3", "--seed", "5", "--out", str(out),
        ]
    )
    assert code == 0
    report = json.loads((out / "report_comp.json").read_text())
    assert report["n_queries"] == 24
    assert "correctness" in report["metrics"]
    assert "coverage" not in report["metrics"]

    out2 = tmp_path / "eval_abs"
    code = run(
        [
            "eval", "--model", str(tiny_model), "--classifier", str(tiny_classifier), "--data", str(mini_data),
            "--scenario", "abstract", "--level", "2", "--samples-per-query", "4", "--splits", "5",
            "--seed", "5", "--out", str(out2), "--grids", "2",
        ]
    )
    assert code == 0
    report = json.loads((out2 / "report_abstract-2.json").read_text())
    assert report["n_queries"] == 480
    assert "coverage" in report["metrics"]
    assert (out2 / "grid_abstract-2_000.pgm").exists()
    assert (out2 / "grid_abstract-2_000_marked.ppm").exists()


def test_sample_and_interpolate(tmp_path, tiny_model):
    prefix = tmp_path / "samples" / "run"
    code = run(["sample", "--model", str(tiny_model), "--query", "class=3", "--n", "6", "--seed", "4", "--out", str(prefix)])
    assert code == 0
    data = (tmp_path / "samples" / "run_mean.pgm").read_bytes()
    assert data.startswith(b"P5\n")
    assert (tmp_path / "samples" / "run_sampled.pgm").exists()

    strip = tmp_path / "strip.pgm"
    code = run(
        [
            "interpolate", "--model", str(tiny_model), "--from", "class=1,scale=big,orientation=upright,location=top-left",
            "--to", "class=7,scale=small,orientation=clockwise,location=bottom-right", "--steps", "5",
            "--seed", "4", "--out", str(strip),
        ]
    )
    assert code == 0
    assert strip.read_bytes().startswith(b"P5\n")


def test_sample_unknown_query_is_usage_error(tmp_path, tiny_model):
    code = run(["sample", "--model", str(tiny_model), "--query", "size=big", "--seed", "1", "--out", str(tmp_path / "x")])
    assert code == 2


def test_sample_seed_reproducible(tmp_path, tiny_model):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for prefix in (a, b):
        assert run(["sample", "--model", str(tiny_model), "--query", "class=2", "--n", "4", "--seed", "9", "--out", str(prefix)]) == 0
    assert (tmp_path / "a_sampled.pgm").read_bytes() == (tmp_path / "b_sampled.pgm").read_bytes()


def test_name_command(tmp_path, tiny_model, mini_data):
    out = tmp_path / "naming"
    code = run(
        [
            "name", "--model", str(tiny_model), "--data", str(mini_data), "--method", "latent",
            "--bank-split", "all", "--queries-per-split", "8", "--seed", "6", "--out", str(out),
        ]
    )
    assert code == 0
    result = json.loads((out / "naming_latent.json").read_text())
    assert 0.0 <= result["mean"] <= 1.0
    assert result["effective_options"] > 0


def test_missing_file_usage_error(tmp_path):
    code = run(["train", "--data", str(tmp_path / "nope.mna"), "--objective", "telbo", "--steps", "1", "--out", str(tmp_path)])
    assert code == 2


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args(["train", "--bogus"])
    assert exc.value.code == 2


# ---------------------------------------------------------------------------
# gradcheck / latent-map


def test_gradcheck_command(capsys):
    code = run(["gradcheck", "--seed", "0"])
    out = capsys.readouterr().out
    assert code == 0
    assert "telbo" in out and "jmvae" in out and "bivcca" in out
    assert "passed" in out


def test_latent_map_requires_2d(tmp_path, tiny_model):
    code = run(["latent-map", "--model", str(tiny_model), "--out", str(tmp_path / "map.ppm")])
    assert code == 2


def test_latent_map_mnist2bit(tmp_path):
    data_dir = tmp_path / "bits"
    assert run(["gen-data", "--kind", "mnist2bit", "--copies", "8", "--split", "iid", "--seed", "1", "--out", str(data_dir)]) == 0
    model_dir = tmp_path / "bitsmodel"
    assert (
        run(
            [
                "train", "--data", str(data_dir / "data.mna"), "--objective", "telbo", "--steps", "20",
                "--latent-dim", "2", "--hidden", "16", "--expert-hidden", "8", "--attr-dec-hidden", "8",
                "--batch", "8", "--seed", "2", "--out", str(model_dir),
            ]
        )
        == 0
    )
    out = tmp_path / "map.ppm"
    assert run(["latent-map", "--model", str(model_dir / "model.jvc"), "--grid", "16", "--cell", "2", "--out", str(out)]) == 0
    raw = out.read_bytes()
    assert raw.startswith(b"P6\n")


# ---------------------------------------------------------------------------
# env seed fallback


def test_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("IMAGINE_SEED", "123")
    args = ["gen-data", "--source", "procedural", "--image-size", "16", "--per-concept", "1", "--split", "none"]
    assert run(args + ["--out", str(tmp_path / "env")]) == 0
    monkeypatch.delenv("IMAGINE_SEED")
    assert run(args + ["--seed", "123", "--out", str(tmp_path / "explicit")]) == 0
    assert (tmp_path / "env" / "data.mna").read_bytes() == (tmp_path / "explicit" / "data.mna").read_bytes()
