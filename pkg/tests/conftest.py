from __future__ import annotations

from pathlib import Path

import pytest
from click.testing import CliRunner

from egcr import synthetic
from egcr.cli import main as cli_main
from egcr.evaluation import save_dialogs
from egcr.kg import Entity, KnowledgeGraph, RelationType, Triple, save_graph
from egcr.pipeline import Pipeline
from egcr.reviews import save_reviews


def movie_graph() -> KnowledgeGraph:
    """Handful of movies, genres and people for targeted unit tests."""
    entities = [
        Entity(id=0, name="No Time to Die", kind="item"),
        Entity(id=1, name="Skyfall", kind="item"),
        Entity(id=2, name="Paddington 2", kind="item"),
        Entity(id=10, name="Action", kind="attribute", aliases=("action movie",)),
        Entity(id=11, name="Comedy", kind="attribute"),
        Entity(id=12, name="Daniel Craig", kind="attribute"),
        Entity(id=20, name="spy", kind="concept", aliases=("espionage",)),
    ]
    relations = [
        RelationType(id=0, label="has_genre"),
        RelationType(id=1, label="has_actor"),
        RelationType(id=2, label="about"),
    ]
    triples = [
        Triple(0, 0, 10),
        Triple(1, 0, 10),
        Triple(2, 0, 11),
        Triple(0, 1, 12),
        Triple(1, 1, 12),
        Triple(0, 2, 20),
        Triple(1, 2, 20),
    ]
    return KnowledgeGraph.build(entities, relations, triples)


@pytest.fixture()
def movies() -> KnowledgeGraph:
    return movie_graph()


@pytest.fixture(scope="session")
def planted_files(tmp_path_factory) -> dict[str, Path]:
    """Planted corpus serialized to disk once per test session."""
    root = tmp_path_factory.mktemp("planted")
    g = synthetic.planted_graph()
    save_graph(g, root / "triples.tsv", root / "entities.jsonl")
    save_reviews(synthetic.planted_reviews(), root / "reviews.jsonl")
    save_dialogs(synthetic.planted_dialogs(200, seed=1, g=g), root / "train.jsonl")
    save_dialogs(synthetic.planted_dialogs(100, seed=2, g=g), root / "eval.jsonl")
    return {
        "root": root,
        "triples": root / "triples.tsv",
        "entities": root / "entities.jsonl",
        "reviews": root / "reviews.jsonl",
        "train": root / "train.jsonl",
        "eval": root / "eval.jsonl",
    }


@pytest.fixture(scope="session")
def fitted_model_dir(planted_files) -> Path:
    """A model directory ingested and fitted through the CLI, shared per session."""
    model_dir = planted_files["root"] / "model"
    runner = CliRunner()
    result = runner.invoke(
        cli_main,
        [
            "ingest",
            "--triples", str(planted_files["triples"]),
            "--entities", str(planted_files["entities"]),
            "--reviews", str(planted_files["reviews"]),
            "--out", str(model_dir),
            "--dim", "128",
            "--d-text", "256",
            "--activation", "identity",
            "--seed", "0",
        ],
    )
    assert result.exit_code == 0, result.output
    result = runner.invoke(
        cli_main,
        [
            "fit",
            "--dialogs", str(planted_files["train"]),
            "--out", str(model_dir),
            "--epochs", "300",
            "--lr", "1.0",
            "--seed", "0",
        ],
    )
    assert result.exit_code == 0, result.output
    return model_dir


@pytest.fixture(scope="session")
def fitted_pipeline(fitted_model_dir) -> Pipeline:
    return Pipeline.load(fitted_model_dir)
