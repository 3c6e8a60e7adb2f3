"""Command line entry points: ingest, fit, eval, serve, explain."""

from __future__ import annotations

import logging
from pathlib import Path

import click

from .errors import EgcrError
from .evaluation import ExperimentConfig, load_redial, render_report_table, run_experiment
from .kg import load_alignment, load_graph, merge_graphs
from .pipeline import Pipeline, PipelineConfig, fit_model_dir, ingest_model_dir
from .recommend import FitConfig
from .reviews import load_reviews


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Explainable conversational recommendations over a knowledge graph."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--triples", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--entities", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--concept-triples", type=click.Path(exists=True, dir_okay=False))
@click.option("--concept-entities", type=click.Path(exists=True, dir_okay=False))
@click.option("--alignment", type=click.Path(exists=True, dir_okay=False))
@click.option("--reviews", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--dim", default=32, show_default=True)
@click.option("--d-text", default=64, show_default=True)
@click.option("--layers", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--alpha", default=0.5, show_default=True)
@click.option(
    "--activation",
    default="relu",
    show_default=True,
    type=click.Choice(["relu", "identity"]),
    help="Hidden-layer activation of the graph encoder.",
)
def ingest(
    triples: str,
    entities: str,
    concept_triples: str | None,
    concept_entities: str | None,
    alignment: str | None,
    reviews: str | None,
    out: str,
    dim: int,
    d_text: int,
    layers: int,
    seed: int,
    alpha: float,
    activation: str,
) -> None:
    """Normalize graph and review sources into a model directory."""
    g = load_graph(triples, entities)
    if concept_triples or concept_entities:
        if not (concept_triples and concept_entities and alignment):
            raise click.UsageError(
                "--concept-triples, --concept-entities and --alignment go together"
            )
        g_concept = load_graph(concept_triples, concept_entities)
        g = merge_graphs(g, g_concept, load_alignment(alignment))
    elif alignment:
        raise click.UsageError("--alignment needs --concept-triples/--concept-entities")
    reviews_by_item = load_reviews(reviews) if reviews else None
    cfg = PipelineConfig(
        dim=dim, d_text=d_text, layers=layers, seed=seed, alpha=alpha, activation=activation
    )
    root = ingest_model_dir(out, g, cfg, reviews_by_item)
    click.echo(
        f"ingested {g.entity_count} entities, {len(g.triples)} triples, "
        f"{g.relation_count} relations into {root}"
    )


@main.command()
@click.option("--dialogs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=200, show_default=True)
@click.option("--lr", default=0.5, show_default=True)
def fit(dialogs: str, out_dir: str, seed: int, epochs: int, lr: float) -> None:
    """Fit scorer parameters against a dialog corpus in an ingested directory."""
    g = load_graph(Path(out_dir) / "triples.tsv", Path(out_dir) / "entities.jsonl")
    corpus = load_redial(dialogs, g)
    pipe = fit_model_dir(out_dir, corpus, FitConfig(epochs=epochs, lr=lr, seed=seed))
    click.echo(
        f"fit {len(corpus)} dialogs for {epochs} epochs; "
        f"beta={pipe.params.beta:.4f}; model written to {out_dir}"
    )


@main.command(name="eval")
@click.option("--dialogs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--model", "model_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--k", default="1,10,50", show_default=True, help="Comma-separated cutoffs.")
@click.option("--report", type=click.Path(dir_okay=False), help="Where to write the JSON report.")
@click.option("--table", type=click.Path(dir_okay=False), help="Where to write the text table.")
def eval_cmd(dialogs: str, model_dir: str, k: str, report: str | None, table: str | None) -> None:
    """Replay a labeled dialog corpus and print the metric table."""
    try:
        k_values = tuple(int(part) for part in k.split(",") if part.strip())
    except ValueError:
        raise click.UsageError(f"bad --k value {k!r}")
    config = ExperimentConfig(
        model_dir=Path(model_dir),
        dialogs_path=Path(dialogs),
        k_values=k_values,
        report_json=Path(report) if report else None,
        report_table=Path(table) if table else None,
    )
    result = run_experiment(config)
    click.echo(render_report_table(result), nl=False)


@main.command()
@click.option("--model", "model_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default="./sessions", show_default=True, type=click.Path(file_okay=False))
def serve(model_dir: str, port: int, host: str, data_dir: str) -> None:
    """Serve the conversational API over HTTP."""
    from .service import serve as run_service

    run_service(model_dir, data_dir, host, port)


@main.command()
@click.option("--dialog", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--turn", required=True, type=int)
@click.option("--model", "model_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--conversation", help="Conversation id when the file holds several.")
def explain(dialog: str, turn: int, model_dir: str, conversation: str | None) -> None:
    """Explain the recommendation the engine would make at one dialog turn."""
    pipe = Pipeline.load(model_dir)
    dialogs = load_redial(dialog, pipe.g)
    if not dialogs:
        raise click.ClickException("dialog file holds no parseable conversation")
    if conversation is None:
        selected = dialogs[0]
    else:
        matches = [d for d in dialogs if d.conversation_id == conversation]
        if not matches:
            raise click.ClickException(f"no conversation {conversation!r} in {dialog}")
        selected = matches[0]
    prefix = selected.prefix_before(turn)
    if not any(t.speaker == "seeker" for t in prefix.turns):
        raise click.ClickException(f"no seeker turn before turn {turn}")
    outcome = pipe.respond(prefix)
    click.echo(f"response: {outcome.response_text}")
    click.echo(f"explanation ({outcome.explanation.source}): {outcome.explanation.text}")
    for ranked in outcome.ranked:
        click.echo(f"  #{ranked.entity_id} {ranked.name} score={ranked.score:.4f}")
        for hop in ranked.path:
            click.echo(f"    {hop}")


def run() -> None:
    try:
        main()
    except EgcrError as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    run()
