"""End-to-end engine assembly and the on-disk model directory.

A model directory is produced in two steps: ``ingest`` normalizes the graph
and review corpus into it, ``fit`` adds the encoder checkpoint and scorer
parameters. Loading a directory reconstructs the full engine: entity table
(graph convolution plus review enrichment), conversation encoder, scorer and
explainer. Every random component is derived from the single pipeline seed,
so a directory loads to the same engine every time.

Files inside a model directory::

    entities.jsonl   triples.tsv    reviews.jsonl (optional)
    pipeline.json    encoder.npz    scorer.json
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .conversation import (
    SEEKER,
    ConversationState,
    DialogHistory,
    GatedAggregator,
    LinearProjection,
    TextEncoder,
    encode_history,
    make_text_encoder,
)
from .encoder import (
    EncoderConfig,
    EntityTable,
    LayerWeights,
    encode_entities,
    init_weights,
    load_weights,
    save_weights,
)
from .errors import ConfigError
from .explain import (
    CompletionClient,
    Explanation,
    PromptTemplate,
    build_prompt,
    client_from_env,
    generate_explanation,
    load_template,
    render_path_hops,
)
from .kg import KnowledgeGraph, load_graph, save_graph
from .recommend import (
    FitConfig,
    Recommendation,
    ReasoningPath,
    ScorerParams,
    extract_reasoning_path,
    fit,
    load_scorer,
    recommend_top_k,
    save_scorer,
    score_entities,
)
from .reviews import Review, ReviewSet, enrich_table, load_reviews, save_reviews, select_reviews

ENTITIES_FILE = "entities.jsonl"
TRIPLES_FILE = "triples.tsv"
REVIEWS_FILE = "reviews.jsonl"
PIPELINE_FILE = "pipeline.json"
ENCODER_FILE = "encoder.npz"
SCORER_FILE = "scorer.json"

RESPONSE_TEMPLATE = "You should watch {item}."


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to rebuild the engine deterministically."""

    dim: int = 32
    d_text: int = 64
    layers: int = 2
    activation: str = "relu"
    self_loop: bool = True
    seed: int = 0
    alpha: float = 0.5
    top_k: int = 3
    max_path_length: int = 2
    text_encoder: str = "hashed"
    mask_mentioned: bool = True
    template: str = "default"

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            dim=self.dim,
            layers=self.layers,
            activation=self.activation,
            self_loop=self.self_loop,
            seed=self.seed,
        )

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown pipeline config keys {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class RankedItem:
    entity_id: int
    name: str
    score: float
    path: tuple[str, ...]


@dataclass(frozen=True)
class TurnOutcome:
    """Everything the engine produced for one seeker turn."""

    recommendation: Recommendation
    path: ReasoningPath
    explanation: Explanation
    utterance: str
    response_text: str
    ranked: tuple[RankedItem, ...]


class Pipeline:
    """The assembled engine: graph in, ranked items and explanations out."""

    def __init__(
        self,
        g: KnowledgeGraph,
        cfg: PipelineConfig,
        table: EntityTable,
        params: ScorerParams,
        enc: TextEncoder,
        proj: LinearProjection,
        rnn: GatedAggregator,
        template: PromptTemplate,
        reviews_by_item: dict[int, list[Review]],
        client: CompletionClient | None,
    ):
        self.g = g
        self.cfg = cfg
        self.table = table
        self.params = params
        self.enc = enc
        self.proj = proj
        self.rnn = rnn
        self.template = template
        self.reviews_by_item = reviews_by_item
        self.client = client

    @classmethod
    def assemble(
        cls,
        g: KnowledgeGraph,
        cfg: PipelineConfig,
        weights: list[LayerWeights] | None = None,
        params: ScorerParams | None = None,
        reviews_by_item: dict[int, list[Review]] | None = None,
        template: PromptTemplate | None = None,
        client: CompletionClient | None = None,
    ) -> "Pipeline":
        enc = make_text_encoder(cfg.text_encoder, cfg.seed, cfg.d_text)
        proj = LinearProjection.seeded(cfg.d_text, cfg.dim, cfg.seed)
        rnn = GatedAggregator.seeded(cfg.dim, cfg.seed)
        encoder_cfg = cfg.encoder_config()
        if weights is None:
            weights = init_weights(g, encoder_cfg)
        table = encode_entities(g, encoder_cfg, weights=weights)
        reviews_by_item = reviews_by_item or {}
        if reviews_by_item:
            table = enrich_table(table, g, reviews_by_item, enc, proj, cfg.alpha)
        if params is None:
            params = ScorerParams.zeros(g, mask_mentioned=cfg.mask_mentioned)
        if template is None:
            template = load_template(cfg.template)
        return cls(g, cfg, table, params, enc, proj, rnn, template, reviews_by_item, client)

    @classmethod
    def load(cls, model_dir: str | Path, client: CompletionClient | None = None) -> "Pipeline":
        """Rebuild the engine from a fitted model directory.

        When no client is passed the completion endpoint environment
        variables decide; absent ones mean fallback-only explanations.
        """
        root = Path(model_dir)
        cfg = load_pipeline_config(root)
        g = load_graph(root / TRIPLES_FILE, root / ENTITIES_FILE)
        reviews_path = root / REVIEWS_FILE
        reviews_by_item = load_reviews(reviews_path) if reviews_path.is_file() else {}
        weights_path = root / ENCODER_FILE
        weights = None
        if weights_path.is_file():
            weights, _ = load_weights(weights_path)
        params = None
        scorer_path = root / SCORER_FILE
        if scorer_path.is_file():
            params, _ = load_scorer(scorer_path)
        if client is None:
            client = client_from_env()
        return cls.assemble(
            g,
            cfg,
            weights=weights,
            params=params,
            reviews_by_item=reviews_by_item,
            client=client,
        )

    # -- turn handling -----------------------------------------------------

    def encode_state(self, history: DialogHistory) -> ConversationState:
        return encode_history(history, self.enc, self.proj, self.rnn)

    def respond(self, history: DialogHistory) -> TurnOutcome:
        """Rank items for the current history and explain the top choice."""
        state = self.encode_state(history)
        mentions = history.mentioned_entities()
        scores = score_entities(state, mentions, self.table, self.params)
        seeker_turns = [t.turn_index for t in history.turns if t.speaker == SEEKER]
        rec = recommend_top_k(scores, self.cfg.top_k, query_turn=seeker_turns[-1])
        if rec.ranked:
            top = rec.ranked[0][0]
            path = extract_reasoning_path(self.g, mentions, top, self.cfg.max_path_length)
            reviews = select_reviews(self.reviews_by_item.get(top, []), item=top)
            prompt = build_prompt(history, rec, path, reviews, self.template, self.g)
            explanation = generate_explanation(prompt, self.client, rec, path, self.g)
            utterance = RESPONSE_TEMPLATE.format(item=self.g.entity(top).name)
        else:
            path = ReasoningPath()
            explanation = generate_explanation("", None, rec, path, self.g)
            utterance = "I need a bit more to go on."
        response_text = f"{utterance} ({explanation.text})"
        hop_strings = tuple(render_path_hops(path, self.g))
        ranked = tuple(
            RankedItem(
                entity_id=eid,
                name=self.g.entity(eid).name,
                score=score,
                path=hop_strings if i == 0 else (),
            )
            for i, (eid, score) in enumerate(rec.ranked)
        )
        return TurnOutcome(
            recommendation=rec,
            path=path,
            explanation=explanation,
            utterance=utterance,
            response_text=response_text,
            ranked=ranked,
        )


# -- model directory -------------------------------------------------------


def load_pipeline_config(model_dir: str | Path) -> PipelineConfig:
    path = Path(model_dir) / PIPELINE_FILE
    if not path.is_file():
        raise ConfigError(f"{path} not found; run ingest first")
    with path.open("r", encoding="utf-8") as fh:
        return PipelineConfig.from_json_dict(json.load(fh))


def ingest_model_dir(
    out_dir: str | Path,
    g: KnowledgeGraph,
    cfg: PipelineConfig,
    reviews_by_item: dict[int, list[Review]] | None = None,
) -> Path:
    """Write the normalized graph, reviews and config into a model directory."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    save_graph(g, root / TRIPLES_FILE, root / ENTITIES_FILE)
    if reviews_by_item:
        save_reviews(reviews_by_item, root / REVIEWS_FILE)
    with (root / PIPELINE_FILE).open("w", encoding="utf-8") as fh:
        json.dump(cfg.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return root


def fit_model_dir(
    model_dir: str | Path,
    dialogs,
    fit_cfg: FitConfig,
) -> "Pipeline":
    """Fit scorer parameters for an ingested directory and persist the model.

    Writes the encoder checkpoint and the scorer JSON next to the ingested
    graph, then returns the ready-to-serve engine.
    """
    root = Path(model_dir)
    cfg = load_pipeline_config(root)
    g = load_graph(root / TRIPLES_FILE, root / ENTITIES_FILE)
    reviews_path = root / REVIEWS_FILE
    reviews_by_item = load_reviews(reviews_path) if reviews_path.is_file() else {}

    encoder_cfg = cfg.encoder_config()
    weights = init_weights(g, encoder_cfg)
    pipe = Pipeline.assemble(g, cfg, weights=weights, reviews_by_item=reviews_by_item)
    result = fit(
        dialogs,
        g,
        pipe.table,
        fit_cfg,
        pipe.encode_state,
        initial=ScorerParams.zeros(g, mask_mentioned=cfg.mask_mentioned),
    )
    save_weights(root / ENCODER_FILE, weights, encoder_cfg)
    save_scorer(root / SCORER_FILE, result.params, fit_cfg)
    pipe.params = result.params
    pipe.table = result.table
    return pipe
