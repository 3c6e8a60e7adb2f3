"""Explainable conversational recommendations over fused knowledge graphs."""

from .conversation import (
    ConversationState,
    DialogHistory,
    DialogTurn,
    GatedAggregator,
    LinearProjection,
    encode_history,
    encode_turn_pair,
    register_text_encoder,
    stub_encoder,
)
from .encoder import (
    EncoderConfig,
    EntityTable,
    LayerWeights,
    encode_entities,
    init_weights,
    load_weights,
    rgcn_layer,
    save_weights,
)
from .evaluation import (
    Dialog,
    ExperimentConfig,
    MetricsReport,
    bleu,
    distinct_n,
    load_redial,
    recall_at_k,
    run_experiment,
)
from .explain import (
    Explanation,
    PromptTemplate,
    build_prompt,
    generate_explanation,
    load_template,
    render_fallback,
)
from .kg import (
    Entity,
    KnowledgeGraph,
    Mention,
    RelationType,
    Triple,
    link_mentions,
    load_graph,
    merge_graphs,
    neighbors,
)
from .pipeline import Pipeline, PipelineConfig
from .recommend import (
    FitConfig,
    ReasoningPath,
    Recommendation,
    ScorerParams,
    extract_reasoning_path,
    fit,
    recommend_top_k,
    score_entities,
)
from .reviews import Review, ReviewSet, embed_reviews, enrich_entity, select_reviews

__version__ = "0.1.0"
