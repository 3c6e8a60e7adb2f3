"""Relational graph convolution over the entity registry.

One layer updates every entity i as

    h'_i = act( W_0 h_i  +  sum_r sum_{j in N_r(i)} (1 / |N_r(i)|) W_r h_j )

where N_r(i) are the heads of stored triples (j, r, i): messages flow
head to tail, and reverse influence only exists where a reverse triple was
materialized. The self term is dropped when ``self_loop`` is off, and an
entity with no incoming triples under a relation simply receives no message
for it. Hidden layers use the configured activation; the final layer is
always linear so downstream dot products keep their sign structure.

Weights use a Glorot-style seeded uniform init on [-s, s] with
s = sqrt(6 / (2 * dim)). Checkpoints round-trip bit-exactly through ``.npz``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, IntegrityError
from .kg import KnowledgeGraph

_ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 32
    layers: int = 2
    activation: str = "relu"
    self_loop: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )


@dataclass(frozen=True)
class LayerWeights:
    """Per-relation message transforms plus the self-loop transform."""

    self_weight: np.ndarray
    relation_weights: Mapping[int, np.ndarray]

    def __post_init__(self) -> None:
        mats = [self.self_weight, *self.relation_weights.values()]
        for m in mats:
            if not np.all(np.isfinite(m)):
                raise IntegrityError("layer weights must be finite")
            if m.shape != mats[0].shape or m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise DimensionError("all weight matrices must be square and same-shape")

    @property
    def dim(self) -> int:
        return self.self_weight.shape[0]


class EntityTable:
    """Embedding matrix aligned with the graph's entity registry order.

    Row ``index[eid]`` holds the vector of entity ``eid``; the index map
    equals the graph's ascending-id registry positions.
    """

    def __init__(self, vectors: np.ndarray, index: Mapping[int, int]):
        if vectors.ndim != 2:
            raise DimensionError(f"table must be 2-D, got shape {vectors.shape}")
        if len(index) != vectors.shape[0]:
            raise DimensionError(
                f"index covers {len(index)} entities but table has {vectors.shape[0]} rows"
            )
        self.vectors = vectors
        self.index = dict(index)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row(self, entity_id: int) -> np.ndarray:
        try:
            return self.vectors[self.index[entity_id]]
        except KeyError:
            raise KeyError(f"entity {entity_id} is not in the table") from None

    def with_vectors(self, vectors: np.ndarray) -> "EntityTable":
        return EntityTable(vectors, self.index)


def glorot_bound(dim: int) -> float:
    return float(np.sqrt(6.0 / (2.0 * dim)))


def init_weights(g: KnowledgeGraph, cfg: EncoderConfig) -> list[LayerWeights]:
    """Seeded random layer weights, one W_r per registered relation per layer.

    Matrices are drawn in a fixed order (self transform first, then relations
    by ascending id, layer by layer) from a single stream, so the result is a
    pure function of (graph relation ids, cfg).
    """
    rng = np.random.default_rng([cfg.seed, 0])
    bound = glorot_bound(cfg.dim)
    layers: list[LayerWeights] = []
    for _ in range(cfg.layers):
        self_w = rng.uniform(-bound, bound, size=(cfg.dim, cfg.dim))
        rel_w = {
            r: rng.uniform(-bound, bound, size=(cfg.dim, cfg.dim))
            for r in g.relation_ids()
        }
        layers.append(LayerWeights(self_weight=self_w, relation_weights=rel_w))
    return layers


def seeded_init_table(g: KnowledgeGraph, cfg: EncoderConfig) -> EntityTable:
    """Seeded random initial embeddings, one row per registered entity."""
    rng = np.random.default_rng([cfg.seed, 1])
    bound = glorot_bound(cfg.dim)
    vectors = rng.uniform(-bound, bound, size=(g.entity_count, cfg.dim))
    return EntityTable(vectors, g.positions)


def _edge_positions(g: KnowledgeGraph, relation: int) -> tuple[np.ndarray, np.ndarray]:
    heads = []
    tails = []
    for t in sorted(g.triples, key=lambda t: (t.head, t.tail)):
        if t.relation == relation:
            heads.append(g.position_of(t.head))
            tails.append(g.position_of(t.tail))
    return np.asarray(heads, dtype=np.intp), np.asarray(tails, dtype=np.intp)


def rgcn_layer(
    h: EntityTable,
    g: KnowledgeGraph,
    w: LayerWeights,
    cfg: EncoderConfig,
) -> EntityTable:
    """Apply one relational convolution layer to the whole table."""
    n = g.entity_count
    if h.vectors.shape != (n, cfg.dim):
        raise DimensionError(
            f"table shape {h.vectors.shape} does not match ({n}, {cfg.dim})"
        )
    if h.index != dict(g.positions):
        raise IntegrityError("table index does not match the graph registry")
    if w.dim != cfg.dim:
        raise DimensionError(f"weights are {w.dim}-dimensional, config says {cfg.dim}")
    missing = [r for r in g.relation_ids() if r not in w.relation_weights]
    if missing:
        raise ConfigError(f"weights missing relations {missing}")

    out = np.zeros_like(h.vectors)
    for r in g.relation_ids():
        heads, tails = _edge_positions(g, r)
        if heads.size == 0:
            continue
        messages = h.vectors[heads] @ w.relation_weights[r].T
        acc = np.zeros_like(h.vectors)
        np.add.at(acc, tails, messages)
        degree = np.zeros(n, dtype=np.float64)
        np.add.at(degree, tails, 1.0)
        nonzero = degree > 0
        acc[nonzero] /= degree[nonzero, None]
        out += acc
    if cfg.self_loop:
        out += h.vectors @ w.self_weight.T
    if cfg.activation == "relu":
        out = np.maximum(out, 0.0)
    return h.with_vectors(out)


def encode_entities(
    g: KnowledgeGraph,
    cfg: EncoderConfig,
    init: EntityTable | None = None,
    weights: Sequence[LayerWeights] | None = None,
) -> EntityTable:
    """Stack ``cfg.layers`` convolution passes starting from ``init``.

    Missing ``init`` or ``weights`` fall back to the seeded defaults, so the
    output is deterministic given (g, cfg, init, weights). The final layer is
    applied with the identity activation regardless of ``cfg.activation``.
    """
    if init is None:
        init = seeded_init_table(g, cfg)
    if weights is None:
        weights = init_weights(g, cfg)
    if len(weights) != cfg.layers:
        raise ConfigError(f"expected {cfg.layers} weight layers, got {len(weights)}")
    table = init
    final_cfg = dataclasses.replace(cfg, activation="identity")
    for depth, w in enumerate(weights):
        layer_cfg = final_cfg if depth == len(weights) - 1 else cfg
        table = rgcn_layer(table, g, w, layer_cfg)
    return table


# -- checkpointing ---------------------------------------------------------


def save_weights(
    dest: str | Path,
    weights: Sequence[LayerWeights],
    cfg: EncoderConfig,
) -> None:
    """Write layer weights plus the shape header to a single ``.npz`` file."""
    arrays: dict[str, np.ndarray] = {}
    relation_ids = sorted(weights[0].relation_weights) if weights else []
    for depth, w in enumerate(weights):
        if sorted(w.relation_weights) != relation_ids:
            raise IntegrityError("all layers must cover the same relation ids")
        arrays[f"layer{depth}_self"] = w.self_weight
        for r in relation_ids:
            arrays[f"layer{depth}_rel{r}"] = w.relation_weights[r]
    arrays["meta"] = np.asarray(
        [cfg.dim, cfg.layers, len(relation_ids), cfg.seed, int(cfg.self_loop)],
        dtype=np.int64,
    )
    arrays["relation_ids"] = np.asarray(relation_ids, dtype=np.int64)
    with open(dest, "wb") as fh:
        np.savez(fh, **arrays)


def load_weights(source: str | Path) -> tuple[list[LayerWeights], EncoderConfig]:
    """Read a checkpoint written by :func:`save_weights`.

    The returned config carries the persisted dim/layers/seed/self_loop; the
    activation is the default and not part of the checkpoint.
    """
    with np.load(source) as data:
        try:
            meta = data["meta"]
            relation_ids = [int(r) for r in data["relation_ids"]]
        except KeyError as exc:
            raise IntegrityError(f"checkpoint missing {exc.args[0]!r}") from None
        dim, n_layers, n_relations, seed, self_loop = (int(v) for v in meta)
        if len(relation_ids) != n_relations:
            raise IntegrityError("checkpoint relation header is inconsistent")
        weights: list[LayerWeights] = []
        for depth in range(n_layers):
            try:
                self_w = data[f"layer{depth}_self"]
                rel_w = {r: data[f"layer{depth}_rel{r}"] for r in relation_ids}
            except KeyError as exc:
                raise IntegrityError(f"checkpoint missing array {exc.args[0]!r}") from None
            if self_w.shape != (dim, dim):
                raise DimensionError(
                    f"checkpoint layer {depth} has shape {self_w.shape}, header says {dim}"
                )
            weights.append(LayerWeights(self_weight=self_w, relation_weights=rel_w))
    cfg = EncoderConfig(dim=dim, layers=n_layers, seed=seed, self_loop=bool(self_loop))
    return weights, cfg
