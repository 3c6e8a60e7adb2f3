"""Item scoring, ranking, reasoning paths and parameter fitting.

The score of item i against a conversation is

    score(i) = <state, t_i> + beta * max_{m in mentions} <t_m, t_i> + bias_i

with t_* rows of the entity table. The mention term is 0 when nothing has
been mentioned, and mentioned items can be masked out of the ranking with a
hard -inf. Fitting minimizes softmax cross-entropy of these scores against
gold items by full-batch gradient descent over bias and beta; the entity
table stays frozen unless table fine-tuning is switched on.

A recommendation is justified by the shortest undirected path (up to a hop
budget) from any mentioned entity to the recommended item, with ties broken
in favor of attribute-kind intermediates and then the lexicographically
smallest entity id sequence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .conversation import ConversationState, DialogHistory
from .encoder import EntityTable
from .errors import DimensionError
from .kg import KnowledgeGraph

MAX_PATH_LENGTH = 2


# -- scoring and ranking ---------------------------------------------------


@dataclass(frozen=True)
class ScorerParams:
    """Learnable scoring parameters over a fixed item universe."""

    item_ids: tuple[int, ...]
    bias: np.ndarray
    beta: float = 0.0
    mask_mentioned: bool = True

    def __post_init__(self) -> None:
        if list(self.item_ids) != sorted(set(self.item_ids)):
            raise ValueError("item_ids must be sorted and unique")
        if self.bias.shape != (len(self.item_ids),):
            raise DimensionError(
                f"bias has shape {self.bias.shape} for {len(self.item_ids)} items"
            )
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not np.all(np.isfinite(self.bias)):
            raise ValueError("bias must be finite")

    @classmethod
    def zeros(cls, g: KnowledgeGraph, beta: float = 0.0, mask_mentioned: bool = True) -> "ScorerParams":
        items = tuple(g.items())
        return cls(
            item_ids=items,
            bias=np.zeros(len(items), dtype=np.float64),
            beta=beta,
            mask_mentioned=mask_mentioned,
        )

    def to_json_dict(self) -> dict:
        return {
            "item_ids": list(self.item_ids),
            "bias": [float(b) for b in self.bias],
            "beta": float(self.beta),
            "mask_mentioned": self.mask_mentioned,
        }

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "ScorerParams":
        return cls(
            item_ids=tuple(int(i) for i in data["item_ids"]),
            bias=np.asarray(data["bias"], dtype=np.float64),
            beta=float(data["beta"]),
            mask_mentioned=bool(data["mask_mentioned"]),
        )


def _item_rows(table: EntityTable, item_ids: Sequence[int]) -> np.ndarray:
    return np.asarray([table.index[i] for i in item_ids], dtype=np.intp)


def _affinity(
    table: EntityTable,
    item_ids: Sequence[int],
    mentions: Iterable[int],
) -> np.ndarray:
    """Per item, the best inner product against any mentioned entity."""
    mention_rows = [table.index[m] for m in sorted(set(mentions))]
    items = table.vectors[_item_rows(table, item_ids)]
    if not mention_rows:
        return np.zeros(len(item_ids), dtype=np.float64)
    mentioned = table.vectors[mention_rows]
    return (items @ mentioned.T).max(axis=1)


def score_entities(
    state: ConversationState,
    mentions: set[int],
    table: EntityTable,
    params: ScorerParams,
) -> dict[int, float]:
    """Score every item in the params universe. Masked items score -inf."""
    if state.vector.shape != (table.dim,):
        raise DimensionError(
            f"state has shape {state.vector.shape}, table dim is {table.dim}"
        )
    unknown = [m for m in mentions if m not in table.index]
    if unknown:
        raise KeyError(f"mentioned entities not in table: {sorted(unknown)}")
    items = table.vectors[_item_rows(table, params.item_ids)]
    scores = items @ state.vector
    scores = scores + params.beta * _affinity(table, params.item_ids, mentions)
    scores = scores + params.bias
    result = dict(zip(params.item_ids, (float(s) for s in scores)))
    if params.mask_mentioned:
        for m in mentions:
            if m in result:
                result[m] = float("-inf")
    return result


@dataclass(frozen=True)
class Recommendation:
    """Ranked (entity id, score) pairs for one query turn."""

    ranked: tuple[tuple[int, float], ...]
    query_turn: int = 0

    def entity_ids(self) -> list[int]:
        return [eid for eid, _ in self.ranked]


def recommend_top_k(scores: Mapping[int, float], k: int, query_turn: int = 0) -> Recommendation:
    """Top ``k`` by score descending, entity id ascending on ties.

    Masked and non-finite entries never appear; fewer than ``k`` survivors
    shortens the list.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    survivors = [(eid, s) for eid, s in scores.items() if np.isfinite(s)]
    survivors.sort(key=lambda pair: (-pair[1], pair[0]))
    return Recommendation(ranked=tuple(survivors[:k]), query_turn=query_turn)


# -- reasoning paths -------------------------------------------------------


@dataclass(frozen=True)
class PathHop:
    """One node on a path plus the edge that reached it.

    ``relation`` is None on the first hop. ``reverse`` marks an edge that was
    traversed tail to head.
    """

    entity: int
    relation: int | None = None
    reverse: bool = False


@dataclass(frozen=True)
class ReasoningPath:
    """Alternating entity/relation chain from a mentioned entity to an item.

    Empty hops mean no connection was found within the hop budget. A single
    hop means the recommended item was itself mentioned.
    """

    hops: tuple[PathHop, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.hops

    @property
    def edge_count(self) -> int:
        return max(0, len(self.hops) - 1)

    def entity_ids(self) -> tuple[int, ...]:
        return tuple(h.entity for h in self.hops)


def _undirected_adjacency(g: KnowledgeGraph) -> dict[int, list[tuple[int, int, bool]]]:
    adj: dict[int, list[tuple[int, int, bool]]] = {e: [] for e in g.entity_ids()}
    for t in sorted(g.triples, key=lambda t: (t.head, t.relation, t.tail)):
        adj[t.head].append((t.tail, t.relation, False))
        adj[t.tail].append((t.head, t.relation, True))
    return adj


def _path_preference_key(g: KnowledgeGraph, entities: Sequence[int]) -> tuple:
    intermediates = entities[1:-1]
    off_kind = sum(1 for e in intermediates if g.entity(e).kind != "attribute")
    return (off_kind, tuple(entities))


def extract_reasoning_path(
    g: KnowledgeGraph,
    mentions: set[int],
    rec: int,
    max_length: int = MAX_PATH_LENGTH,
) -> ReasoningPath:
    """Shortest connection from any mentioned entity to ``rec``.

    Edges are traversed in either direction. Among equal-length candidates
    the preference is: fewest non-attribute intermediates first, then the
    lexicographically smallest entity id sequence. No connection within
    ``max_length`` hops yields the empty path.
    """
    g.entity(rec)
    for m in mentions:
        g.entity(m)
    if not mentions:
        return ReasoningPath()
    if rec in mentions:
        return ReasoningPath(hops=(PathHop(entity=rec),))

    adj = _undirected_adjacency(g)

    # Distances from rec, capped at max_length, over the undirected view.
    dist = {rec: 0}
    frontier = [rec]
    for depth in range(1, max_length + 1):
        nxt: list[int] = []
        for node in frontier:
            for nbr, _, _ in adj[node]:
                if nbr not in dist:
                    dist[nbr] = depth
                    nxt.append(nbr)
        frontier = nxt

    reachable = {m: dist[m] for m in mentions if m in dist}
    if not reachable:
        return ReasoningPath()
    target_len = min(reachable.values())

    # Every shortest entity sequence: walk from mentioned nodes along strictly
    # distance-decreasing edges until rec, then keep the preferred one.
    best: tuple | None = None
    best_entities: tuple[int, ...] | None = None
    stack = [(m,) for m in sorted(reachable) if reachable[m] == target_len]
    while stack:
        path = stack.pop()
        node = path[-1]
        if node == rec:
            key = _path_preference_key(g, path)
            if best is None or key < best:
                best = key
                best_entities = path
            continue
        for nbr, _, _ in adj[node]:
            if dist.get(nbr) == dist[node] - 1:
                stack.append(path + (nbr,))

    assert best_entities is not None
    hops = [PathHop(entity=best_entities[0])]
    for a, b in zip(best_entities, best_entities[1:]):
        # Parallel edges between the same pair collapse to the smallest
        # relation id, forward direction preferred.
        edge = min(
            ((rel, rev) for nbr, rel, rev in adj[a] if nbr == b),
            key=lambda e: (e[0], e[1]),
        )
        hops.append(PathHop(entity=b, relation=edge[0], reverse=edge[1]))
    return ReasoningPath(hops=tuple(hops))


# -- fitting ---------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    epochs: int = 200
    lr: float = 0.5
    seed: int = 0
    train_beta: bool = True
    train_table: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be > 0, got {self.lr}")


@dataclass(frozen=True)
class TrainingExample:
    """One labeled turn, reduced to what the scorer needs.

    ``const`` is <state, t_i> per item, ``affinity`` the max mention inner
    product per item (zeros when nothing was mentioned), ``gold_pos`` the
    position of the gold item in the item universe.
    """

    const: np.ndarray
    affinity: np.ndarray
    gold_pos: int
    masked: np.ndarray | None = None
    state: np.ndarray | None = None
    mention_rows: np.ndarray | None = None
    mention_argmax: np.ndarray | None = None


def build_examples(
    dialogs: Sequence,
    g: KnowledgeGraph,
    table: EntityTable,
    params: ScorerParams,
    encode_state: Callable[[DialogHistory], ConversationState],
) -> list[TrainingExample]:
    """Flatten gold-labeled turns into scorer-space training examples.

    A gold turn whose item would be masked away (already mentioned while
    masking is on) cannot be learned and is skipped.
    """
    item_ids = params.item_ids
    item_pos = {eid: i for i, eid in enumerate(item_ids)}
    rows = _item_rows(table, item_ids)
    items_mat = table.vectors[rows]
    examples: list[TrainingExample] = []
    for dialog in dialogs:
        for gold_turn, gold_item in dialog.gold:
            if gold_item not in item_pos:
                continue
            prefix = DialogHistory(
                turns=tuple(t for t in dialog.turns if t.turn_index < gold_turn)
            )
            if not any(t.speaker == "seeker" for t in prefix.turns):
                continue
            mentions = prefix.mentioned_entities()
            if params.mask_mentioned and gold_item in mentions:
                continue
            state = encode_state(prefix)
            const = items_mat @ state.vector
            mention_rows = [table.index[m] for m in sorted(mentions) if m in table.index]
            if mention_rows:
                rows_arr = np.asarray(mention_rows, dtype=np.intp)
                inner = items_mat @ table.vectors[rows_arr].T
                affinity = inner.max(axis=1)
                argmax = rows_arr[inner.argmax(axis=1)]
            else:
                rows_arr = None
                affinity = np.zeros(len(item_ids), dtype=np.float64)
                argmax = None
            masked = None
            if params.mask_mentioned and mentions:
                masked = np.asarray([eid in mentions for eid in item_ids], dtype=bool)
            examples.append(
                TrainingExample(
                    const=const,
                    affinity=affinity,
                    gold_pos=item_pos[gold_item],
                    masked=masked,
                    state=state.vector,
                    mention_rows=rows_arr,
                    mention_argmax=argmax,
                )
            )
    return examples


def loss_and_gradients(
    examples: Sequence[TrainingExample],
    bias: np.ndarray,
    beta: float,
) -> tuple[float, np.ndarray, float]:
    """Mean cross-entropy and its gradients with respect to bias and beta."""
    if not examples:
        raise ValueError("no training examples")
    total = 0.0
    grad_bias = np.zeros_like(bias)
    grad_beta = 0.0
    for ex in examples:
        scores = ex.const + beta * ex.affinity + bias
        if ex.masked is not None:
            scores = np.where(ex.masked, -np.inf, scores)
        shifted = scores - scores.max()
        exp = np.exp(shifted)
        probs = exp / exp.sum()
        total += -float(np.log(probs[ex.gold_pos]))
        delta = probs.copy()
        delta[ex.gold_pos] -= 1.0
        grad_bias += delta
        grad_beta += float(delta @ ex.affinity)
    n = len(examples)
    return total / n, grad_bias / n, grad_beta / n


@dataclass(frozen=True)
class FitResult:
    params: ScorerParams
    losses: tuple[float, ...]
    table: EntityTable


def fit(
    dialogs: Sequence,
    g: KnowledgeGraph,
    table: EntityTable,
    cfg: FitConfig,
    encode_state: Callable[[DialogHistory], ConversationState],
    initial: ScorerParams | None = None,
) -> FitResult:
    """Fit bias and beta by full-batch projected gradient descent.

    The returned params are the best iterate by training loss, so the final
    loss never exceeds the initial one; zero epochs return the initial
    parameters untouched. ``losses`` holds the full-batch loss before any
    update and after each epoch. With ``train_table`` on, item and mentioned
    entity rows of a copy of the table receive gradient updates as well.
    """
    params = initial if initial is not None else ScorerParams.zeros(g)
    work_table = table.with_vectors(table.vectors.copy()) if cfg.train_table else table
    examples = build_examples(dialogs, g, work_table, params, encode_state)
    if not examples:
        raise ValueError("dialogs contain no learnable gold-labeled turn")

    bias = params.bias.copy()
    beta = params.beta
    loss, _, _ = loss_and_gradients(examples, bias, beta)
    losses = [loss]
    best = (loss, bias.copy(), beta, work_table.vectors.copy() if cfg.train_table else None)

    rows = _item_rows(work_table, params.item_ids)
    for _ in range(cfg.epochs):
        loss, grad_bias, grad_beta = loss_and_gradients(examples, bias, beta)
        bias = bias - cfg.lr * grad_bias
        if cfg.train_beta:
            beta = max(0.0, beta - cfg.lr * grad_beta)
        if cfg.train_table:
            _table_step(examples, work_table, rows, bias, beta, cfg.lr)
            examples = _refresh_examples(examples, work_table, rows)
        loss, _, _ = loss_and_gradients(examples, bias, beta)
        losses.append(loss)
        if loss < best[0]:
            best = (loss, bias.copy(), beta, work_table.vectors.copy() if cfg.train_table else None)

    final = replace(params, bias=best[1], beta=best[2])
    final_table = work_table.with_vectors(best[3]) if best[3] is not None else table
    return FitResult(params=final, losses=tuple(losses), table=final_table)


def _table_step(
    examples: Sequence[TrainingExample],
    table: EntityTable,
    item_rows: np.ndarray,
    bias: np.ndarray,
    beta: float,
    lr: float,
) -> None:
    """One gradient step on the entity vectors themselves (in place)."""
    grad = np.zeros_like(table.vectors)
    n = len(examples)
    for ex in examples:
        scores = ex.const + beta * ex.affinity + bias
        if ex.masked is not None:
            scores = np.where(ex.masked, -np.inf, scores)
        shifted = scores - scores.max()
        exp = np.exp(shifted)
        probs = exp / exp.sum()
        delta = probs.copy()
        delta[ex.gold_pos] -= 1.0
        # d score_i / d t_i = state + beta * t_{m*(i)}; the argmax mention row
        # additionally receives beta * t_i from every item it dominates.
        contrib = np.outer(delta, ex.state)
        if ex.mention_argmax is not None:
            contrib += beta * delta[:, None] * table.vectors[ex.mention_argmax]
            np.add.at(
                grad,
                ex.mention_argmax,
                beta * delta[:, None] * table.vectors[item_rows],
            )
        np.add.at(grad, item_rows, contrib)
    table.vectors -= lr * grad / n


def _refresh_examples(
    examples: Sequence[TrainingExample],
    table: EntityTable,
    item_rows: np.ndarray,
) -> list[TrainingExample]:
    """Recompute table-dependent example fields after a table update."""
    items_mat = table.vectors[item_rows]
    refreshed = []
    for ex in examples:
        const = items_mat @ ex.state
        if ex.mention_rows is not None:
            inner = items_mat @ table.vectors[ex.mention_rows].T
            affinity = inner.max(axis=1)
            argmax = ex.mention_rows[inner.argmax(axis=1)]
        else:
            affinity = ex.affinity
            argmax = None
        refreshed.append(replace(ex, const=const, affinity=affinity, mention_argmax=argmax))
    return refreshed


# -- serialization ---------------------------------------------------------


def save_scorer(dest, params: ScorerParams, cfg: FitConfig) -> None:
    """Write params plus the fit configuration to one JSON document."""
    payload = {
        "params": params.to_json_dict(),
        "fit": {
            "epochs": cfg.epochs,
            "lr": cfg.lr,
            "seed": cfg.seed,
            "train_beta": cfg.train_beta,
            "train_table": cfg.train_table,
        },
    }
    with open(dest, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scorer(source) -> tuple[ScorerParams, FitConfig]:
    with open(source, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    params = ScorerParams.from_json_dict(payload["params"])
    f = payload["fit"]
    cfg = FitConfig(
        epochs=int(f["epochs"]),
        lr=float(f["lr"]),
        seed=int(f["seed"]),
        train_beta=bool(f["train_beta"]),
        train_table=bool(f["train_table"]),
    )
    return params, cfg
