"""Review selection, pooling and entity enrichment.

For every item the corpus may carry user reviews with a helpfulness score.
The top ``k_max`` (30 by default) reviews by helpfulness are kept, embedded
with the shared text encoder, mean-pooled, projected into model space and
blended into the item's graph embedding with a convex combination. Items
without reviews keep their graph embedding untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .conversation import LinearProjection, TextEncoder
from .encoder import EntityTable
from .errors import DimensionError, ParseError
from .kg import KnowledgeGraph

MAX_REVIEWS_PER_ITEM = 30
ENCODER_TOKEN_CAP = 512


@dataclass(frozen=True)
class Review:
    item: int
    review_id: int
    text: str
    helpful: int

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"review {self.review_id} has empty text")
        if self.helpful < 0:
            raise ValueError(f"review {self.review_id} has negative helpful score")


@dataclass(frozen=True)
class ReviewSet:
    """Selected reviews for one item, ordered by the selection criterion."""

    item: int | None
    reviews: tuple[Review, ...]

    def __post_init__(self) -> None:
        if self.reviews and self.item is None:
            raise ValueError("non-empty review set needs an item id")
        if any(r.item != self.item for r in self.reviews):
            raise ValueError("all reviews in a set must belong to the same item")

    def __len__(self) -> int:
        return len(self.reviews)


@dataclass(frozen=True)
class PooledReviews:
    """Mean review embedding plus a flag for the no-reviews case."""

    vector: np.ndarray
    empty: bool


def select_reviews(
    raw: Iterable[Review],
    k_max: int = MAX_REVIEWS_PER_ITEM,
    item: int | None = None,
) -> ReviewSet:
    """Keep the ``k_max`` most helpful reviews.

    Order is by helpfulness descending with review_id ascending as the tie
    break, so selection is a pure function of the input set. An empty input
    yields a valid empty set.
    """
    pool = list(raw)
    if item is None and pool:
        item = pool[0].item
    pool.sort(key=lambda r: (-r.helpful, r.review_id))
    return ReviewSet(item=item, reviews=tuple(pool[:k_max]))


def truncate_tokens(text: str, cap: int = ENCODER_TOKEN_CAP) -> str:
    """Cap whitespace token count, keeping the opening of the text."""
    tokens = text.split()
    if len(tokens) <= cap:
        return text
    return " ".join(tokens[:cap])


def embed_reviews(rs: ReviewSet, enc: TextEncoder) -> PooledReviews:
    """Mean of the encoded review texts, in text space (d_text)."""
    if not rs.reviews:
        return PooledReviews(vector=np.zeros(enc.d_text, dtype=np.float64), empty=True)
    stacked = np.stack([enc.encode(truncate_tokens(r.text)) for r in rs.reviews])
    return PooledReviews(vector=stacked.mean(axis=0), empty=False)


def project_reviews(pooled: PooledReviews, proj: LinearProjection) -> PooledReviews:
    """Carry the pooled vector into model space, preserving the empty flag."""
    return PooledReviews(vector=proj(pooled.vector), empty=pooled.empty)


def enrich_entity(
    entity_vec: np.ndarray,
    review_vec: PooledReviews,
    alpha: float = 0.5,
) -> np.ndarray:
    """Convex blend ``alpha * entity + (1 - alpha) * reviews``.

    The empty flag short-circuits to the unchanged entity vector. Both
    vectors must already live in the same space.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if review_vec.empty:
        return entity_vec
    if review_vec.vector.shape != entity_vec.shape:
        raise DimensionError(
            f"entity vector {entity_vec.shape} vs review vector {review_vec.vector.shape}"
        )
    return alpha * entity_vec + (1.0 - alpha) * review_vec.vector


def load_reviews(source: str | Path) -> dict[int, list[Review]]:
    """Read a JSONL review corpus keyed ``{"item_id","review_id","text","helpful"}``."""
    path = Path(source)
    by_item: dict[int, list[Review]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=lineno, source=path.name) from None
            try:
                review = Review(
                    item=int(record["item_id"]),
                    review_id=int(record["review_id"]),
                    text=str(record["text"]),
                    helpful=int(record["helpful"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad review record: {exc}", line=lineno, source=path.name) from None
            by_item.setdefault(review.item, []).append(review)
    return by_item


def save_reviews(by_item: Mapping[int, list[Review]], dest: str | Path) -> None:
    """Serialize a review corpus to the JSONL format read by load_reviews."""
    with Path(dest).open("w", encoding="utf-8") as fh:
        for item_id in sorted(by_item):
            for r in sorted(by_item[item_id], key=lambda r: r.review_id):
                record = {
                    "item_id": r.item,
                    "review_id": r.review_id,
                    "text": r.text,
                    "helpful": r.helpful,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def enrich_table(
    table: EntityTable,
    g: KnowledgeGraph,
    reviews_by_item: Mapping[int, list[Review]],
    enc: TextEncoder,
    proj: LinearProjection,
    alpha: float = 0.5,
    k_max: int = MAX_REVIEWS_PER_ITEM,
) -> EntityTable:
    """Blend review evidence into every item row of an encoded table.

    Non-item rows and items without reviews pass through unchanged.
    """
    vectors = table.vectors.copy()
    for item_id in g.items():
        raw = reviews_by_item.get(item_id, [])
        if not raw:
            continue
        pooled = project_reviews(embed_reviews(select_reviews(raw, k_max, item=item_id), enc), proj)
        vectors[table.index[item_id]] = enrich_entity(table.row(item_id), pooled, alpha)
    return table.with_vectors(vectors)
