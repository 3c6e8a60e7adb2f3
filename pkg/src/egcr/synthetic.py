"""Deterministic toy corpus with planted structure.

Fifty items, ten genre attributes. Items 0..19 form ten pairs and each pair
shares exactly one genre; items 20..49 carry no attribute at all. Genre
edges are materialized in both directions so graph convolution propagates
between pair partners. Every generated dialog mentions one item of a pair
and labels the partner as gold, which gives a learnable planted rule: the
right recommendation is always the unique item sharing a genre with the
mentioned one.
"""

from __future__ import annotations

import numpy as np

from .evaluation import Dialog
from .conversation import DialogTurn
from .kg import Entity, KnowledgeGraph, RelationType, Triple, link_mentions
from .reviews import Review

N_ITEMS = 50
N_PAIRS = 10
GENRE_BASE = 100

_SEEKER_SHAPES = (
    "I really enjoyed @{item} recently , can you recommend something similar ?",
    "Watched @{item} last night and loved it , what next ?",
    "Something in the spirit of @{item} would be great .",
    "My favourite so far is @{item} , any suggestions ?",
)


def planted_graph() -> KnowledgeGraph:
    entities = [
        Entity(id=i, name=f"Movie {i:02d}", kind="item") for i in range(N_ITEMS)
    ]
    entities += [
        Entity(id=GENRE_BASE + j, name=f"Genre {j}", kind="attribute")
        for j in range(N_PAIRS)
    ]
    relations = [RelationType(id=0, label="has_genre")]
    triples = []
    for j in range(N_PAIRS):
        genre = GENRE_BASE + j
        for item in (2 * j, 2 * j + 1):
            triples.append(Triple(head=item, relation=0, tail=genre))
            triples.append(Triple(head=genre, relation=0, tail=item))
    return KnowledgeGraph.build(entities, relations, triples)


def planted_reviews(seed: int = 0) -> dict[int, list[Review]]:
    rng = np.random.default_rng([seed, 10])
    moods = ("tense", "warm", "clever", "slow", "gorgeous", "funny")
    by_item: dict[int, list[Review]] = {}
    rid = 0
    for item in range(N_ITEMS):
        n = int(rng.integers(1, 4))
        reviews = []
        for _ in range(n):
            mood = moods[int(rng.integers(0, len(moods)))]
            text = f"Really {mood} picture , movie {item:02d} stayed with me for days ."
            reviews.append(
                Review(item=item, review_id=rid, text=text, helpful=int(rng.integers(0, 50)))
            )
            rid += 1
        by_item[item] = reviews
    return by_item


def planted_dialogs(n_dialogs: int, seed: int, g: KnowledgeGraph | None = None) -> list[Dialog]:
    """Sample dialogs whose gold item is the pair partner of the mention."""
    if g is None:
        g = planted_graph()
    rng = np.random.default_rng([seed, 11])
    dialogs = []
    for i in range(n_dialogs):
        pair = int(rng.integers(0, N_PAIRS))
        side = int(rng.integers(0, 2))
        mentioned = 2 * pair + side
        gold = 2 * pair + (1 - side)
        shape = _SEEKER_SHAPES[int(rng.integers(0, len(_SEEKER_SHAPES)))]
        seeker_text = shape.format(item=mentioned)
        agent_text = f"You should watch Movie {gold:02d} ."
        turns = (
            DialogTurn(
                turn_index=1,
                speaker="seeker",
                text=seeker_text,
                mentions=tuple(link_mentions(seeker_text, g)),
            ),
            DialogTurn(
                turn_index=2,
                speaker="recommender",
                text=agent_text,
                mentions=tuple(link_mentions(agent_text, g)),
            ),
        )
        dialogs.append(
            Dialog(conversation_id=f"planted-{seed}-{i}", turns=turns, gold=((2, gold),))
        )
    return dialogs
