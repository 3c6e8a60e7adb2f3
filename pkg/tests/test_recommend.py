from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from egcr.conversation import ConversationState, DialogTurn
from egcr.encoder import EntityTable
from egcr.errors import DimensionError
from egcr.kg import Entity, KnowledgeGraph, Mention, RelationType, Triple
from egcr.recommend import (
    FitConfig,
    PathHop,
    ReasoningPath,
    Recommendation,
    ScorerParams,
    TrainingExample,
    build_examples,
    extract_reasoning_path,
    fit,
    load_scorer,
    loss_and_gradients,
    recommend_top_k,
    save_scorer,
    score_entities,
)

from oracles import random_graph, reference_edge, reference_path_entities


def tiny_graph():
    return KnowledgeGraph.build(
        [
            Entity(id=0, name="A", kind="item"),
            Entity(id=1, name="B", kind="item"),
            Entity(id=10, name="G", kind="attribute"),
        ],
        [RelationType(id=0, label="has_genre")],
        [Triple(0, 0, 10), Triple(1, 0, 10)],
    )


def tiny_table(g):
    # rows in registry order 0, 1, 10
    return EntityTable(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), g.positions)


def state(vec):
    return ConversationState(vector=np.asarray(vec, dtype=np.float64), turn_count=1)


# -- parameters ------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError, match="sorted"):
        ScorerParams(item_ids=(1, 0), bias=np.zeros(2))
    with pytest.raises(DimensionError):
        ScorerParams(item_ids=(0, 1), bias=np.zeros(3))
    with pytest.raises(ValueError, match="beta"):
        ScorerParams(item_ids=(0,), bias=np.zeros(1), beta=-0.1)
    with pytest.raises(ValueError, match="finite"):
        ScorerParams(item_ids=(0,), bias=np.array([np.inf]))


def test_params_zeros_covers_the_item_universe():
    p = ScorerParams.zeros(tiny_graph())
    assert p.item_ids == (0, 1)
    np.testing.assert_array_equal(p.bias, np.zeros(2))
    assert p.beta == 0.0
    assert p.mask_mentioned


def test_params_json_round_trip():
    p = ScorerParams(item_ids=(0, 3), bias=np.array([0.5, -1.25]), beta=2.0, mask_mentioned=False)
    q = ScorerParams.from_json_dict(p.to_json_dict())
    assert q.item_ids == p.item_ids
    np.testing.assert_array_equal(q.bias, p.bias)
    assert q.beta == p.beta
    assert q.mask_mentioned is False


# -- scoring ---------------------------------------------------------------


def test_scores_by_hand():
    g = tiny_graph()
    table = tiny_table(g)
    params = ScorerParams(item_ids=(0, 1), bias=np.array([0.1, 0.0]), beta=0.5)
    scores = score_entities(state([2.0, 1.0]), {10}, table, params)
    # score(0) = <[2,1],[1,0]> + 0.5 * <[1,1],[1,0]> + 0.1
    assert scores[0] == pytest.approx(2.6)
    assert scores[1] == pytest.approx(1.5)


def test_scores_without_mentions_drop_the_affinity_term():
    g = tiny_graph()
    params = ScorerParams(item_ids=(0, 1), bias=np.zeros(2), beta=100.0)
    scores = score_entities(state([2.0, 1.0]), set(), tiny_table(g), params)
    assert scores[0] == pytest.approx(2.0)
    assert scores[1] == pytest.approx(1.0)


def test_mentioned_item_is_masked_to_minus_inf():
    g = tiny_graph()
    params = ScorerParams(item_ids=(0, 1), bias=np.zeros(2), beta=0.5)
    scores = score_entities(state([2.0, 1.0]), {0, 10}, tiny_table(g), params)
    assert scores[0] == float("-inf")
    assert scores[1] == pytest.approx(1.5)


def test_masking_can_be_disabled():
    g = tiny_graph()
    params = ScorerParams(item_ids=(0, 1), bias=np.array([0.1, 0.0]), beta=0.5, mask_mentioned=False)
    scores = score_entities(state([2.0, 1.0]), {0}, tiny_table(g), params)
    assert scores[0] == pytest.approx(2.6)


def test_score_rejects_unknown_mention_and_bad_state():
    g = tiny_graph()
    params = ScorerParams.zeros(g)
    with pytest.raises(KeyError, match="99"):
        score_entities(state([0.0, 0.0]), {99}, tiny_table(g), params)
    with pytest.raises(DimensionError):
        score_entities(state([0.0, 0.0, 0.0]), set(), tiny_table(g), params)


# -- ranking ---------------------------------------------------------------


def test_top_k_basic_order():
    rec = recommend_top_k({5: 1.0, 7: 3.0, 2: 2.0}, k=2, query_turn=4)
    assert rec.ranked == ((7, 3.0), (2, 2.0))
    assert rec.query_turn == 4
    assert rec.entity_ids() == [7, 2]


def test_top_k_tie_breaks_by_id():
    rec = recommend_top_k({9: 1.0, 3: 1.0, 6: 1.0}, k=3)
    assert rec.entity_ids() == [3, 6, 9]


def test_top_k_drops_masked_scores():
    rec = recommend_top_k({1: float("-inf"), 2: 0.5, 3: float("nan")}, k=5)
    assert rec.entity_ids() == [2]


def test_top_k_k_zero_and_negative():
    assert recommend_top_k({1: 1.0}, k=0).ranked == ()
    with pytest.raises(ValueError):
        recommend_top_k({1: 1.0}, k=-1)


@given(
    st.dictionaries(
        st.integers(min_value=0, max_value=30),
        st.floats(min_value=-50, max_value=50, allow_nan=False),
        max_size=12,
    ),
    st.integers(min_value=0, max_value=15),
)
def test_top_k_agrees_with_full_sort(scores, k):
    want = sorted(scores.items(), key=lambda p: (-p[1], p[0]))[:k]
    assert list(recommend_top_k(scores, k).ranked) == want


# -- reasoning paths -------------------------------------------------------


def test_path_empty_without_mentions(movies):
    assert extract_reasoning_path(movies, set(), 0).is_empty


def test_path_mentioned_recommendation_is_single_hop(movies):
    path = extract_reasoning_path(movies, {0, 10}, 0)
    assert path.hops == (PathHop(entity=0),)
    assert path.edge_count == 0


def test_path_direct_edge_orientation(movies):
    # the stored triple is (0, has_genre, 10); walking 10 -> 0 crosses it backwards
    path = extract_reasoning_path(movies, {10}, 0)
    assert path.hops == (PathHop(entity=10), PathHop(entity=0, relation=0, reverse=True))


def test_path_two_hops_prefers_smallest_id_sequence(movies):
    # 1 and 0 share Action (10), Daniel Craig (12) and spy (20); the
    # attribute-only candidates 10 and 12 beat 20, then 10 wins on id order
    path = extract_reasoning_path(movies, {1}, 0)
    assert path.entity_ids() == (1, 10, 0)
    assert path.hops[1] == PathHop(entity=10, relation=0, reverse=False)
    assert path.hops[2] == PathHop(entity=0, relation=0, reverse=True)


def test_path_attribute_intermediate_beats_lower_id_concept():
    g = KnowledgeGraph.build(
        [
            Entity(id=0, name="A", kind="item"),
            Entity(id=1, name="B", kind="item"),
            Entity(id=2, name="theme", kind="concept"),
            Entity(id=5, name="genre", kind="attribute"),
        ],
        [RelationType(id=0, label="r")],
        [Triple(0, 0, 2), Triple(1, 0, 2), Triple(0, 0, 5), Triple(1, 0, 5)],
    )
    path = extract_reasoning_path(g, {0}, 1)
    assert path.entity_ids() == (0, 5, 1)


def test_path_out_of_budget_is_empty(movies):
    # Paddington (2) only touches Comedy (11); nothing links it to 0 in two hops
    assert extract_reasoning_path(movies, {2}, 0).is_empty
    assert extract_reasoning_path(movies, {11}, 0, max_length=2).is_empty


def test_path_budget_extension_finds_longer_routes(movies):
    # 11 - 2 is one edge, but 11 to 0 needs more than two
    path = extract_reasoning_path(movies, {11}, 2, max_length=2)
    assert path.entity_ids() == (11, 2)
    assert extract_reasoning_path(movies, {11}, 0, max_length=4).is_empty  # still disconnected


def test_path_parallel_edges_collapse_to_smallest_label():
    g = KnowledgeGraph.build(
        [Entity(id=5, name="A", kind="item"), Entity(id=6, name="B", kind="item")],
        [RelationType(id=0, label="r0"), RelationType(id=1, label="r1")],
        [Triple(5, 1, 6), Triple(6, 0, 5)],
    )
    path = extract_reasoning_path(g, {5}, 6)
    assert path.hops[1] == PathHop(entity=6, relation=0, reverse=True)


def test_path_rejects_unknown_entities(movies):
    with pytest.raises(KeyError):
        extract_reasoning_path(movies, {0}, 999)
    with pytest.raises(KeyError):
        extract_reasoning_path(movies, {999}, 0)


def test_reasoning_path_accessors():
    p = ReasoningPath(hops=(PathHop(1), PathHop(2, relation=0), PathHop(3, relation=1, reverse=True)))
    assert p.entity_ids() == (1, 2, 3)
    assert p.edge_count == 2
    assert not p.is_empty
    assert ReasoningPath().is_empty


@pytest.mark.parametrize("trial", range(20))
def test_path_matches_exhaustive_enumeration(trial):
    rng = np.random.default_rng(2000 + trial)
    g = random_graph(rng, max_nodes=15, max_relations=3, max_triples=30)
    ids = g.entity_ids()
    rec = int(rng.choice(ids))
    n_mentions = min(int(rng.integers(1, 4)), len(ids))
    mentions = {int(m) for m in rng.choice(ids, size=n_mentions, replace=False)}
    got = extract_reasoning_path(g, mentions, rec)
    want = reference_path_entities(g, mentions, rec, max_length=2)
    if want is None:
        assert got.is_empty
    else:
        assert got.entity_ids() == want
        for a, b, hop in zip(want, want[1:], got.hops[1:]):
            assert (hop.relation, hop.reverse) == reference_edge(g, a, b)


# -- training examples -----------------------------------------------------


def seeker_turn(i, text="x", mentions=()):
    return DialogTurn(turn_index=i, speaker="seeker", text=text, mentions=mentions)


def rec_turn(i, text="y"):
    return DialogTurn(turn_index=i, speaker="recommender", text=text)


def mention_of(eid):
    return Mention(start=0, end=1, surface=f"@{eid}", entity=eid)


def fixed_state(vec):
    arr = np.asarray(vec, dtype=np.float64)
    return lambda history: ConversationState(vector=arr, turn_count=len(history))


def test_build_examples_numbers():
    g = tiny_graph()
    table = tiny_table(g)
    params = ScorerParams.zeros(g)
    dialogs = [
        SimpleNamespace(
            turns=(seeker_turn(1, mentions=(mention_of(10),)), rec_turn(2)),
            gold=((2, 1),),
        )
    ]
    examples = build_examples(dialogs, g, table, params, fixed_state([1.0, 1.0]))
    assert len(examples) == 1
    ex = examples[0]
    np.testing.assert_allclose(ex.const, np.array([1.0, 1.0]))
    np.testing.assert_allclose(ex.affinity, np.array([1.0, 1.0]))
    assert ex.gold_pos == 1


def test_build_examples_skips_unlearnable_turns():
    g = tiny_graph()
    table = tiny_table(g)
    params = ScorerParams.zeros(g)
    dialogs = [
        # gold at turn 1: no seeker prefix
        SimpleNamespace(turns=(rec_turn(1), seeker_turn(2)), gold=((1, 0),)),
        # gold item is not in the item universe
        SimpleNamespace(turns=(seeker_turn(1),), gold=((2, 10),)),
        # gold item already mentioned while masking is on
        SimpleNamespace(
            turns=(seeker_turn(1, mentions=(mention_of(0),)),), gold=((2, 0),)
        ),
    ]
    assert build_examples(dialogs, g, table, params, fixed_state([0.0, 0.0])) == []


def test_build_examples_keeps_mentioned_gold_without_masking():
    g = tiny_graph()
    params = ScorerParams.zeros(g)
    params = ScorerParams(
        item_ids=params.item_ids, bias=params.bias, beta=0.0, mask_mentioned=False
    )
    dialogs = [
        SimpleNamespace(turns=(seeker_turn(1, mentions=(mention_of(0),)),), gold=((2, 0),))
    ]
    examples = build_examples(dialogs, g, tiny_table(g), params, fixed_state([0.0, 0.0]))
    assert len(examples) == 1
    assert examples[0].masked is None


# -- loss and gradients ----------------------------------------------------


def random_examples(rng, n_items=5, n_examples=4, with_mask=True):
    examples = []
    for i in range(n_examples):
        masked = None
        gold = int(rng.integers(n_items))
        if with_mask and i % 2 == 1:
            masked = np.zeros(n_items, dtype=bool)
            masked[(gold + 1) % n_items] = True
        examples.append(
            TrainingExample(
                const=rng.normal(size=n_items),
                affinity=rng.normal(size=n_items),
                gold_pos=gold,
                masked=masked,
            )
        )
    return examples


def finite_difference(examples, bias, beta, eps=1e-6):
    grad_bias = np.zeros_like(bias)
    for i in range(bias.size):
        up, down = bias.copy(), bias.copy()
        up[i] += eps
        down[i] -= eps
        lu, _, _ = loss_and_gradients(examples, up, beta)
        ld, _, _ = loss_and_gradients(examples, down, beta)
        grad_bias[i] = (lu - ld) / (2 * eps)
    lu, _, _ = loss_and_gradients(examples, bias, beta + eps)
    ld, _, _ = loss_and_gradients(examples, bias, beta - eps)
    return grad_bias, (lu - ld) / (2 * eps)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    examples = random_examples(rng)
    bias = rng.normal(size=5)
    beta = 0.7
    _, grad_bias, grad_beta = loss_and_gradients(examples, bias, beta)
    fd_bias, fd_beta = finite_difference(examples, bias, beta)
    np.testing.assert_allclose(grad_bias, fd_bias, rtol=1e-4, atol=1e-8)
    assert grad_beta == pytest.approx(fd_beta, rel=1e-4)
    assert np.abs(grad_bias).max() > 0.0


def test_loss_is_mean_over_examples():
    rng = np.random.default_rng(1)
    examples = random_examples(rng, n_examples=3, with_mask=False)
    bias = np.zeros(5)
    total = sum(loss_and_gradients([ex], bias, 0.5)[0] for ex in examples)
    loss, _, _ = loss_and_gradients(examples, bias, 0.5)
    assert loss == pytest.approx(total / 3)


def test_loss_rejects_empty_batch():
    with pytest.raises(ValueError):
        loss_and_gradients([], np.zeros(2), 0.0)


# -- fitting ---------------------------------------------------------------


def planted_fit_setup(gold_item=1):
    g = KnowledgeGraph.build(
        [
            Entity(id=0, name="A", kind="item"),
            Entity(id=1, name="B", kind="item"),
            Entity(id=2, name="C", kind="item"),
        ],
        [RelationType(id=0, label="r")],
        [],
    )
    table = EntityTable(
        np.array([[1.0, 0.0], [0.9, 0.1], [-1.0, 0.0]]), g.positions
    )
    dialogs = [
        SimpleNamespace(
            turns=(seeker_turn(1, mentions=(mention_of(0),)),),
            gold=((2, gold_item),),
        )
        for _ in range(3)
    ]
    return g, table, dialogs


def test_fit_reduces_loss_and_learns_positive_beta():
    g, table, dialogs = planted_fit_setup(gold_item=1)
    result = fit(
        dialogs, g, table, FitConfig(epochs=50, lr=0.5), fixed_state([0.0, 0.0])
    )
    assert result.losses[0] == pytest.approx(np.log(2.0))  # uniform over the 2 unmasked items
    assert min(result.losses) < result.losses[0]
    assert result.params.beta > 0.0
    final, _, _ = loss_and_gradients(
        build_examples(dialogs, g, table, result.params, fixed_state([0.0, 0.0])),
        result.params.bias,
        result.params.beta,
    )
    assert final <= result.losses[0]


def test_fit_clamps_beta_at_zero():
    # affinity points away from the gold item, so beta can only hurt
    g, table, dialogs = planted_fit_setup(gold_item=2)
    result = fit(
        dialogs, g, table, FitConfig(epochs=30, lr=0.5), fixed_state([0.0, 0.0])
    )
    assert result.params.beta == 0.0


def test_fit_zero_epochs_returns_initial():
    g, table, dialogs = planted_fit_setup()
    initial = ScorerParams.zeros(g, beta=0.25)
    result = fit(
        dialogs, g, table, FitConfig(epochs=0, lr=0.5), fixed_state([0.0, 0.0]), initial=initial
    )
    assert result.losses == (result.losses[0],)
    np.testing.assert_array_equal(result.params.bias, initial.bias)
    assert result.params.beta == 0.25


def test_fit_can_freeze_beta():
    g, table, dialogs = planted_fit_setup()
    initial = ScorerParams.zeros(g, beta=0.125)
    result = fit(
        dialogs,
        g,
        table,
        FitConfig(epochs=20, lr=0.5, train_beta=False),
        fixed_state([0.0, 0.0]),
        initial=initial,
    )
    assert result.params.beta == 0.125
    assert min(result.losses) < result.losses[0]


def test_fit_best_iterate_never_worse_than_start():
    g, table, dialogs = planted_fit_setup()
    result = fit(
        dialogs, g, table, FitConfig(epochs=5, lr=50.0), fixed_state([0.0, 0.0])
    )
    examples = build_examples(dialogs, g, table, result.params, fixed_state([0.0, 0.0]))
    final, _, _ = loss_and_gradients(examples, result.params.bias, result.params.beta)
    assert final <= result.losses[0] + 1e-12


def test_fit_without_learnable_examples_raises():
    g, table, _ = planted_fit_setup()
    dialogs = [SimpleNamespace(turns=(rec_turn(1),), gold=((1, 0),))]
    with pytest.raises(ValueError, match="learnable"):
        fit(dialogs, g, table, FitConfig(epochs=1), fixed_state([0.0, 0.0]))


def test_fit_table_mode_updates_vectors_and_keeps_input_frozen():
    g, table, dialogs = planted_fit_setup(gold_item=1)
    before = table.vectors.copy()
    result = fit(
        dialogs,
        g,
        table,
        FitConfig(epochs=25, lr=0.25, train_table=True),
        fixed_state([0.3, -0.2]),
    )
    np.testing.assert_array_equal(table.vectors, before)
    assert not np.array_equal(result.table.vectors, before)
    assert min(result.losses) < result.losses[0]


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(epochs=-1)
    with pytest.raises(ValueError):
        FitConfig(lr=0.0)


def test_scorer_serialization_round_trip(tmp_path):
    params = ScorerParams(item_ids=(0, 4), bias=np.array([1.5, -0.5]), beta=3.25)
    cfg = FitConfig(epochs=17, lr=0.125, seed=3, train_beta=False, train_table=True)
    path = tmp_path / "scorer.json"
    save_scorer(path, params, cfg)
    loaded_params, loaded_cfg = load_scorer(path)
    assert loaded_params.item_ids == params.item_ids
    np.testing.assert_array_equal(loaded_params.bias, params.bias)
    assert loaded_params.beta == params.beta
    assert loaded_cfg == cfg


def test_recommendation_from_scores_end_to_end():
    g = tiny_graph()
    params = ScorerParams(item_ids=(0, 1), bias=np.array([0.1, 0.0]), beta=0.5)
    scores = score_entities(state([2.0, 1.0]), {10}, tiny_table(g), params)
    rec = recommend_top_k(scores, k=2, query_turn=3)
    assert isinstance(rec, Recommendation)
    assert rec.entity_ids() == [0, 1]
