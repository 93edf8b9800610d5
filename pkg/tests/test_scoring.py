import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hiprune import (
    BoundsError,
    ScoreVector,
    SynthSpec,
    TokenGrid,
    UnsupportedError,
    aggregate_scores,
    cls_scores,
    generate,
    rank_trajectory,
    rank_transform,
)

from conftest import random_softmax_stack, stack_from_layers


def test_aggregate_is_column_sums():
    stack = stack_from_layers(
        [[[[0.2, 0.5, 0.3], [0.1, 0.6, 0.3], [0.3, 0.4, 0.3]]]],
        TokenGrid(1, 3),
    )
    scores = aggregate_scores(stack, 0)
    np.testing.assert_allclose(scores.values, [0.6, 1.5, 0.9], atol=1e-6)


def test_aggregate_mean_over_identical_heads():
    mat = [[0.2, 0.5, 0.3], [0.1, 0.6, 0.3], [0.3, 0.4, 0.3]]
    stack = stack_from_layers([[mat, mat]], TokenGrid(1, 3))
    scores = aggregate_scores(stack, 0)
    np.testing.assert_allclose(scores.values, [0.6, 1.5, 0.9], atol=1e-6)


def test_aggregate_drops_cls_column():
    stack = stack_from_layers(
        [[[[0.4, 0.3, 0.3], [0.2, 0.5, 0.3], [0.1, 0.1, 0.8]]]],
        TokenGrid(1, 2),
        cls_count=1,
    )
    scores = aggregate_scores(stack, 0)
    np.testing.assert_allclose(scores.values, [0.9, 1.4], atol=1e-6)


def test_aggregate_can_exclude_cls_queries():
    stack = stack_from_layers(
        [[[[0.4, 0.3, 0.3], [0.2, 0.5, 0.3], [0.1, 0.1, 0.8]]]],
        TokenGrid(1, 2),
        cls_count=1,
    )
    scores = aggregate_scores(stack, 0, include_cls_queries=False)
    np.testing.assert_allclose(scores.values, [0.6, 1.1], atol=1e-6)


def test_aggregate_layer_bounds():
    stack = random_softmax_stack(3, TokenGrid(2, 2), layers=2, heads=1)
    with pytest.raises(BoundsError):
        aggregate_scores(stack, 2)
    with pytest.raises(BoundsError):
        aggregate_scores(stack, -1)


def test_cls_scores_single_head():
    stack = stack_from_layers(
        [[[[0.4, 0.3, 0.3], [0.2, 0.5, 0.3], [0.1, 0.1, 0.8]]]],
        TokenGrid(1, 2),
        cls_count=1,
    )
    np.testing.assert_allclose(cls_scores(stack, 0).values, [0.3, 0.3], atol=1e-6)


def test_cls_scores_mean_over_heads():
    head_a = [[0.4, 0.3, 0.3], [0.2, 0.5, 0.3], [0.1, 0.1, 0.8]]
    head_b = [[0.2, 0.5, 0.3], [0.3, 0.3, 0.4], [0.6, 0.2, 0.2]]
    stack = stack_from_layers([[head_a, head_b]], TokenGrid(1, 2), cls_count=1)
    np.testing.assert_allclose(cls_scores(stack, 0).values, [0.4, 0.3], atol=1e-6)


def test_cls_scores_without_cls_token():
    stack = random_softmax_stack(5, TokenGrid(2, 2), layers=1, heads=1)
    with pytest.raises(UnsupportedError):
        cls_scores(stack, 0)


def test_rank_transform_documented_example():
    ranks = rank_transform(ScoreVector(np.array([0.2, 0.3, 0.5, 0.1]), 0))
    assert ranks.values.tolist() == [1, 2, 3, 0]


def test_rank_transform_tie_break():
    assert rank_transform(ScoreVector(np.array([0.5, 0.5]), 0)).values.tolist() == [0, 1]
    assert rank_transform(
        ScoreVector(np.array([1.0, 1.0, 0.5, 1.0]), 0)
    ).values.tolist() == [1, 2, 0, 3]


def test_rank_transform_increasing_is_identity():
    values = np.linspace(0.0, 1.0, 17)
    ranks = rank_transform(ScoreVector(values, 0))
    assert ranks.values.tolist() == list(range(17))


@given(
    scores=st.lists(st.integers(0, 10**6), min_size=1, max_size=40),
    scale=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False),
)
def test_rank_scale_invariance(scores, scale):
    base = ScoreVector(np.array(scores, dtype=np.float64), 0)
    scaled = ScoreVector(base.values * scale, 0)
    assert rank_transform(base).values.tolist() == rank_transform(scaled).values.tolist()


@given(scores=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40))
def test_rank_output_is_permutation(scores):
    ranks = rank_transform(ScoreVector(np.array(scores), 0))
    assert sorted(ranks.values.tolist()) == list(range(len(scores)))


def test_score_mass_conservation():
    # each attention row sums to 1, so patch plus cls column mass is n_total
    stack = random_softmax_stack(11, TokenGrid(4, 4), layers=3, heads=2, cls_count=1)
    for layer in range(stack.layers):
        patch_mass = aggregate_scores(stack, layer).values.sum()
        cls_mass = stack.data[layer, :, :, 0].sum(dtype=np.float64) / stack.heads
        assert abs(patch_mass + cls_mass - stack.n_total) < 1e-3


def test_aggregate_length_matches_grid():
    stack = random_softmax_stack(13, TokenGrid(3, 5), layers=2, heads=2, cls_count=1)
    assert len(aggregate_scores(stack, 0)) == 15


def test_trajectory_rows_are_permutations():
    stack = random_softmax_stack(17, TokenGrid(3, 4), layers=4, heads=2)
    matrix = rank_trajectory(stack)
    assert matrix.shape == (4, 12)
    for row in matrix:
        assert sorted(row.tolist()) == list(range(12))


def test_trajectory_single_layer():
    stack = random_softmax_stack(19, TokenGrid(2, 3), layers=1, heads=1)
    matrix = rank_trajectory(stack)
    expected = rank_transform(aggregate_scores(stack, 0)).values
    assert matrix.shape == (1, 6)
    assert matrix[0].tolist() == expected.tolist()


def test_trajectory_monotone_layers_have_equal_rank_rows():
    # layer 1 = 0.5 * layer 0 + 0.5 * uniform keeps rows stochastic and
    # maps column sums through an increasing affine function
    base = random_softmax_stack(23, TokenGrid(3, 3), layers=1, heads=2)
    n = base.n_total
    uniform = np.full((base.heads, n, n), 1.0 / n, dtype=np.float32)
    data = np.stack([base.data[0], 0.5 * base.data[0] + 0.5 * uniform])
    stack = stack_from_layers(data, base.grid)
    stack.validate()
    matrix = rank_trajectory(stack)
    assert matrix[0].tolist() == matrix[1].tolist()


def test_generated_stack_scores_are_nonnegative():
    stack = generate(SynthSpec(grid=TokenGrid(4, 4), layers=2, heads=2, seed=3))
    for layer in range(stack.layers):
        assert (aggregate_scores(stack, layer).values >= 0).all()
