import numpy as np
import pytest

from hiprune import AttentionStack, SplitMix64, TokenGrid, softmax_attention


def stack_from_layers(layer_mats, grid: TokenGrid, cls_count: int = 0) -> AttentionStack:
    """Build a stack from nested [layer][head][query][key] values."""
    data = np.asarray(layer_mats, dtype=np.float32)
    return AttentionStack(data=data, grid=grid, cls_count=cls_count)


def random_softmax_stack(
    seed: int, grid: TokenGrid, layers: int, heads: int, cls_count: int = 0
) -> AttentionStack:
    """Row-stochastic stack from softmaxed uniform logits; supports a class token."""
    n_total = grid.n_patches + cls_count
    stream = SplitMix64(seed)
    data = np.empty((layers, heads, n_total, n_total), dtype=np.float32)
    for layer in range(layers):
        logits = 4.0 * stream.uniforms(heads * n_total * n_total).reshape(
            heads, n_total, n_total
        )
        data[layer] = softmax_attention(logits)
    return AttentionStack(data=data, grid=grid, cls_count=cls_count)


@pytest.fixture
def grid_3x3() -> TokenGrid:
    return TokenGrid(3, 3)
