"""Tests for attention, pooling and the other encoder layers."""

import math
from collections.abc import Mapping

import numpy as np
import pytest

from txtrec.errors import ContractError, DimensionError, SequenceLengthError, VocabularyError
from txtrec.nn import (
    AttentionParams,
    EncoderBlockParams,
    FeedForwardParams,
    add_positional,
    attention_weights,
    block_param_shapes,
    cross_entropy_loss,
    embedding_lookup,
    encoder_block,
    feed_forward,
    layer_norm,
    mean_max_pool,
    multi_head_self_attention,
    padding_mask,
    validate_padding_mask,
)
from txtrec.tensor import Tensor, check_gradients, ops


def attention_arrays(d: int, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {name: rng.normal(scale=0.5, size=(d, d)) for name in ("w_q", "w_k", "w_v", "w_o")}


def attention_params(arrays: Mapping[str, np.ndarray], heads: int) -> AttentionParams:
    return AttentionParams(**{k: Tensor(v) for k, v in arrays.items()}, heads=heads)


def naive_attention(x: np.ndarray, w: Mapping[str, np.ndarray], heads: int) -> np.ndarray:
    """Head-by-head attention written with explicit loops."""
    d = x.shape[-1]
    d_k = d // heads
    outputs = []
    for i in range(heads):
        cols = slice(i * d_k, (i + 1) * d_k)
        q = x @ w["w_q"][:, cols]
        k = x @ w["w_k"][:, cols]
        v = x @ w["w_v"][:, cols]
        scores = q @ k.T / math.sqrt(d_k)
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights /= weights.sum(axis=1, keepdims=True)
        outputs.append(weights @ v)
    return np.concatenate(outputs, axis=1) @ w["w_o"]


class TestMultiHeadAttention:
    """Tests for multi-head self-attention."""

    @pytest.mark.parametrize("heads", [1, 2, 4])
    def test_matches_per_head_loop(self, wide_precision: None, heads: int) -> None:
        """The vectorized layer equals an explicit per-head computation."""
        x = np.random.default_rng(1).normal(size=(5, 8))
        w = attention_arrays(8)
        out = multi_head_self_attention(Tensor(x), attention_params(w, heads))
        np.testing.assert_allclose(out.data, naive_attention(x, w, heads), atol=1e-10)

    def test_batched_matches_single(self, wide_precision: None) -> None:
        """A batch gives the same rows as examples run one at a time."""
        x = np.random.default_rng(2).normal(size=(3, 4, 8))
        p = attention_params(attention_arrays(8), 2)
        batched = multi_head_self_attention(Tensor(x), p).data
        for i in range(3):
            single = multi_head_self_attention(Tensor(x[i]), p).data
            np.testing.assert_allclose(batched[i], single, atol=1e-12)

    def test_padded_keys_get_no_weight(self, wide_precision: None) -> None:
        """Attention to padded key positions is effectively zero."""
        x = np.random.default_rng(3).normal(size=(2, 5, 8))
        mask = padding_mask([3, 5], 5)
        weights = attention_weights(Tensor(x), attention_params(attention_arrays(8), 2), mask).data
        assert weights.shape == (2, 2, 5, 5)
        assert np.abs(weights[0, :, :, 3:]).max() < 1e-8
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_padding_content_does_not_leak(self, wide_precision: None) -> None:
        """Changing padded rows leaves the real rows' outputs unchanged."""
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 8))
        y = x.copy()
        y[3:] = rng.normal(size=(2, 8)) * 100.0
        mask = np.array([True, True, True, False, False])
        p = attention_params(attention_arrays(8), 2)
        a = multi_head_self_attention(Tensor(x), p, mask).data
        b = multi_head_self_attention(Tensor(y), p, mask).data
        np.testing.assert_allclose(a[:3], b[:3], atol=1e-12)

    def test_heads_must_divide_width(self) -> None:
        """The model width must split evenly across heads."""
        with pytest.raises(DimensionError, match="not divisible"):
            attention_params(attention_arrays(6), 4)

    def test_input_width_checked(self) -> None:
        """Inputs narrower than the projections are rejected."""
        with pytest.raises(DimensionError, match="does not match"):
            params = attention_params(attention_arrays(8), 2)
            multi_head_self_attention(Tensor(np.ones((3, 4))), params)

    def test_mask_shape_checked(self) -> None:
        """A mask for another length is a contract violation."""
        with pytest.raises(ContractError, match="Mask shape"):
            multi_head_self_attention(
                Tensor(np.ones((3, 8))), attention_params(attention_arrays(8), 2), np.ones(4, bool)
            )


class TestMeanMaxPool:
    """Tests for mean plus max pooling over real rows."""

    def test_hand_computed(self) -> None:
        """Mean and max use only real rows."""
        z = np.array([[1.0, -2.0], [3.0, 4.0], [100.0, 100.0]])
        pooled = mean_max_pool(Tensor(z), np.array([True, True, False])).data
        np.testing.assert_allclose(pooled, [2.0, 1.0, 3.0, 4.0])

    def test_negative_values_with_padding(self) -> None:
        """Padded zeros never win the max over negative real values."""
        z = np.array([[-5.0, -1.0], [-3.0, -2.0], [0.0, 0.0]])
        pooled = mean_max_pool(Tensor(z), np.array([True, True, False])).data
        np.testing.assert_allclose(pooled[2:], [-3.0, -1.0])

    def test_permutation_invariant(self, wide_precision: None) -> None:
        """Reordering the real rows does not change the pooled vector."""
        z = np.random.default_rng(5).normal(size=(4, 6))
        mask = np.array([True, True, True, False])
        shuffled = z[[2, 0, 1, 3]]
        np.testing.assert_allclose(
            mean_max_pool(Tensor(z), mask).data,
            mean_max_pool(Tensor(shuffled), mask).data,
            atol=1e-12,
        )

    def test_batch_shape(self) -> None:
        """A batch pools to [B, 2d]."""
        out = mean_max_pool(Tensor(np.ones((3, 4, 5))), padding_mask([1, 2, 4], 4))
        assert out.shape == (3, 10)

    def test_empty_row(self) -> None:
        """An example with no real rows cannot be pooled."""
        with pytest.raises(ContractError, match="at least one real position"):
            mean_max_pool(Tensor(np.ones((2, 3, 4))), padding_mask([2, 0], 3))


class TestPaddingMask:
    """Tests for building and checking padding masks."""

    def test_prefix_masks(self) -> None:
        """Each row has its length of leading True values."""
        np.testing.assert_array_equal(
            padding_mask([1, 3], 3), [[True, False, False], [True, True, True]]
        )

    def test_gap_rejected(self) -> None:
        """Real positions after a padded one are rejected."""
        with pytest.raises(ContractError, match="contiguous prefix"):
            validate_padding_mask(np.array([True, False, True]))

    def test_all_padding_rejected(self) -> None:
        """A row without real positions is rejected."""
        with pytest.raises(ContractError, match="no real positions"):
            validate_padding_mask(np.zeros((2, 3), bool))


class TestEmbeddingAndPositions:
    """Tests for lookups and learned positions."""

    def test_lookup_shape(self) -> None:
        """Looking up [B, L] ids gives [B, L, d]."""
        out = embedding_lookup(Tensor(np.ones((10, 4))), np.zeros((2, 3), dtype=np.int64))
        assert out.shape == (2, 3, 4)

    def test_lookup_out_of_range(self) -> None:
        """Ids past the table are vocabulary errors."""
        with pytest.raises(VocabularyError):
            embedding_lookup(Tensor(np.ones((10, 4))), np.array([10]))

    def test_positions_added(self) -> None:
        """Row i gets position row i added."""
        pos = np.arange(12.0).reshape(4, 3)
        out = add_positional(Tensor(np.zeros((2, 3, 3))), Tensor(pos)).data
        np.testing.assert_array_equal(out[1], pos[:3])

    def test_too_long(self) -> None:
        """Sequences longer than the position table raise."""
        with pytest.raises(SequenceLengthError, match="exceeds the maximum 4"):
            add_positional(Tensor(np.zeros((5, 3))), Tensor(np.zeros((4, 3))))


class TestLayerNorm:
    """Tests for layer normalization."""

    def test_rows_normalized(self, wide_precision: None) -> None:
        """With unit gain and zero bias rows have zero mean and unit variance."""
        x = np.random.default_rng(6).normal(loc=3.0, scale=2.0, size=(4, 8))
        y = layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-4)

    def test_single_feature(self) -> None:
        """One feature cannot be normalized."""
        with pytest.raises(ContractError):
            layer_norm(Tensor(np.ones((2, 1))), Tensor(np.ones(1)), Tensor(np.zeros(1)))


class TestFeedForward:
    """Tests for the point-wise feed-forward network."""

    def ffn_params(self, d: int, d_ff: int, seed: int = 0) -> FeedForwardParams:
        rng = np.random.default_rng(seed)
        return FeedForwardParams(
            w1=Tensor(rng.normal(size=(d, d_ff))),
            b1=Tensor(rng.normal(size=d_ff)),
            w2=Tensor(rng.normal(size=(d_ff, d))),
            b2=Tensor(rng.normal(size=d)),
        )

    def test_zero_weights(self) -> None:
        """All-zero weights and biases give an all-zero output."""
        p = FeedForwardParams(
            w1=Tensor(np.zeros((4, 8))),
            b1=Tensor(np.zeros(8)),
            w2=Tensor(np.zeros((8, 4))),
            b2=Tensor(np.zeros(4)),
        )
        x = Tensor(np.random.default_rng(1).normal(size=(2, 3, 4)))
        np.testing.assert_array_equal(feed_forward(x, p).data, 0.0)

    def test_identical_rows(self, wide_precision: None) -> None:
        """Equal input rows give equal output rows."""
        row = np.random.default_rng(2).normal(size=4)
        out = feed_forward(Tensor(np.tile(row, (3, 1))), self.ffn_params(4, 8)).data
        np.testing.assert_allclose(out[1:], np.tile(out[0], (2, 1)), atol=1e-12)

    def test_matches_numpy(self, wide_precision: None) -> None:
        p = self.ffn_params(4, 8, seed=3)
        x = np.random.default_rng(4).normal(size=(3, 4))
        pre = x @ p.w1.data + p.b1.data
        hidden = np.where(pre > 0, pre, 0.1 * pre)
        expected = hidden @ p.w2.data + p.b2.data
        np.testing.assert_allclose(feed_forward(Tensor(x), p, 0.1).data, expected, atol=1e-12)

    def test_shapes_checked(self) -> None:
        with pytest.raises(DimensionError, match="b1"):
            FeedForwardParams(
                w1=Tensor(np.zeros((4, 8))),
                b1=Tensor(np.zeros(4)),
                w2=Tensor(np.zeros((8, 4))),
                b2=Tensor(np.zeros(4)),
            )


class TestEncoderBlock:
    """Tests for the full encoder block."""

    def block_arrays(self, d: int, d_ff: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(7)
        arrays = {
            name: rng.normal(scale=0.4, size=shape)
            for name, shape in block_param_shapes("block", d, d_ff).items()
        }
        arrays["block.norm1.gain"] = 1.0 + arrays["block.norm1.gain"]
        arrays["block.norm2.gain"] = 1.0 + arrays["block.norm2.gain"]
        return arrays

    def test_gradients(self, wide_precision: None) -> None:
        """The block's backward pass agrees with finite differences."""
        arrays = self.block_arrays(4, 8)
        x = np.random.default_rng(8).normal(size=(2, 3, 4))
        mask = padding_mask([2, 3], 3)

        def loss_fn(p: Mapping[str, Tensor]) -> Tensor:
            block = EncoderBlockParams.from_params(p, "block", heads=2)
            out = encoder_block(Tensor(x), block, mask)
            return ops.sum(mean_max_pool(out, mask) * 0.3)

        report = check_gradients(loss_fn, arrays)
        assert report.passed, report.failures()

    def test_bypass(self) -> None:
        """A bypassed block returns its input."""
        arrays = {k: Tensor(v) for k, v in self.block_arrays(4, 8).items()}
        x = Tensor(np.ones((3, 4)))
        block = EncoderBlockParams.from_params(arrays, "block", heads=2)
        assert encoder_block(x, block, bypass=True) is x


class TestCrossEntropy:
    """Tests for the training loss."""

    def test_uniform_logits(self, wide_precision: None) -> None:
        """Equal logits give log V."""
        loss = cross_entropy_loss(Tensor(np.zeros((3, 5))), np.array([0, 2, 4]))
        assert loss.item() == pytest.approx(math.log(5))

    def test_single_example(self, wide_precision: None) -> None:
        """A [V] logit vector and one label work too."""
        loss = cross_entropy_loss(Tensor(np.array([0.0, math.log(3.0)])), 1)
        assert loss.item() == pytest.approx(-math.log(0.75))

    def test_label_out_of_range(self) -> None:
        """Labels past the vocabulary raise."""
        with pytest.raises(VocabularyError):
            cross_entropy_loss(Tensor(np.zeros((1, 3))), np.array([3]))
