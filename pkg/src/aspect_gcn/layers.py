"""Model building blocks.

All layers operate on batches internally ([B, n, feat] plus per-sample
true lengths); the single-sentence entry points wrap a batch of one so
there is exactly one code path for the math. Padding positions are kept
exactly zero at every stage: the bidirectional LSTM masks its states per
step, the graph convolution re-zeroes padded rows after the bias add,
and attention softmax is restricted to the true length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# embedding


@dataclass
class EmbeddingTable:
    """Token embedding matrix; row 0 is the all-zero padding vector."""

    weights: Tensor
    trainable: bool = True

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def random(cls, vocab_size: int, dim: int, rng: np.random.Generator, trainable: bool = True) -> "EmbeddingTable":
        matrix = rng.uniform(-0.25, 0.25, size=(vocab_size, dim))
        matrix[0] = 0.0
        return cls(Tensor(matrix, requires_grad=trainable), trainable=trainable)


def embed(token_ids, table: EmbeddingTable) -> Tensor:
    """Look up embedding rows; gradients accumulate into used rows only."""
    return ad.embedding_lookup(table.weights, np.asarray(token_ids, dtype=np.int64))


# ---------------------------------------------------------------------------
# bidirectional LSTM


@dataclass
class LstmCell:
    """Single LSTM cell with stacked-input gates.

    Each gate weight has extent (d_in + d_hidden) x d_hidden and acts on
    the concatenation [x_t; h_{t-1}].
    """

    w_input: Tensor
    w_forget: Tensor
    w_output: Tensor
    w_candidate: Tensor
    b_input: Tensor
    b_forget: Tensor
    b_output: Tensor
    b_candidate: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_input.shape[1]

    @classmethod
    def init(cls, d_in: int, d_hidden: int, rng: np.random.Generator) -> "LstmCell":
        fan_in = d_in + d_hidden
        weights = [Tensor(_uniform_fan_in(rng, fan_in, (fan_in, d_hidden)), requires_grad=True) for _ in range(4)]
        biases = [Tensor(np.zeros(d_hidden), requires_grad=True) for _ in range(4)]
        return cls(*weights, *biases)

    def parameters(self) -> dict[str, Tensor]:
        return {
            "input.weight": self.w_input,
            "forget.weight": self.w_forget,
            "output.weight": self.w_output,
            "candidate.weight": self.w_candidate,
            "input.bias": self.b_input,
            "forget.bias": self.b_forget,
            "output.bias": self.b_output,
            "candidate.bias": self.b_candidate,
        }


def lstm_step(cell: LstmCell, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """One recurrence step: sigmoid gates, tanh candidate, h = o * tanh(c)."""
    stacked = ad.concat([x_t, h_prev], axis=1)
    i = ad.sigmoid(ad.add(ad.matmul(stacked, cell.w_input), cell.b_input))
    f = ad.sigmoid(ad.add(ad.matmul(stacked, cell.w_forget), cell.b_forget))
    o = ad.sigmoid(ad.add(ad.matmul(stacked, cell.w_output), cell.b_output))
    g = ad.tanh(ad.add(ad.matmul(stacked, cell.w_candidate), cell.b_candidate))
    c_t = ad.add(ad.mul(f, c_prev), ad.mul(i, g))
    h_t = ad.mul(o, ad.tanh(c_t))
    return h_t, c_t


def _run_direction(cell: LstmCell, x: Tensor, lengths: np.ndarray, reverse: bool) -> list[Tensor]:
    batch, n_max = x.shape[0], x.shape[1]
    d_h = cell.hidden_size
    h = ad.constant(np.zeros((batch, d_h)))
    c = ad.constant(np.zeros((batch, d_h)))
    steps = range(n_max - 1, -1, -1) if reverse else range(n_max)
    outputs: list[Tensor | None] = [None] * n_max
    for t in steps:
        x_t = ad.reshape(ad.narrow(x, t, t + 1, axis=1), (batch, x.shape[2]))
        h, c = lstm_step(cell, x_t, h, c)
        valid = ad.constant((t < lengths).astype(np.float64))
        # Zeroing per step keeps padding outputs exactly zero and, for the
        # reverse direction, delays the recurrence until the true last token.
        h = ad.scale_rows(h, valid)
        c = ad.scale_rows(c, valid)
        outputs[t] = ad.reshape(h, (batch, 1, d_h))
    return outputs  # type: ignore[return-value]


def bilstm_batch(x: Tensor, fwd: LstmCell, bwd: LstmCell, lengths) -> Tensor:
    """Bidirectional LSTM over [B, n, d_in] -> [B, n, 2*d_h]."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if (lengths < 1).any():
        raise ValueError("bilstm requires every length >= 1")
    if x.ndim != 3 or lengths.shape[0] != x.shape[0]:
        raise ValueError(f"bilstm input shape {x.shape} incompatible with {lengths.shape[0]} lengths")
    if lengths.max() > x.shape[1]:
        raise ValueError("length exceeds available rows")
    forward = _run_direction(fwd, x, lengths, reverse=False)
    backward = _run_direction(bwd, x, lengths, reverse=True)
    return ad.concat([ad.concat(forward, axis=1), ad.concat(backward, axis=1)], axis=2)


def bilstm(x: Tensor, fwd: LstmCell, bwd: LstmCell, length: int) -> Tensor:
    """Single-sentence form: [n, d_in] -> [n, 2*d_h], rows >= length are zero."""
    batched = bilstm_batch(ad.reshape(x, (1,) + x.shape), fwd, bwd, [length])
    return ad.reshape(batched, (x.shape[0], 2 * fwd.hidden_size))


# ---------------------------------------------------------------------------
# graph convolution


@dataclass
class GcnLayer:
    """Degree-normalized graph convolution weights (feature width preserved)."""

    weight: Tensor
    bias: Tensor

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "GcnLayer":
        return cls(
            Tensor(_uniform_fan_in(rng, dim, (dim, dim)), requires_grad=True),
            Tensor(np.zeros(dim), requires_grad=True),
        )

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


def gcn_layer_batch(g_prev: Tensor, adjacency: np.ndarray, layer: GcnLayer, valid: np.ndarray) -> Tensor:
    """Aggregate transformed neighbor features, normalize by degree + 1.

    adjacency is a constant [B, n, n] stack with zero padding rows and
    columns; valid is the 0/1 [B, n] row mask used to keep padded rows at
    exactly zero after the bias add.
    """
    batch, n, width = g_prev.shape
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.shape != (batch, n, n):
        raise ValueError(f"adjacency shape {adjacency.shape} does not match features {g_prev.shape}")
    if width != layer.dim:
        raise ValueError(f"feature width {width} does not match layer width {layer.dim}")
    degrees = adjacency.sum(axis=2)
    transformed = ad.reshape(ad.matmul(ad.reshape(g_prev, (batch * n, width)), layer.weight), (batch, n, width))
    aggregated = ad.bmm(ad.constant(adjacency), transformed)
    normalized = ad.scale_rows(aggregated, ad.constant(1.0 / (degrees + 1.0)))
    activated = ad.relu(ad.add(normalized, layer.bias))
    return ad.scale_rows(activated, ad.constant(np.asarray(valid, dtype=np.float64)))


def gcn_layer(g_prev: Tensor, adj, layer: GcnLayer) -> Tensor:
    """Single-sentence graph convolution over an n x n adjacency with unit diagonal."""
    matrix = np.asarray(getattr(adj, "matrix", adj), dtype=np.float64)
    n = g_prev.shape[0]
    if matrix.shape != (n, n):
        raise ValueError(f"adjacency shape {matrix.shape} does not match features {g_prev.shape}")
    batched = gcn_layer_batch(
        ad.reshape(g_prev, (1, n, g_prev.shape[1])),
        matrix[None, :, :],
        layer,
        np.ones((1, n)),
    )
    return ad.reshape(batched, g_prev.shape)


# ---------------------------------------------------------------------------
# position weighting and aspect masking


def position_weights(n: int, aspect_from: int, aspect_to: int) -> np.ndarray:
    """Per-token decay weights relative to the aspect span (0-based, half-open).

    Aspect tokens get 0; context tokens decay linearly with distance from
    the span, scaled by the true sentence length n.
    """
    if not (0 <= aspect_from < aspect_to <= n):
        raise ValueError(f"aspect span [{aspect_from}, {aspect_to}) out of bounds for length {n}")
    q = np.zeros(n)
    # (n - d) / n rather than 1 - d/n: same rational value, but exact
    # against hand-evaluated fractions like 8/9.
    for i in range(aspect_from):
        q[i] = (n - (aspect_from - i)) / n
    for i in range(aspect_to, n):
        q[i] = (n - (i + 1 - aspect_to)) / n
    return q


def position_transform(h: Tensor, span: tuple[int, int], n: int) -> Tensor:
    """Scale each of the first n rows by its position weight.

    Rows past n (padding) are scaled by zero, which leaves them unchanged
    since they are zero by construction.
    """
    rows = h.shape[0]
    if n > rows:
        raise ValueError(f"true length {n} exceeds {rows} rows")
    q = np.zeros(rows)
    q[:n] = position_weights(n, span[0], span[1])
    return ad.scale_rows(h, ad.constant(q))


def span_mask(rows: int, span: tuple[int, int]) -> np.ndarray:
    mask = np.zeros(rows)
    mask[span[0] : span[1]] = 1.0
    return mask


def aspect_mask(h_final: Tensor, span: tuple[int, int]) -> Tensor:
    """Zero all non-aspect rows; aspect rows pass through unchanged."""
    rows = h_final.shape[0]
    if not (0 <= span[0] < span[1] <= rows):
        raise ValueError(f"aspect span {span} out of bounds for {rows} rows")
    return ad.scale_rows(h_final, ad.constant(span_mask(rows, span)))


def aspect_mask_batch(h_final: Tensor, spans, n_max: int) -> Tensor:
    masks = np.stack([span_mask(n_max, span) for span in spans])
    return ad.scale_rows(h_final, ad.constant(masks))


# ---------------------------------------------------------------------------
# retrieval attention


def aspect_attention_batch(context: Tensor, masked: Tensor, lengths) -> tuple[Tensor, Tensor]:
    """Retrieval attention: score context states against summed aspect features.

    Returns (r [B, width], alpha [B, n]); alpha is a probability vector
    over each sample's true length and zero on padding.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if (lengths < 1).any():
        raise ValueError("attention requires every length >= 1")
    batch, n, width = context.shape
    summed = ad.reduce_sum(masked, axis=1)
    scores = ad.reshape(ad.bmm(context, ad.reshape(summed, (batch, width, 1))), (batch, n))
    valid = (np.arange(n)[None, :] < lengths[:, None]).astype(np.float64)
    alpha = ad.masked_softmax(scores, valid)
    pooled = ad.reshape(ad.bmm(ad.reshape(alpha, (batch, 1, n)), context), (batch, width))
    return pooled, alpha


def aspect_attention(context: Tensor, masked: Tensor, length: int) -> tuple[Tensor, Tensor]:
    """Single-sentence form over [n, width] inputs with true length n."""
    n, width = context.shape
    pooled, alpha = aspect_attention_batch(
        ad.reshape(context, (1, n, width)),
        ad.reshape(masked, (1, n, width)),
        [length],
    )
    return ad.reshape(pooled, (width,)), ad.reshape(alpha, (n,))


# ---------------------------------------------------------------------------
# 1-D convolution (kernel 3, one zero pad each side)


@dataclass
class ConvLayer:
    """Same-length 1-D convolution, kernel size 3."""

    kernel: Tensor
    bias: Tensor

    @property
    def dim_in(self) -> int:
        return self.kernel.shape[1]

    @classmethod
    def init(cls, dim_in: int, dim_out: int, rng: np.random.Generator) -> "ConvLayer":
        return cls(
            Tensor(_uniform_fan_in(rng, 3 * dim_in, (3, dim_in, dim_out)), requires_grad=True),
            Tensor(np.zeros(dim_out), requires_grad=True),
        )

    def parameters(self) -> dict[str, Tensor]:
        return {"kernel": self.kernel, "bias": self.bias}


def conv1d_batch(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    batch, n, f_in = x.shape
    if kernel.shape[0] != 3 or kernel.shape[1] != f_in:
        raise ValueError(f"kernel shape {kernel.shape} incompatible with input {x.shape}")
    f_out = kernel.shape[2]
    pad = ad.constant(np.zeros((batch, 1, f_in)))
    padded = ad.concat([pad, x, pad], axis=1)
    taps = []
    for k in range(3):
        window = ad.reshape(ad.narrow(padded, k, k + n, axis=1), (batch * n, f_in))
        tap = ad.matmul(window, ad.reshape(ad.narrow(kernel, k, k + 1, axis=0), (f_in, f_out)))
        taps.append(tap)
    summed = ad.add(ad.add(taps[0], taps[1]), taps[2])
    return ad.reshape(ad.add(summed, bias), (batch, n, f_out))


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Single-sentence form over [n, f_in] -> [n, f_out]."""
    n, f_in = x.shape
    out = conv1d_batch(ad.reshape(x, (1, n, f_in)), kernel, bias)
    return ad.reshape(out, (n, kernel.shape[2]))
