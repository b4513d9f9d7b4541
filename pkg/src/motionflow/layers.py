"""Differentiable layers built on the autodiff primitives.

Everything here works both on and off tape: pass Tensors during training,
plain arrays during inference.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError


def dense(x, weight, bias=None):
    """x @ W + b. Weight is (in, out); bias a length-out vector."""
    xv, wv = ad.value_of(x), ad.value_of(weight)
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise ShapeError(f"dense: input {xv.shape} incompatible with weight {wv.shape}")
    out = ad.matmul(x, weight)
    if bias is not None:
        bv = ad.value_of(bias)
        if bv.shape != (wv.shape[1],):
            raise ShapeError(f"dense: bias shape {bv.shape} != ({wv.shape[1]},)")
        out = ad.add(out, bias)
    return out


def layer_norm(x, eps: float = 1e-5):
    return ad.layer_norm(x, eps=eps)


def sinusoidal_embed(t: float, dim: int, position_scale: float = 1000.0) -> np.ndarray:
    """Continuous-time sinusoidal embedding, interleaved sin/cos lanes.

    ``t`` in [0, 1] is mapped to position ``t * position_scale`` and encoded
    with geometric frequencies (base 10000).
    """
    if dim % 2 != 0:
        raise ConfigError(f"sinusoidal_embed requires an even dim, got {dim}")
    pos = float(t) * position_scale
    half = dim // 2
    freqs = np.power(10000.0, -2.0 * np.arange(half) / dim)
    emb = np.empty(dim, dtype=np.float64)
    emb[0::2] = np.sin(pos * freqs)
    emb[1::2] = np.cos(pos * freqs)
    return emb


class BandLayout:
    """Attention reach for stacked same-length sequences: each row sees rows
    within ``half_width`` on either side, inside its own sequence."""

    def __init__(self, batch: int, length: int, half_width: int):
        self.batch = batch
        self.length = length
        self.half_width = half_width
        self.rows = batch * length
        self.offsets = []
        self.index_lists = []
        positions = np.arange(self.rows)
        within = positions % length
        for off in range(-half_width, half_width + 1):
            targets = within + off
            rows = positions[(targets >= 0) & (targets < length)]
            self.offsets.append(off)
            self.index_lists.append(rows)

    def dense_additive_mask(self) -> np.ndarray:
        """Equivalent (rows, rows) additive mask: 0 allowed, -inf excluded."""
        if not hasattr(self, "_dense"):
            mask = np.full((self.rows, self.rows), -np.inf)
            for off, rows in zip(self.offsets, self.index_lists):
                mask[rows, rows + off] = 0.0
            self._dense = mask
        return self._dense


def band_mask(length: int, half_width: int) -> np.ndarray:
    """Additive attention mask: 0 inside [i-T, i+T], -inf outside."""
    return BandLayout(1, length, half_width).dense_additive_mask()


def banded_self_attention(x, heads: int, wq, bq, wk, bk, wv, bv, wo, bo,
                          layout: BandLayout):
    """Multi-head softmax attention restricted to the layout's band.

    Queries/keys/values come from per-layer projections of ``x``; scores are
    scaled by 1/sqrt(head_dim); heads are concatenated and projected out.
    """
    xv = ad.value_of(x)
    n, hidden = xv.shape
    if hidden % heads != 0:
        raise ConfigError(f"hidden dim {hidden} not divisible by {heads} heads")
    if n != layout.rows:
        raise ShapeError(f"{n} rows vs layout of {layout.rows}")
    head_dim = hidden // heads
    q = dense(x, wq, bq)
    k = dense(x, wk, bk)
    v = dense(x, wv, bv)
    outs = []
    for h in range(heads):
        j0, j1 = h * head_dim, (h + 1) * head_dim
        qh = ad.slice_cols(q, j0, j1)
        kh = ad.slice_cols(k, j0, j1)
        vh = ad.slice_cols(v, j0, j1)
        outs.append(ad.banded_softmax_attention(
            qh, kh, vh, layout.offsets, layout.index_lists))
    merged = outs[0] if heads == 1 else ad.concat_cols(outs)
    return dense(merged, wo, bo)


def cross_attention(x, context, heads: int, wq, bq, wk, bk, wv, bv, wo, bo, mask):
    """Attention with queries from ``x`` and keys/values from ``context``."""
    xv = ad.value_of(x)
    hidden = xv.shape[1]
    if hidden % heads != 0:
        raise ConfigError(f"hidden dim {hidden} not divisible by {heads} heads")
    head_dim = hidden // heads
    q = dense(x, wq, bq)
    k = dense(context, wk, bk)
    v = dense(context, wv, bv)
    outs = []
    inv_sqrt = 1.0 / np.sqrt(head_dim)
    for h in range(heads):
        j0, j1 = h * head_dim, (h + 1) * head_dim
        qh = ad.slice_cols(q, j0, j1)
        kh = ad.slice_cols(k, j0, j1)
        vh = ad.slice_cols(v, j0, j1)
        scores = ad.scale(ad.matmul(qh, ad.transpose(kh)), inv_sqrt)
        scores = ad.add(scores, mask)
        weights = ad.softmax_rows(scores)
        outs.append(ad.matmul(weights, vh))
    merged = outs[0] if heads == 1 else ad.concat_cols(outs)
    return dense(merged, wo, bo)


def gelu_mlp(x, w1, b1, w2, b2):
    """Two-layer MLP with GELU activation."""
    return dense(ad.gelu(dense(x, w1, b1)), w2, b2)


def uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def uniform_bias(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=fan_out)
