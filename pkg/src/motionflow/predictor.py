"""Transformer vector-field predictor with frame-wise conditioning.

Each input frame is modulated by its own condition row (scale/shift around
layer norm plus a multiplicative gate, both produced by a per-block linear
map of the condition), then mixed with neighbors through banded masked
self-attention. The stack predicts a per-frame velocity in latent space.

Per-block modulation rows split as (gate1, shift1, scale1, gate2, shift2,
scale2); stage 1 wraps attention, stage 2 wraps the MLP. The modulation
layers and the output projection start at zero, so a fresh model applies
identity-like normalization, open gates, and predicts the zero field.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .io import read_container, write_container
from .layers import (BandLayout, banded_self_attention, cross_attention, dense,
                     gelu_mlp, layer_norm, sinusoidal_embed, uniform_bias,
                     uniform_init)
from .params import PredictorParams

CHECKPOINT_MAGIC = b"VFCK"


@dataclass(frozen=True)
class PredictorConfig:
    latent_dim: int = 16
    audio_dim: int = 8
    hidden_dim: int = 64
    heads: int = 4
    half_width: int = 2
    blocks: int = 4
    window_len: int = 24
    context_len: int = 6
    emotion_dims: int = 7
    extra_dims: int = 0
    mlp_ratio: int = 4
    cross_attention: bool = False

    def __post_init__(self):
        for name in ("latent_dim", "audio_dim", "hidden_dim", "heads",
                     "blocks", "window_len", "context_len", "mlp_ratio"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.half_width < 0 or self.extra_dims < 0:
            raise ConfigError("half_width and extra_dims must be non-negative")
        if self.hidden_dim % self.heads != 0:
            raise ConfigError(
                f"hidden_dim {self.hidden_dim} not divisible by heads {self.heads}")
        if self.emotion_dims != 7:
            raise ConfigError("emotion label is a fixed 7-class vector")

    @property
    def total_len(self) -> int:
        return self.window_len + self.context_len

    @property
    def condition_in_dim(self) -> int:
        return self.audio_dim + self.emotion_dims + self.latent_dim + self.extra_dims

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        return cls(**d)

    def hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


@dataclass
class ConditionBundle:
    """Assembled per-frame condition rows for one flow time."""

    rows: object                 # Tensor or ndarray, (total_len, hidden_dim)
    t: float
    null_flags: dict = field(default_factory=dict)


def frame_wise_adaln(x, scale_rows, shift_rows):
    """(1 + scale) * LN(x) + shift, applied row-by-row."""
    return ad.add(ad.mul(ad.add(scale_rows, 1.0), layer_norm(x)), shift_rows)


def frame_wise_gate(x, gate_rows):
    """(1 + gate) * x, applied row-by-row."""
    return ad.mul(ad.add(gate_rows, 1.0), x)


class VectorFieldPredictor:
    """Stack of frame-wise-conditioned attention blocks mapping noisy latent
    rows plus condition rows to a velocity field of the same shape."""

    def __init__(self, config: PredictorConfig, seed: int = 0,
                 zero_init: bool = True):
        self.config = config
        self.params = PredictorParams()
        self._mask_cache: dict[int, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        c = config
        h = c.hidden_dim

        def lin(name, fan_in, fan_out, zero=False):
            if zero:
                self.params.add(f"{name}.w", np.zeros((fan_in, fan_out)))
                self.params.add(f"{name}.b", np.zeros(fan_out))
            else:
                self.params.add(f"{name}.w", uniform_init(rng, fan_in, fan_out))
                self.params.add(f"{name}.b", uniform_bias(rng, fan_in, fan_out))

        lin("to_condition", c.condition_in_dim, h)
        lin("in_proj", c.latent_dim, h)
        for i in range(c.blocks):
            if not c.cross_attention:
                lin(f"block{i}.mod", h, 6 * h, zero=zero_init)
            for proj in ("q", "k", "v", "o"):
                lin(f"block{i}.attn.{proj}", h, h)
            if c.cross_attention:
                for proj in ("q", "k", "v", "o"):
                    lin(f"block{i}.cross.{proj}", h, h)
            lin(f"block{i}.mlp.fc1", h, c.mlp_ratio * h)
            lin(f"block{i}.mlp.fc2", c.mlp_ratio * h, h)
        lin("out_proj", h, c.latent_dim, zero=zero_init)

    # -- conditions ---------------------------------------------------------

    def condition_rows(self, audio, emotion, source_motion, t, extra=None):
        """Per-frame condition rows: linear map of the concatenated channels
        plus the flow-time embedding added to every row."""
        c = self.config
        channels = self.condition_channels(audio, emotion, source_motion, extra)
        emb = sinusoidal_embed(t, c.hidden_dim)
        return self.condition_from_parts(channels, np.tile(emb, (channels.shape[0], 1)))

    def condition_channels(self, audio, emotion, source_motion, extra=None) -> np.ndarray:
        """Concatenate raw channels into the (total_len, condition_in) matrix."""
        c = self.config
        audio = np.asarray(audio, dtype=np.float64)
        emotion = np.asarray(emotion, dtype=np.float64)
        source_motion = np.asarray(source_motion, dtype=np.float64)
        if audio.shape != (c.total_len, c.audio_dim):
            raise ShapeError(f"audio shape {audio.shape} != ({c.total_len}, {c.audio_dim})")
        if emotion.shape != (c.emotion_dims,):
            raise ShapeError(f"emotion shape {emotion.shape} != ({c.emotion_dims},)")
        if source_motion.shape != (c.latent_dim,):
            raise ShapeError(f"source motion shape {source_motion.shape} != ({c.latent_dim},)")
        parts = [audio,
                 np.tile(emotion, (c.total_len, 1)),
                 np.tile(source_motion, (c.total_len, 1))]
        if c.extra_dims:
            if extra is None:
                extra = np.zeros((c.total_len, c.extra_dims))
            extra = np.asarray(extra, dtype=np.float64)
            if extra.shape != (c.total_len, c.extra_dims):
                raise ShapeError(f"extra shape {extra.shape} != ({c.total_len}, {c.extra_dims})")
            parts.append(extra)
        elif extra is not None:
            raise ShapeError("extra channel supplied but extra_dims is 0")
        return np.concatenate(parts, axis=1)

    def condition_from_parts(self, channels: np.ndarray, emb_rows: np.ndarray):
        base = dense(channels, self.params["to_condition.w"], self.params["to_condition.b"])
        return ad.add(base, emb_rows)

    def to_condition(self, audio, emotion, source_motion, t, extra=None,
                     null_flags=None) -> ConditionBundle:
        rows = self.condition_rows(audio, emotion, source_motion, t, extra)
        return ConditionBundle(rows=rows, t=float(t), null_flags=dict(null_flags or {}))

    # -- forward ------------------------------------------------------------

    def modulations(self, cond_rows, block: int):
        """Split one block's modulation rows: (gate1, shift1, scale1, gate2,
        shift2, scale2), each (rows, hidden_dim)."""
        h = self.config.hidden_dim
        mod = dense(cond_rows, self.params[f"block{block}.mod.w"],
                    self.params[f"block{block}.mod.b"])
        return tuple(ad.slice_cols(mod, k * h, (k + 1) * h) for k in range(6))

    def band_layout(self, rows: int) -> BandLayout:
        """Single-sequence attention layout for ``rows`` frames (cached)."""
        if rows not in self._mask_cache:
            self._mask_cache[rows] = BandLayout(1, rows, self.config.half_width)
        return self._mask_cache[rows]

    def forward(self, x, cond_rows, layout: BandLayout | None = None):
        """Full stack: latent rows (N, d) + condition rows (N, h) -> field (N, d).

        ``layout`` defaults to a single-sequence band; batched callers pass a
        multi-sequence layout over the stacked rows.
        """
        c = self.config
        xv = ad.value_of(x)
        cv = ad.value_of(cond_rows)
        if xv.ndim != 2 or xv.shape[1] != c.latent_dim:
            raise ShapeError(f"latent rows shape {xv.shape} != (N, {c.latent_dim})")
        if cv.shape != (xv.shape[0], c.hidden_dim):
            raise ShapeError(f"condition rows shape {cv.shape} != ({xv.shape[0]}, {c.hidden_dim})")
        if layout is None:
            layout = self.band_layout(xv.shape[0])
        p = self.params
        hidden = dense(x, p["in_proj.w"], p["in_proj.b"])
        for i in range(c.blocks):
            attn_args = (c.heads, p[f"block{i}.attn.q.w"], p[f"block{i}.attn.q.b"],
                         p[f"block{i}.attn.k.w"], p[f"block{i}.attn.k.b"],
                         p[f"block{i}.attn.v.w"], p[f"block{i}.attn.v.b"],
                         p[f"block{i}.attn.o.w"], p[f"block{i}.attn.o.b"])
            if c.cross_attention:
                hidden = ad.add(hidden, banded_self_attention(
                    layer_norm(hidden), *attn_args, layout))
                hidden = ad.add(hidden, cross_attention(
                    layer_norm(hidden), cond_rows, c.heads,
                    p[f"block{i}.cross.q.w"], p[f"block{i}.cross.q.b"],
                    p[f"block{i}.cross.k.w"], p[f"block{i}.cross.k.b"],
                    p[f"block{i}.cross.v.w"], p[f"block{i}.cross.v.b"],
                    p[f"block{i}.cross.o.w"], p[f"block{i}.cross.o.b"],
                    layout.dense_additive_mask()))
                hidden = ad.add(hidden, gelu_mlp(
                    layer_norm(hidden), p[f"block{i}.mlp.fc1.w"], p[f"block{i}.mlp.fc1.b"],
                    p[f"block{i}.mlp.fc2.w"], p[f"block{i}.mlp.fc2.b"]))
            else:
                gate1, shift1, scale1, gate2, shift2, scale2 = self.modulations(cond_rows, i)
                branch = frame_wise_adaln(hidden, scale1, shift1)
                branch = banded_self_attention(branch, *attn_args, layout)
                hidden = ad.add(hidden, frame_wise_gate(branch, gate1))
                branch = frame_wise_adaln(hidden, scale2, shift2)
                branch = gelu_mlp(branch, p[f"block{i}.mlp.fc1.w"], p[f"block{i}.mlp.fc1.b"],
                                  p[f"block{i}.mlp.fc2.w"], p[f"block{i}.mlp.fc2.b"])
                hidden = ad.add(hidden, frame_wise_gate(branch, gate2))
        return dense(layer_norm(hidden), p["out_proj.w"], p["out_proj.b"])

    def predict(self, x_t: np.ndarray, audio, emotion, source_motion, t,
                extra=None) -> np.ndarray:
        """Inference convenience: assemble conditions and run the stack."""
        rows = self.condition_rows(audio, emotion, source_motion, t, extra)
        out = self.forward(np.asarray(x_t, dtype=np.float64), rows)
        return out.value if isinstance(out, Tensor) else np.asarray(out)

    # -- persistence --------------------------------------------------------

    def save(self, path, parameterization: str = "flow", extra_header: dict | None = None):
        header = {
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "parameterization": parameterization,
        }
        if extra_header:
            header.update(extra_header)
        write_container(path, CHECKPOINT_MAGIC, header, self.params.arrays())

    @classmethod
    def load(cls, path, expect_config: PredictorConfig | None = None):
        """Load a checkpoint; returns (model, header).

        If ``expect_config`` is given, every differing field is reported in
        one ConfigError.
        """
        _, _, header, arrays = read_container(path, CHECKPOINT_MAGIC)
        config = PredictorConfig.from_dict(header["config"])
        if expect_config is not None and config != expect_config:
            diffs = [
                f"{k}: checkpoint={getattr(config, k)} expected={getattr(expect_config, k)}"
                for k in config.to_dict()
                if getattr(config, k) != getattr(expect_config, k)
            ]
            raise ConfigError("checkpoint config mismatch: " + "; ".join(diffs))
        model = cls(config, seed=0)
        stored = set(arrays)
        built = set(model.params.names())
        if stored != built:
            raise ConfigError(
                f"checkpoint parameter table mismatch: missing={sorted(built - stored)}"
                f" unexpected={sorted(stored - built)}")
        for name in model.params.names():
            if arrays[name].shape != model.params[name].value.shape:
                raise ConfigError(
                    f"parameter {name}: shape {arrays[name].shape} != "
                    f"{model.params[name].value.shape}")
            np.copyto(model.params[name].value, arrays[name])
        return model, header
