"""Straight-path conditional flow matching: interpolation, target field,
training losses, and condition dropout.

The probability path runs from standard normal noise at time 0 to data at
time 1 along straight lines, so the regression target is the constant
per-pair velocity. Losses use L1 distance with mean reduction over frames
and dimensions; the context-window term supervises the predictor's output
at the context rows to reproduce the known context latents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ShapeError


def ot_interpolate(x0: np.ndarray, x1: np.ndarray, t: float) -> np.ndarray:
    """(1 - t) * x0 + t * x1; exact at both endpoints."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    if t == 0.0:
        return x0.copy()
    if t == 1.0:
        return x1.copy()
    return (1.0 - t) * x0 + t * x1


def target_field(x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    """Constant velocity x1 - x0 (independent of time)."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ShapeError(f"endpoint shapes differ: {x0.shape} vs {x1.shape}")
    return x1 - x0


def conditional_path_logpdf(x: np.ndarray, x1: np.ndarray, t: float) -> float:
    """Log density of the path marginal N(t * x1, (1 - t)^2 I) at x."""
    x = np.asarray(x, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x.shape != x1.shape:
        raise ShapeError(f"shapes differ: {x.shape} vs {x1.shape}")
    if not 0.0 <= t < 1.0:
        raise DegenerateError(f"path density is degenerate at t={t}")
    sigma = 1.0 - t
    resid = (x - t * x1) / sigma
    n = x.size
    return float(-0.5 * np.sum(resid**2) - 0.5 * n * np.log(2.0 * np.pi * sigma**2))


def cfm_loss(predicted: np.ndarray, target_u: np.ndarray,
             preceding_target: np.ndarray) -> float:
    """Mean-L1 field error on the generated rows plus mean-L1 reconstruction
    error on the context rows. ``predicted`` stacks [context | generated]."""
    predicted = np.asarray(predicted, dtype=np.float64)
    target_u = np.asarray(target_u, dtype=np.float64)
    preceding_target = np.asarray(preceding_target, dtype=np.float64)
    n_prev = preceding_target.shape[0]
    n_gen = target_u.shape[0]
    if predicted.shape[0] != n_prev + n_gen:
        raise ShapeError(
            f"predicted rows {predicted.shape[0]} != {n_prev} context + {n_gen} generated")
    if predicted.shape[1:] != target_u.shape[1:] or target_u.shape[1:] != preceding_target.shape[1:]:
        raise ShapeError("column dimensions differ between prediction and targets")
    gen_term = np.mean(np.abs(predicted[n_prev:] - target_u))
    prev_term = np.mean(np.abs(predicted[:n_prev] - preceding_target)) if n_prev else 0.0
    return float(gen_term + prev_term)


def velocity_loss(predicted: np.ndarray, stitched_target: np.ndarray) -> float:
    """Mean-L1 mismatch of one-frame temporal differences."""
    predicted = np.asarray(predicted, dtype=np.float64)
    stitched_target = np.asarray(stitched_target, dtype=np.float64)
    if predicted.shape != stitched_target.shape:
        raise ShapeError(f"shapes differ: {predicted.shape} vs {stitched_target.shape}")
    if predicted.shape[0] < 2:
        raise ShapeError("velocity loss needs at least 2 frames")
    dp = np.diff(predicted, axis=0)
    dt = np.diff(stitched_target, axis=0)
    return float(np.mean(np.abs(dp - dt)))


def total_loss(cfm: float, vel: float, weight_flow: float = 1.0,
               weight_velocity: float = 1.0) -> float:
    return weight_flow * cfm + weight_velocity * vel


@dataclass
class DropoutMask:
    drop_source: bool = False
    drop_emotion: bool = False
    drop_audio: bool = False
    drop_preceding: bool = False

    @classmethod
    def none(cls) -> "DropoutMask":
        return cls()

    @classmethod
    def all(cls) -> "DropoutMask":
        return cls(True, True, True, True)


DEFAULT_DROP_PROBS = {"source": 0.1, "emotion": 0.1, "audio": 0.1, "preceding": 0.5}


def sample_dropout(rng: np.random.Generator, probs: dict | None = None) -> DropoutMask:
    """Independent Bernoulli draws per condition channel."""
    p = dict(DEFAULT_DROP_PROBS)
    if probs:
        p.update(probs)
    for key, val in p.items():
        if not 0.0 <= val <= 1.0:
            raise ShapeError(f"dropout probability {key}={val} outside [0, 1]")
    return DropoutMask(
        drop_source=bool(rng.random() < p["source"]),
        drop_emotion=bool(rng.random() < p["emotion"]),
        drop_audio=bool(rng.random() < p["audio"]),
        drop_preceding=bool(rng.random() < p["preceding"]),
    )


@dataclass
class TrainingItem:
    """One training window: targets, context, and condition channels.

    ``audio`` covers context plus generated rows; ``emotion`` is a 7-class
    probability vector shared across frames; ``source_motion`` is the
    clip-level source latent. ``first_window`` marks items without a real
    predecessor (zero context, dropout forced).
    """

    target_motion: np.ndarray      # (window, d)
    preceding_motion: np.ndarray   # (context, d)
    audio: np.ndarray              # (context + window, d_a)
    emotion: np.ndarray            # (7,)
    source_motion: np.ndarray      # (d,)
    extra: np.ndarray | None = None  # (context + window, d_x)
    first_window: bool = False

    def validate(self, window_len: int, context_len: int):
        if self.target_motion.shape[0] != window_len:
            raise ShapeError(f"target has {self.target_motion.shape[0]} frames, want {window_len}")
        if self.preceding_motion.shape[0] != context_len:
            raise ShapeError(f"context has {self.preceding_motion.shape[0]} frames, want {context_len}")
        if self.audio.shape[0] != window_len + context_len:
            raise ShapeError(f"audio has {self.audio.shape[0]} frames, want {window_len + context_len}")
        s = float(self.emotion.sum())
        if self.emotion.shape != (7,) or np.any(self.emotion < 0) or (
                abs(s - 1.0) > 1e-6 and abs(s) > 1e-12):
            raise ShapeError("emotion must be a 7-class probability vector (or a zero null token)")


def apply_dropout(item: TrainingItem, mask: DropoutMask, context_len: int) -> TrainingItem:
    """Replace dropped channels with zero null tokens.

    Audio dropout nulls the generated-window audio rows; preceding dropout
    nulls both the context audio rows and the context motion block (input
    and supervision target alike, matching first-window generation).
    """
    audio = item.audio.copy()
    preceding = item.preceding_motion.copy()
    emotion = item.emotion.copy()
    source = item.source_motion.copy()
    if mask.drop_audio:
        audio[context_len:] = 0.0
    if mask.drop_preceding or item.first_window:
        audio[:context_len] = 0.0
        preceding[:] = 0.0
    if mask.drop_emotion:
        emotion[:] = 0.0
    if mask.drop_source:
        source[:] = 0.0
    return TrainingItem(
        target_motion=item.target_motion,
        preceding_motion=preceding,
        audio=audio,
        emotion=emotion,
        source_motion=source,
        extra=item.extra,
        first_window=item.first_window,
    )
