"""Guided sampling: classifier-free vector fields, fixed-step ODE solvers,
and sliding-window long-sequence generation.

Guidance recombines predictions under nulled condition channels. "Nulling"
zeroes a channel the same way training dropout does: the driving-window
audio rows, the emotion vector, or the source latent. Context audio rows
are never nulled by guidance; they belong to the continuity mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError
from .layers import sinusoidal_embed
from .autodiff import value_of
from .predictor import VectorFieldPredictor

GUIDANCE_MODES = ("none", "single", "incremental")


@dataclass(frozen=True)
class GuidanceSpec:
    mode: str = "incremental"
    scale: float = 2.0          # single-mode guidance scale
    audio_scale: float = 2.0
    emotion_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ConfigError(f"guidance mode {self.mode!r} not in {GUIDANCE_MODES}")
        for value in (self.scale, self.audio_scale, self.emotion_scale):
            if not np.isfinite(value):
                raise ConfigError("guidance scales must be finite")

    @property
    def evals_per_step(self) -> int:
        return {"none": 1, "single": 2, "incremental": 3}[self.mode]


class CallCounter:
    """Counts predictor forward passes (grounds efficiency comparisons)."""

    def __init__(self):
        self.count = 0

    def hit(self):
        self.count += 1


def _null_channels(audio, emotion, source, remove: frozenset, context_len: int):
    audio = np.array(audio, dtype=np.float64)
    emotion = np.array(emotion, dtype=np.float64)
    source = np.array(source, dtype=np.float64)
    if "audio" in remove:
        audio[context_len:] = 0.0
    if "emotion" in remove:
        emotion[:] = 0.0
    if "source" in remove:
        source[:] = 0.0
    return audio, emotion, source


class GuidedField:
    """Callable (x, t) -> guided field for fixed condition channels.

    The linear condition map of each null-variant is precomputed once; per
    step only the time embedding is added, so guidance cost is exactly one
    predictor call per variant per step.
    """

    _VARIANTS = {
        "none": (frozenset(),),
        "single": (frozenset(), frozenset({"audio", "emotion", "source"})),
        "incremental": (frozenset({"audio", "emotion"}), frozenset({"emotion"}), frozenset()),
    }

    def __init__(self, model: VectorFieldPredictor, guidance: GuidanceSpec,
                 audio, emotion, source, extra=None, counter: CallCounter | None = None):
        self.model = model
        self.guidance = guidance
        self.counter = counter
        context_len = model.config.context_len
        self._bases = {}
        zero_emb = np.zeros((model.config.total_len, model.config.hidden_dim))
        for remove in self._VARIANTS[guidance.mode]:
            a, e, s = _null_channels(audio, emotion, source, remove, context_len)
            channels = model.condition_channels(a, e, s, extra)
            base = value_of(model.condition_from_parts(channels, zero_emb))
            self._bases[remove] = base

    def _predict(self, x, emb: np.ndarray, remove: frozenset) -> np.ndarray:
        rows = self._bases[remove] + emb
        if self.counter is not None:
            self.counter.hit()
        return value_of(self.model.forward(x, rows))

    def guided_output(self, x: np.ndarray, emb: np.ndarray) -> np.ndarray:
        """Recombine variant predictions for an arbitrary time embedding."""
        g = self.guidance
        if g.mode == "none":
            return self._predict(x, emb, frozenset())
        if g.mode == "single":
            cond = self._predict(x, emb, frozenset())
            null = self._predict(x, emb, frozenset({"audio", "emotion", "source"}))
            return g.scale * cond + (1.0 - g.scale) * null
        base = self._predict(x, emb, frozenset({"audio", "emotion"}))
        with_audio = self._predict(x, emb, frozenset({"emotion"}))
        full = self._predict(x, emb, frozenset())
        return (base + g.audio_scale * (with_audio - base)
                + g.emotion_scale * (full - with_audio))

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.guided_output(x, sinusoidal_embed(t, self.model.config.hidden_dim))


def cfv(model, x, t, audio, emotion, source, gamma, extra=None,
        counter=None) -> np.ndarray:
    """Affine recombination of conditional and fully-nulled predictions."""
    field = GuidedField(model, GuidanceSpec(mode="single", scale=gamma),
                        audio, emotion, source, extra, counter)
    return field(np.asarray(x, dtype=np.float64), float(t))


def incremental_cfv(model, x, t, audio, emotion, source, audio_scale,
                    emotion_scale, extra=None, counter=None) -> np.ndarray:
    """Three-term recombination separating audio and emotion channels."""
    field = GuidedField(
        model,
        GuidanceSpec(mode="incremental", audio_scale=audio_scale,
                     emotion_scale=emotion_scale),
        audio, emotion, source, extra, counter)
    return field(np.asarray(x, dtype=np.float64), float(t))


def _check_finite(v: np.ndarray, step: int):
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite field output at step {step}")


def euler_integrate(field_fn, x0: np.ndarray, nfe: int) -> np.ndarray:
    """Forward Euler on the uniform grid t_k = k / nfe.

    Returns the full trajectory, shape (nfe + 1, *x0.shape); the last state
    is the sample.
    """
    if nfe < 1:
        raise ConfigError(f"nfe must be >= 1, got {nfe}")
    x = np.array(x0, dtype=np.float64)
    dt = 1.0 / nfe
    trajectory = [x.copy()]
    for k in range(nfe):
        v = field_fn(x, k * dt)
        _check_finite(v, k)
        x = x + dt * v
        trajectory.append(x.copy())
    return np.stack(trajectory)


def midpoint_integrate(field_fn, x0: np.ndarray, nfe: int) -> np.ndarray:
    """Explicit midpoint rule on the same grid (2 evaluations per step)."""
    if nfe < 1:
        raise ConfigError(f"nfe must be >= 1, got {nfe}")
    x = np.array(x0, dtype=np.float64)
    dt = 1.0 / nfe
    trajectory = [x.copy()]
    for k in range(nfe):
        k1 = field_fn(x, k * dt)
        _check_finite(k1, k)
        k2 = field_fn(x + 0.5 * dt * k1, k * dt + 0.5 * dt)
        _check_finite(k2, k)
        x = x + dt * k2
        trajectory.append(x.copy())
    return np.stack(trajectory)


SOLVERS = {"euler": euler_integrate, "midpoint": midpoint_integrate}


@dataclass
class WindowState:
    """Sliding-window context: the last context-window of generated motion
    and audio. The first window carries zero blocks."""

    preceding_motion: np.ndarray
    preceding_audio: np.ndarray
    index: int = 0
    first: bool = True

    @classmethod
    def initial(cls, config) -> "WindowState":
        return cls(
            preceding_motion=np.zeros((config.context_len, config.latent_dim)),
            preceding_audio=np.zeros((config.context_len, config.audio_dim)),
            index=0,
            first=True,
        )


def generate_window(model: VectorFieldPredictor, state: WindowState,
                    audio_window: np.ndarray, emotion, source_motion,
                    guidance: GuidanceSpec, nfe: int, rng: np.random.Generator,
                    solver: str = "euler", extra=None, clamp_preceding: bool = True,
                    counter: CallCounter | None = None,
                    trajectory_sink: list | None = None):
    """Sample one window of motion latents; returns (latents, next_state).

    Noise is drawn over the full context+window block; the context rows are
    pinned to the known context latents throughout integration (disable via
    ``clamp_preceding`` for comparison runs). The context slice of
    ``audio_window`` is taken from the state.
    """
    c = model.config
    audio_window = np.array(audio_window, dtype=np.float64)
    if audio_window.shape != (c.total_len, c.audio_dim):
        raise ShapeError(
            f"audio window shape {audio_window.shape} != ({c.total_len}, {c.audio_dim})")
    if solver not in SOLVERS:
        raise ConfigError(f"unknown solver {solver!r}")
    audio_window[:c.context_len] = state.preceding_audio
    field = GuidedField(model, guidance, audio_window, emotion, source_motion,
                        extra, counter)
    x0 = rng.standard_normal((c.total_len, c.latent_dim))
    if clamp_preceding:
        x0[:c.context_len] = state.preceding_motion

        def clamped(x, t):
            v = field(x, t).copy()
            v[:c.context_len] = 0.0
            return v

        field_fn = clamped
    else:
        field_fn = field
    trajectory = SOLVERS[solver](field_fn, x0, nfe)
    if trajectory_sink is not None:
        trajectory_sink.append(trajectory)
    generated = trajectory[-1][c.context_len:]
    next_state = WindowState(
        preceding_motion=generated[-c.context_len:].copy(),
        preceding_audio=audio_window[-c.context_len:].copy(),
        index=state.index + 1,
        first=False,
    )
    return generated.copy(), next_state


def generate_sequence(model: VectorFieldPredictor, audio: np.ndarray, emotion,
                      source_motion, guidance: GuidanceSpec, nfe: int, seed: int,
                      solver: str = "euler", extra=None, clamp_preceding: bool = True,
                      counter: CallCounter | None = None,
                      trajectory_sink: list | None = None) -> np.ndarray:
    """Sliding-window generation over arbitrarily long audio.

    Each window consumes the next window-length of audio and reuses the
    previous window's tail as context. Output length equals the audio length
    (the last window is trimmed).
    """
    c = model.config
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 2 or audio.shape[1] != c.audio_dim:
        raise ShapeError(f"audio shape {audio.shape} != (frames, {c.audio_dim})")
    frames = audio.shape[0]
    n_windows = max(1, -(-frames // c.window_len))
    padded = n_windows * c.window_len

    def pad_frames(arr, width):
        arr = np.asarray(arr, dtype=np.float64)
        out = np.zeros((padded, width))
        out[:arr.shape[0]] = arr
        return out

    audio_padded = pad_frames(audio, c.audio_dim)
    extra_padded = pad_frames(extra, c.extra_dims) if extra is not None else None
    prev_extra = np.zeros((c.context_len, c.extra_dims)) if extra is not None else None

    rng = np.random.Generator(np.random.Philox(seed))
    state = WindowState.initial(c)
    chunks = []
    for w in range(n_windows):
        lo, hi = w * c.window_len, (w + 1) * c.window_len
        window_audio = np.concatenate([state.preceding_audio, audio_padded[lo:hi]], axis=0)
        window_extra = None
        if extra_padded is not None:
            window_extra = np.concatenate([prev_extra, extra_padded[lo:hi]], axis=0)
            prev_extra = window_extra[-c.context_len:]
        generated, state = generate_window(
            model, state, window_audio, emotion, source_motion, guidance, nfe,
            rng, solver=solver, extra=window_extra, clamp_preceding=clamp_preceding,
            counter=counter, trajectory_sink=trajectory_sink)
        chunks.append(generated)
    return np.concatenate(chunks, axis=0)[:frames]


def redirect_emotion(label: np.ndarray, target_index: int) -> np.ndarray:
    """Replace a (possibly mixed) emotion label with a one-hot target."""
    label = np.asarray(label, dtype=np.float64)
    if label.shape != (7,):
        raise ShapeError(f"emotion label shape {label.shape} != (7,)")
    if not 0 <= target_index < 7:
        raise IndexError(f"emotion index {target_index} out of range [0, 7)")
    out = np.zeros(7)
    out[target_index] = 1.0
    return out
