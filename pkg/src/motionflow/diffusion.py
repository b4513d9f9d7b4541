"""Diffusion baselines on the shared predictor backbone.

Two parameterizations of the denoiser: direct noise prediction and clean-
sample prediction (the latter with an added velocity term on one-frame
differences). The schedule is the cosine recipe (offset 0.008, betas capped
at 0.999); sampling is deterministic DDIM over an evenly strided subset of
the schedule. Diffusion step t conditions the backbone through the same
time embedding, normalized to t / steps.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, ShapeError


class NoiseSchedule:
    """Per-step betas and cumulative alpha-bar products (1-based steps)."""

    def __init__(self, betas: np.ndarray):
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or np.any(betas <= 0) or np.any(betas >= 1):
            raise ShapeError("betas must be a vector inside (0, 1)")
        self.betas = betas
        self.alpha_bars = np.cumprod(1.0 - betas)

    @property
    def steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        """alpha-bar at step t, with alpha_bar(0) = 1."""
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bars[t - 1])

    def _check(self, t: int):
        if not 1 <= t <= self.steps:
            raise IndexError(f"diffusion step {t} out of range [1, {self.steps}]")

    @classmethod
    def cosine(cls, steps: int = 500, offset: float = 0.008,
               max_beta: float = 0.999) -> "NoiseSchedule":
        grid = np.arange(steps + 1) / steps
        f = np.cos((grid + offset) / (1 + offset) * np.pi / 2) ** 2
        alpha_bar = f / f[0]
        betas = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
        return cls(np.clip(betas, 1e-8, max_beta))


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray,
                  schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"shapes differ: {x0.shape} vs {eps.shape}")
    schedule._check(t)
    abar = schedule.alpha_bar(t)
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def x0_from_eps(x_t: np.ndarray, eps: np.ndarray, t: int,
                schedule: NoiseSchedule) -> np.ndarray:
    abar = schedule.alpha_bar(t)
    return (x_t - np.sqrt(1.0 - abar) * eps) / np.sqrt(abar)


def eps_from_x0(x_t: np.ndarray, x0: np.ndarray, t: int,
                schedule: NoiseSchedule) -> np.ndarray:
    abar = schedule.alpha_bar(t)
    return (x_t - np.sqrt(abar) * x0) / np.sqrt(1.0 - abar)


def loss_eps(predicted: np.ndarray, eps: np.ndarray) -> float:
    """Mean squared error of the noise prediction."""
    predicted = np.asarray(predicted, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if predicted.shape != eps.shape:
        raise ShapeError(f"shapes differ: {predicted.shape} vs {eps.shape}")
    return float(np.mean((predicted - eps) ** 2))


def loss_x0_simple(predicted: np.ndarray, x0: np.ndarray) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if predicted.shape != x0.shape:
        raise ShapeError(f"shapes differ: {predicted.shape} vs {x0.shape}")
    return float(np.mean((predicted - x0) ** 2))


def loss_x0_velocity(predicted: np.ndarray, x0: np.ndarray) -> float:
    """Mean squared mismatch of one-frame differences."""
    predicted = np.asarray(predicted, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if predicted.shape != x0.shape:
        raise ShapeError(f"shapes differ: {predicted.shape} vs {x0.shape}")
    if predicted.shape[0] < 2:
        raise ShapeError("velocity term needs at least 2 frames")
    return float(np.mean((np.diff(predicted, axis=0) - np.diff(x0, axis=0)) ** 2))


def loss_x0_total(predicted: np.ndarray, x0: np.ndarray) -> float:
    return loss_x0_simple(predicted, x0) + loss_x0_velocity(predicted, x0)


def ddim_timesteps(schedule_steps: int, n: int = 50) -> np.ndarray:
    """Evenly strided descending step subset, e.g. 500 -> [500, 490, ..., 10]."""
    stride = schedule_steps // n
    if stride < 1:
        raise ShapeError(f"cannot stride {schedule_steps} steps into {n}")
    return np.arange(schedule_steps, 0, -stride)[:n]


def ddim_sample(predict_fn, schedule: NoiseSchedule, x_init: np.ndarray,
                steps: int = 50, parameterization: str = "eps",
                pin_rows: tuple[int, np.ndarray] | None = None,
                x0_clip: float | None = 10.0) -> np.ndarray:
    """Deterministic DDIM from ``x_init`` at the largest strided step.

    ``predict_fn(x_t, t)`` returns the model output at integer step t; it is
    interpreted per ``parameterization``. One model call per strided step.
    ``pin_rows=(k, values)`` keeps the first k rows fixed at ``values``
    throughout (context clamping).

    ``x0_clip`` bounds the denoised estimate (the usual clip-denoised
    safeguard). The cosine schedule ends at near-zero alpha-bar, so at the
    first strided step the noise-to-clean conversion divides by ~1e-4 and
    would amplify any model error into an off-scale state; clipping keeps
    the chain on the data scale (the bound is a generous multiple of it) and
    the noise estimate is re-derived from the clipped value for consistency.
    """
    if parameterization not in ("eps", "x0"):
        raise ShapeError(f"unknown parameterization {parameterization!r}")
    taus = ddim_timesteps(schedule.steps, steps)
    x = np.array(x_init, dtype=np.float64)

    def pin(state):
        if pin_rows is not None:
            state[:pin_rows[0]] = pin_rows[1]
        return state

    x = pin(x)
    for i, t in enumerate(taus):
        t_next = int(taus[i + 1]) if i + 1 < len(taus) else 0
        out = predict_fn(x, int(t))
        if parameterization == "eps":
            x0_hat = x0_from_eps(x, out, int(t), schedule)
        else:
            x0_hat = out
        if x0_clip is not None:
            x0_hat = np.clip(x0_hat, -x0_clip, x0_clip)
        eps_hat = eps_from_x0(x, x0_hat, int(t), schedule)
        abar_next = schedule.alpha_bar(t_next)
        x = pin(np.sqrt(abar_next) * x0_hat + np.sqrt(1.0 - abar_next) * eps_hat)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite state after DDIM step t={t}")
    return x


def generate_window_ddim(model, schedule: NoiseSchedule, parameterization: str,
                         state, audio_window, emotion, source_motion, guidance,
                         rng, steps: int = 50, extra=None,
                         clamp_preceding: bool = True, counter=None,
                         x0_clip: float | None = 10.0):
    """DDIM counterpart of the flow sampler's window generation.

    Shares the guidance recombination and window-state handling; diffusion
    step t conditions the backbone via the t/steps time embedding.
    """
    from .layers import sinusoidal_embed
    from .sampler import GuidedField, WindowState

    c = model.config
    audio_window = np.array(audio_window, dtype=np.float64)
    if audio_window.shape != (c.total_len, c.audio_dim):
        raise ShapeError(
            f"audio window shape {audio_window.shape} != ({c.total_len}, {c.audio_dim})")
    audio_window[:c.context_len] = state.preceding_audio
    field = GuidedField(model, guidance, audio_window, emotion, source_motion,
                        extra, counter)

    def predict_fn(x, t_step):
        emb = sinusoidal_embed(t_step / schedule.steps, c.hidden_dim)
        return field.guided_output(x, emb)

    x_init = rng.standard_normal((c.total_len, c.latent_dim))
    pin = (c.context_len, state.preceding_motion) if clamp_preceding else None
    sample = ddim_sample(predict_fn, schedule, x_init, steps=steps,
                         parameterization=parameterization, pin_rows=pin,
                         x0_clip=x0_clip)
    generated = sample[c.context_len:]
    next_state = WindowState(
        preceding_motion=generated[-c.context_len:].copy(),
        preceding_audio=audio_window[-c.context_len:].copy(),
        index=state.index + 1,
        first=False,
    )
    return generated.copy(), next_state
