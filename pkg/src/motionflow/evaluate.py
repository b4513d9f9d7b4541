"""Checkpoint evaluation against the synthetic oracle.

Metrics: field error on known endpoint pairs, coefficient-trajectory
correlation, energy distance of per-frame latent marginals, window-boundary
continuity, and the emotion-redirection effect. Generation timing wraps the
integrate call only.
"""

from __future__ import annotations

import time

import numpy as np

from .basis import project
from .diffusion import NoiseSchedule, generate_window_ddim
from .errors import DataError
from .metrics import (MetricsReport, boundary_jump_stats,
                      coefficient_correlation, energy_distance,
                      sliced_wasserstein, velocity_error)
from .sampler import (CallCounter, GuidanceSpec, WindowState, generate_window,
                      redirect_emotion)


def field_mse(model, dataset, n_items: int = 64, seed: int = 0) -> float:
    """Predictor output vs the analytic straight-path velocity on oracle
    pairs (generated rows only), mean squared."""
    c = model.config
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 5])))
    total = 0.0
    for _ in range(n_items):
        item = dataset.sample_item(rng, c.window_len, c.context_len)
        t = float(rng.random())
        x0 = rng.standard_normal((c.window_len, c.latent_dim))
        u = item.target_motion - x0
        x_rows = np.concatenate(
            [item.preceding_motion, (1 - t) * x0 + t * item.target_motion], axis=0)
        pred = model.predict(x_rows, item.audio, item.emotion, item.source_motion,
                             t, item.extra)
        total += float(np.mean((pred[c.context_len:] - u) ** 2))
    return total / n_items


def _clip_windows(dataset, clip: int, window_len: int):
    frames = dataset.frames
    n_windows = frames // window_len
    return n_windows


class WindowSampler:
    """Uniform window-generation interface over flow and diffusion models."""

    def __init__(self, model, kind: str = "flow",
                 schedule: NoiseSchedule | None = None, nfe: int = 10,
                 solver: str = "euler", ddim_steps: int = 50,
                 clamp_preceding: bool = True):
        if kind not in ("flow", "eps", "x0"):
            raise DataError(f"unknown sampler kind {kind!r}")
        self.model = model
        self.kind = kind
        self.schedule = schedule or (NoiseSchedule.cosine() if kind != "flow" else None)
        self.nfe = nfe
        self.solver = solver
        self.ddim_steps = ddim_steps
        self.clamp_preceding = clamp_preceding

    @property
    def evals_per_sample(self) -> int:
        return self.nfe if self.kind == "flow" else self.ddim_steps

    def window(self, state, audio_window, emotion, source, guidance, rng,
               extra=None, counter=None):
        if self.kind == "flow":
            return generate_window(
                self.model, state, audio_window, emotion, source, guidance,
                self.nfe, rng, solver=self.solver, extra=extra,
                clamp_preceding=self.clamp_preceding, counter=counter)
        return generate_window_ddim(
            self.model, self.schedule, self.kind, state, audio_window, emotion,
            source, guidance, rng, steps=self.ddim_steps, extra=extra,
            clamp_preceding=self.clamp_preceding, counter=counter)


def generate_clip(sampler: WindowSampler, dataset, clip: int,
                  guidance: GuidanceSpec, seed: int, counter=None,
                  emotion_override=None):
    """Sliding-window generation over one clip; returns per-window latents
    plus the integrate-only wall-clock seconds."""
    c = sampler.model.config
    audio = dataset.clip_audio(clip)
    extra = dataset.clip_extra(clip)
    emotion = dataset.emotion[clip] if emotion_override is None else emotion_override
    source = dataset.source_motion[clip]
    n_windows = _clip_windows(dataset, clip, c.window_len)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 13, clip])))
    state = WindowState.initial(c)
    windows = []
    elapsed = 0.0
    for w in range(n_windows):
        lo, hi = w * c.window_len, (w + 1) * c.window_len
        window_audio = np.concatenate([state.preceding_audio, audio[lo:hi]], axis=0)
        window_extra = None
        if extra is not None:
            prev_extra = np.zeros((c.context_len, extra.shape[1])) if w == 0 \
                else extra[lo - c.context_len:lo]
            window_extra = np.concatenate([prev_extra, extra[lo:hi]], axis=0)
        start = time.perf_counter()
        generated, state = sampler.window(state, window_audio, emotion, source,
                                          guidance, rng, extra=window_extra,
                                          counter=counter)
        elapsed += time.perf_counter() - start
        windows.append(generated)
    return windows, elapsed


def evaluate_checkpoint(model, dataset, guidance: GuidanceSpec, nfe: int = 10,
                        clips=None, seed: int = 0, sampler_kind: str = "flow",
                        solver: str = "euler", ddim_steps: int = 50,
                        emotion_pairs: int = 3, sliced: bool = False) -> MetricsReport:
    """Full oracle evaluation; returns a MetricsReport."""
    if clips is None:
        clips = list(range(min(32, dataset.n_clips)))
    if not clips:
        raise DataError("empty held-out clip selection")
    c = model.config
    sampler = WindowSampler(model, kind=sampler_kind, nfe=nfe, solver=solver,
                            ddim_steps=ddim_steps)
    counter = CallCounter()
    basis = dataset.scene.basis

    gen_coeff_trajs, oracle_coeff_trajs = [], []
    gen_rows, oracle_rows = [], []
    all_windows = []
    elapsed = 0.0
    n_windows_total = 0
    for clip in clips:
        windows, dt = generate_clip(sampler, dataset, clip, guidance, seed, counter)
        elapsed += dt
        n_windows_total += len(windows)
        generated = np.concatenate(windows, axis=0)
        frames = generated.shape[0]
        gen_rows.append(generated)
        oracle_rows.append(dataset.clip_motion(clip)[:frames])
        gen_coeff_trajs.append(np.array([project(f, basis) for f in generated]))
        oracle_coeff_trajs.append(dataset.clip_coeffs(clip)[:frames])
        all_windows.append(windows)

    corr = coefficient_correlation(gen_coeff_trajs, oracle_coeff_trajs)
    e_dist = energy_distance(np.concatenate(gen_rows, axis=0),
                             np.concatenate(oracle_rows, axis=0))
    # dynamics marginals: one-frame differences within each clip
    delta_dist = energy_distance(
        np.concatenate([np.diff(g, axis=0) for g in gen_rows], axis=0),
        np.concatenate([np.diff(o, axis=0) for o in oracle_rows], axis=0))
    jumps = [boundary_jump_stats(w) for w in all_windows if len(w) >= 2]
    jump_ratio = float(np.median([j["jump_ratio"] for j in jumps])) if jumps else 0.0
    vel_err = float(np.mean([velocity_error(g, o)
                             for g, o in zip(gen_rows, oracle_rows)]))

    scalars = {
        "field_mse": field_mse(model, dataset, seed=seed) if sampler_kind == "flow" else float("nan"),
        "coeff_corr": corr,
        "energy_distance": e_dist,
        "delta_energy_distance": delta_dist,
        "boundary_jump_ratio": jump_ratio,
        "velocity_error": vel_err,
        "emotion_effect_cosine": emotion_effect_cosine(
            sampler, dataset, guidance, seed=seed, pairs=emotion_pairs),
        "wall_clock_per_sample": elapsed / max(n_windows_total, 1),
        "predictor_calls": counter.count,
        "nfe": sampler.evals_per_sample,
        "evals_per_step": guidance.evals_per_step,
    }
    if sliced:
        scalars["sliced_wasserstein"] = sliced_wasserstein(
            np.concatenate(gen_rows, axis=0), np.concatenate(oracle_rows, axis=0))
    return MetricsReport(config_hash=model.config.hash(), seed=seed, scalars=scalars)


def oracle_self_floor(dataset, clips=None, seed: int = 0) -> float:
    """Noise floor of the energy-distance estimator at the evaluation sample
    size: the distance between the oracle latents of the evaluated clips and
    an equally sized disjoint oracle clip set. Falls back to halving when the
    dataset has no spare clips."""
    if clips is None:
        clips = list(range(min(32, dataset.n_clips)))
    n = len(clips)
    spare = [c for c in range(dataset.n_clips) if c not in set(clips)]
    if len(spare) >= n:
        left, right = clips, spare[:n]
    else:
        half = n // 2
        if half < 1:
            raise DataError("need at least two clips for the self-baseline")
        left, right = clips[:half], clips[half:2 * half]
    first = np.concatenate([dataset.clip_motion(c) for c in left], axis=0)
    second = np.concatenate([dataset.clip_motion(c) for c in right], axis=0)
    return energy_distance(first, second, seed=seed)


def oracle_delta_floor(dataset, clips=None, seed: int = 0) -> float:
    """Resolution of the dynamics-distribution metric at the evaluation
    sample size: energy distance between within-clip one-frame differences
    of two disjoint same-size oracle clip sets."""
    if clips is None:
        clips = list(range(min(32, dataset.n_clips)))
    n = len(clips)
    spare = [c for c in range(dataset.n_clips) if c not in set(clips)]
    if len(spare) >= n:
        left, right = clips, spare[:n]
    else:
        half = n // 2
        if half < 1:
            raise DataError("need at least two clips for the self-baseline")
        left, right = clips[:half], clips[half:2 * half]
    first = np.concatenate([np.diff(dataset.clip_motion(c), axis=0) for c in left], axis=0)
    second = np.concatenate([np.diff(dataset.clip_motion(c), axis=0) for c in right], axis=0)
    return energy_distance(first, second, seed=seed)


def emotion_effect_cosine(sampler: WindowSampler, dataset, guidance: GuidanceSpec,
                          seed: int = 0, pairs: int = 3, clip: int = 0) -> float:
    """Cosine similarity between generated and oracle coefficient shifts when
    the emotion label is redirected between one-hot classes."""
    if pairs < 1:
        return float("nan")
    basis = dataset.scene.basis
    offsets = dataset.scene.emotion_offsets
    rng = np.random.default_rng(seed)
    sims = []
    for _ in range(pairs):
        e1, e2 = rng.choice(7, size=2, replace=False)
        means = []
        for e_idx in (e1, e2):
            label = redirect_emotion(np.zeros(7), int(e_idx))
            windows, _ = generate_clip(sampler, dataset, clip, guidance, seed,
                                       emotion_override=label)
            generated = np.concatenate(windows, axis=0)
            coeffs = np.array([project(f, basis) for f in generated])
            means.append(coeffs.mean(axis=0))
        shift = means[1] - means[0]
        oracle_shift = offsets[e2] - offsets[e1]
        denom = np.linalg.norm(shift) * np.linalg.norm(oracle_shift)
        sims.append(float(shift @ oracle_shift / denom) if denom > 0 else 0.0)
    return float(np.mean(sims))
