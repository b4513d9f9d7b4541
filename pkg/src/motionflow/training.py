"""Training loops for the flow-matching model and the diffusion baselines.

Batches are stacked along the frame axis and attention is restricted by a
block-diagonal band mask, so one tape covers the whole batch. The batched
losses equal the per-item reference losses averaged over the batch (see the
equivalence tests).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward
from .diffusion import NoiseSchedule, forward_noise
from .errors import NumericalError
from .flow import apply_dropout, sample_dropout
from .layers import BandLayout, sinusoidal_embed
from .params import Adam
from .predictor import VectorFieldPredictor


@dataclass
class TrainSettings:
    lr: float = 1e-3
    lr_final: float = 1e-4
    batch: int = 8
    steps: int = 5000
    weight_flow: float = 1.0
    weight_velocity: float = 1.0
    drop_source: float = 0.1
    drop_emotion: float = 0.1
    drop_audio: float = 0.1
    drop_preceding: float = 0.5
    log_every: int = 50
    seed: int = 0

    def drop_probs(self) -> dict:
        return {"source": self.drop_source, "emotion": self.drop_emotion,
                "audio": self.drop_audio, "preceding": self.drop_preceding}

    def lr_at(self, step: int) -> float:
        """Cosine decay from lr to lr_final over the run (reduces parameter
        noise at the end of training). lr = 0 disables updates entirely."""
        if self.lr == 0.0 or self.steps <= 1:
            return self.lr
        frac = (step - 1) / (self.steps - 1)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (
            1 + np.cos(np.pi * frac))


def _draw_items(model, dataset, rng, settings):
    c = model.config
    items = []
    for _ in range(settings.batch):
        item = dataset.sample_item(rng, c.window_len, c.context_len)
        mask = sample_dropout(rng, settings.drop_probs())
        items.append(apply_dropout(item, mask, c.context_len))
    return items


def _stack_conditions(model, items, times):
    """Channel matrix and per-item time-embedding rows, stacked."""
    c = model.config
    channels = np.concatenate([
        model.condition_channels(it.audio, it.emotion, it.source_motion, it.extra)
        for it in items], axis=0)
    emb = np.concatenate([
        np.tile(sinusoidal_embed(t, c.hidden_dim), (c.total_len, 1))
        for t in times], axis=0)
    return channels, emb


def _loss_masks(batch, total_len, context_len, latent_dim):
    """0/1 masks selecting generated rows, context rows, and within-item
    velocity rows on the stacked batch."""
    gen = np.zeros((batch * total_len, latent_dim))
    prev = np.zeros((batch * total_len, latent_dim))
    vel = np.ones((batch * total_len - 1, latent_dim))
    for b in range(batch):
        lo = b * total_len
        prev[lo:lo + context_len] = 1.0
        gen[lo + context_len:lo + total_len] = 1.0
        if b:
            vel[lo - 1] = 0.0  # seam between stacked items
    return gen, prev, vel


def flow_batch_loss(model, items, times, noises, settings, layout):
    """Batched training loss on tape; returns (loss, parts dict)."""
    c = model.config
    n = settings.batch * c.total_len
    x_rows = np.empty((n, c.latent_dim))
    target = np.empty((n, c.latent_dim))
    for b, (item, t, x0) in enumerate(zip(items, times, noises)):
        lo = b * c.total_len
        mid = lo + c.context_len
        hi = lo + c.total_len
        x_rows[lo:mid] = item.preceding_motion
        x_rows[mid:hi] = (1.0 - t) * x0 + t * item.target_motion
        target[lo:mid] = item.preceding_motion
        target[mid:hi] = item.target_motion - x0
    channels, emb = _stack_conditions(model, items, times)
    cond = model.condition_from_parts(channels, emb)
    pred = model.forward(x_rows, cond, layout=layout)

    gen_mask, prev_mask, vel_mask = _loss_masks(
        settings.batch, c.total_len, c.context_len, c.latent_dim)
    diff = ad.absolute(ad.sub(pred, target))
    gen_term = ad.scale(ad.sum_all(ad.mul(diff, gen_mask)),
                        1.0 / (settings.batch * c.window_len * c.latent_dim))
    prev_term = ad.scale(ad.sum_all(ad.mul(diff, prev_mask)),
                         1.0 / (settings.batch * c.context_len * c.latent_dim))
    cfm = ad.add(gen_term, prev_term)

    rows = settings.batch * c.total_len
    d_pred = ad.sub(ad.slice_rows(pred, 1, rows), ad.slice_rows(pred, 0, rows - 1))
    d_target = np.diff(target, axis=0)
    v_diff = ad.absolute(ad.sub(d_pred, d_target))
    vel = ad.scale(ad.sum_all(ad.mul(v_diff, vel_mask)),
                   1.0 / (settings.batch * (c.total_len - 1) * c.latent_dim))

    loss = ad.add(ad.scale(cfm, settings.weight_flow),
                  ad.scale(vel, settings.weight_velocity))
    parts = {"cfm": float(cfm.value), "velocity": float(vel.value)}
    return loss, parts


def diffusion_batch_loss(model, schedule, parameterization, items, t_steps,
                         noises, settings, layout):
    """Batched denoiser loss: noise MSE on generated rows, or clean-sample
    MSE plus velocity MSE on all rows."""
    c = model.config
    n = settings.batch * c.total_len
    x_rows = np.empty((n, c.latent_dim))
    target = np.empty((n, c.latent_dim))
    for b, (item, t_step, eps) in enumerate(zip(items, t_steps, noises)):
        lo = b * c.total_len
        mid = lo + c.context_len
        hi = lo + c.total_len
        x_rows[lo:mid] = item.preceding_motion
        x_rows[mid:hi] = forward_noise(item.target_motion, t_step, eps, schedule)
        if parameterization == "eps":
            target[lo:mid] = 0.0
            target[mid:hi] = eps
        else:
            target[lo:mid] = item.preceding_motion
            target[mid:hi] = item.target_motion
    times = [t / schedule.steps for t in t_steps]
    channels, emb = _stack_conditions(model, items, times)
    cond = model.condition_from_parts(channels, emb)
    pred = model.forward(x_rows, cond, layout=layout)

    gen_mask, prev_mask, vel_mask = _loss_masks(
        settings.batch, c.total_len, c.context_len, c.latent_dim)
    diff = ad.sub(pred, target)
    sq = ad.mul(diff, diff)
    if parameterization == "eps":
        loss = ad.scale(ad.sum_all(ad.mul(sq, gen_mask)),
                        1.0 / (settings.batch * c.window_len * c.latent_dim))
        return loss, {"simple": float(loss.value), "velocity": 0.0}
    simple = ad.scale(ad.sum_all(sq), 1.0 / sq.value.size)
    rows = settings.batch * c.total_len
    d_pred = ad.sub(ad.slice_rows(pred, 1, rows), ad.slice_rows(pred, 0, rows - 1))
    d_target = np.diff(target, axis=0)
    v_diff = ad.sub(d_pred, d_target)
    v_sq = ad.mul(v_diff, v_diff)
    vel = ad.scale(ad.sum_all(ad.mul(v_sq, vel_mask)),
                   1.0 / (settings.batch * (c.total_len - 1) * c.latent_dim))
    loss = ad.add(simple, vel)
    return loss, {"simple": float(simple.value), "velocity": float(vel.value)}


def _run_loop(model, dataset, settings, step_fn, snapshot_path=None):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([settings.seed, 3])))
    optimizer = Adam(model.params, lr=settings.lr)
    layout = BandLayout(settings.batch, model.config.total_len,
                        model.config.half_width)
    history = []
    for step in range(1, settings.steps + 1):
        items = _draw_items(model, dataset, rng, settings)
        with Tape() as tape:
            loss, parts = step_fn(items, rng, layout)
        total = float(loss.value)
        if not np.isfinite(total):
            if snapshot_path is not None:
                snapshot = {"step": step, "parts": parts,
                            "settings": asdict(settings)}
                Path(snapshot_path).write_text(json.dumps(snapshot, indent=1))
            raise NumericalError(f"non-finite loss at step {step}")
        model.params.zero_grad()
        backward(tape, loss)
        optimizer.lr = settings.lr_at(step)
        optimizer.step()
        if step == 1 or step % settings.log_every == 0 or step == settings.steps:
            history.append({"step": step, "loss": total, **parts})
    return history


def train_flow(model: VectorFieldPredictor, dataset, settings: TrainSettings,
               snapshot_path=None) -> list[dict]:
    def step_fn(items, rng, layout):
        times = [float(rng.random()) for _ in items]
        noises = [rng.standard_normal((model.config.window_len,
                                       model.config.latent_dim)) for _ in items]
        return flow_batch_loss(model, items, times, noises, settings, layout)

    return _run_loop(model, dataset, settings, step_fn, snapshot_path)


def train_diffusion(model: VectorFieldPredictor, schedule: NoiseSchedule,
                    parameterization: str, dataset, settings: TrainSettings,
                    snapshot_path=None) -> list[dict]:
    if parameterization not in ("eps", "x0"):
        raise NumericalError(f"unknown parameterization {parameterization!r}")

    def step_fn(items, rng, layout):
        t_steps = [int(rng.integers(1, schedule.steps + 1)) for _ in items]
        noises = [rng.standard_normal((model.config.window_len,
                                       model.config.latent_dim)) for _ in items]
        return diffusion_batch_loss(model, schedule, parameterization, items,
                                    t_steps, noises, settings, layout)

    return _run_loop(model, dataset, settings, step_fn, snapshot_path)


def write_loss_csv(history: list[dict], path):
    keys = list(history[0].keys())
    lines = [",".join(keys)]
    for row in history:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                              for k in keys))
    Path(path).write_text("\n".join(lines) + "\n")
