"""Paired small-scale studies: the velocity penalty's effect on temporal
fidelity, and solver agreement on a trained model. Reduced dimensions keep
these in test-suite time; seeds make the comparisons deterministic."""

import numpy as np
import pytest

from motionflow.evaluate import WindowSampler, generate_clip
from motionflow.metrics import velocity_error
from motionflow.predictor import PredictorConfig, VectorFieldPredictor
from motionflow.sampler import GuidanceSpec
from motionflow.synthdata import SceneSpec, make_dataset
from motionflow.training import TrainSettings, train_flow

CONFIG = PredictorConfig(latent_dim=8, audio_dim=4, hidden_dim=32, heads=2,
                         half_width=2, blocks=2, window_len=16, context_len=4)
SPEC = SceneSpec(seed=29, latent_dim=8, audio_dim=4, directions=4,
                 identities=10, frames=32)
GUIDE = GuidanceSpec(mode="incremental", audio_scale=2.0, emotion_scale=1.0)


@pytest.fixture(scope="module")
def data():
    train = make_dataset(SPEC, 400)
    held = make_dataset(SPEC, 12, first_clip=5000)
    return train, held


def _mean_velocity_error(model, held):
    sampler = WindowSampler(model, kind="flow", nfe=10)
    errs = []
    for clip in range(held.n_clips):
        windows, _ = generate_clip(sampler, held, clip, GUIDE, seed=3)
        generated = np.concatenate(windows, axis=0)
        oracle = held.clip_motion(clip)[:generated.shape[0]]
        errs.append(velocity_error(generated, oracle))
    return float(np.mean(errs))


def test_velocity_penalty_does_not_hurt_temporal_fidelity(data):
    # paired runs differing only in the velocity weight
    train, held = data
    errors = {}
    for weight in (0.0, 1.0):
        model = VectorFieldPredictor(CONFIG, seed=1)
        train_flow(model, train,
                   TrainSettings(steps=1200, batch=6, log_every=200, seed=5,
                                 weight_velocity=weight))
        errors[weight] = _mean_velocity_error(model, held)
    assert errors[1.0] <= errors[0.0], errors


def test_solvers_agree_within_step_error_on_trained_model(data):
    train, held = data
    model = VectorFieldPredictor(CONFIG, seed=2)
    train_flow(model, train, TrainSettings(steps=600, batch=6, log_every=200, seed=6))
    diffs = []
    for clip in range(6):
        outs = {}
        for solver in ("euler", "midpoint"):
            sampler = WindowSampler(model, kind="flow", nfe=10, solver=solver)
            windows, _ = generate_clip(sampler, held, clip, GUIDE, seed=11)
            outs[solver] = np.concatenate(windows, axis=0)
        diffs.append(np.mean(np.abs(outs["euler"] - outs["midpoint"])))
    # solver gap is first-order small; regression bound from the seeded run
    assert float(np.mean(diffs)) <= 0.2, diffs
