import numpy as np
import pytest

from motionflow.errors import DataError
from motionflow.evaluate import (WindowSampler, evaluate_checkpoint,
                                 field_mse, generate_clip, oracle_self_floor)
from motionflow.metrics import coefficient_correlation, energy_distance
from motionflow.predictor import PredictorConfig, VectorFieldPredictor
from motionflow.sampler import GuidanceSpec
from motionflow.synthdata import SceneSpec, make_dataset

CONFIG = PredictorConfig(latent_dim=8, audio_dim=4, hidden_dim=16, heads=2,
                         half_width=1, blocks=2, window_len=8, context_len=3)
SPEC = SceneSpec(seed=19, latent_dim=8, audio_dim=4, directions=4,
                 identities=5, frames=24)


@pytest.fixture(scope="module")
def held():
    return make_dataset(SPEC, 16, first_clip=900)


def test_oracle_self_evaluation_is_perfect(held):
    # feeding the oracle's own trajectories: correlation exactly 1
    trajs = [held.clip_coeffs(c) for c in range(8)]
    assert abs(coefficient_correlation(trajs, [t.copy() for t in trajs]) - 1.0) <= 1e-12
    motions = np.concatenate([held.clip_motion(c) for c in range(8)], axis=0)
    assert energy_distance(motions, motions.copy()) <= 1e-8


def test_untrained_zero_field_model_has_no_correlation(held):
    model = VectorFieldPredictor(CONFIG, seed=0)  # zero field
    rep = evaluate_checkpoint(model, held, GuidanceSpec(mode="none"), nfe=4,
                              clips=list(range(8)), seed=0, emotion_pairs=1)
    assert abs(rep.scalars["coeff_corr"]) <= 0.15
    assert rep.scalars["energy_distance"] > 0.3


def test_field_mse_zero_model_matches_field_variance(held):
    # zero prediction: MSE equals E[u^2]; sanity-bounded around it
    model = VectorFieldPredictor(CONFIG, seed=0)
    mse = field_mse(model, held, n_items=64, seed=0)
    u_sq = []
    rng = np.random.default_rng(0)
    for _ in range(64):
        item = held.sample_item(rng, CONFIG.window_len, CONFIG.context_len)
        u_sq.append(np.mean((item.target_motion) ** 2) + 1.0)
    approx = np.mean(u_sq)
    assert 0.5 * approx <= mse <= 1.5 * approx


def test_oracle_floor_uses_disjoint_same_size_sets(held):
    floor = oracle_self_floor(held, clips=list(range(8)))
    assert floor > 0
    direct = energy_distance(
        np.concatenate([held.clip_motion(c) for c in range(8)], axis=0),
        np.concatenate([held.clip_motion(c) for c in range(8, 16)], axis=0))
    assert abs(floor - direct) <= 1e-12


def test_oracle_floor_falls_back_to_halving():
    tiny = make_dataset(SPEC, 4)
    floor = oracle_self_floor(tiny, clips=list(range(4)))  # no spare clips
    assert floor >= 0


def test_evaluate_rejects_empty_selection(held):
    model = VectorFieldPredictor(CONFIG, seed=0)
    with pytest.raises(DataError):
        evaluate_checkpoint(model, held, GuidanceSpec(mode="none"), clips=[])


def test_generate_clip_window_count_and_timing(held):
    model = VectorFieldPredictor(CONFIG, seed=3, zero_init=False)
    sampler = WindowSampler(model, kind="flow", nfe=3)
    windows, elapsed = generate_clip(sampler, held, 0, GuidanceSpec(mode="none"),
                                     seed=4)
    assert len(windows) == SPEC.frames // CONFIG.window_len
    assert all(w.shape == (CONFIG.window_len, CONFIG.latent_dim) for w in windows)
    assert elapsed > 0


def test_sweep_wall_clock_linear_in_nfe(held):
    # integrate-only wall clock against nfe: straight-line fit r^2 >= 0.95
    model = VectorFieldPredictor(CONFIG, seed=3, zero_init=False)
    nfes = [2, 5, 10, 20]
    times = []
    for nfe in nfes:
        sampler = WindowSampler(model, kind="flow", nfe=nfe)
        elapsed = 0.0
        for clip in range(6):
            _, dt = generate_clip(sampler, held, clip,
                                  GuidanceSpec(mode="incremental"), seed=0)
            elapsed += dt
        times.append(elapsed)
    x = np.asarray(nfes, dtype=float)
    y = np.asarray(times)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = np.sum((y - fitted) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r_sq = 1 - ss_res / ss_tot
    assert r_sq >= 0.95, f"r^2 = {r_sq:.4f}, times {times}"
