import numpy as np
import pytest

from motionflow.diffusion import (NoiseSchedule, ddim_sample, ddim_timesteps,
                                  eps_from_x0, forward_noise,
                                  generate_window_ddim, loss_eps,
                                  loss_x0_simple, loss_x0_total,
                                  loss_x0_velocity, x0_from_eps)
from motionflow.errors import ShapeError
from motionflow.predictor import PredictorConfig, VectorFieldPredictor
from motionflow.sampler import CallCounter, GuidanceSpec, WindowState

RNG = np.random.default_rng(2024)


def test_cosine_schedule_shape_and_monotonicity():
    sched = NoiseSchedule.cosine(500)
    assert sched.steps == 500
    assert np.all(sched.betas > 0) and np.all(sched.betas <= 0.999)
    assert np.all(np.diff(sched.alpha_bars) < 0)            # strictly decreasing
    assert 0 < sched.alpha_bars[-1] < sched.alpha_bars[0] <= 1.0
    assert sched.alpha_bar(0) == 1.0
    # early steps keep the signal nearly intact
    assert sched.alpha_bar(1) > 0.999


def test_forward_noise_endpoints_and_linearity():
    sched = NoiseSchedule.cosine(500)
    x0 = RNG.standard_normal((6, 4))
    eps = RNG.standard_normal((6, 4))
    # eps = 0: pure signal scaling
    got = forward_noise(x0, 250, np.zeros_like(x0), sched)
    assert np.allclose(got, np.sqrt(sched.alpha_bar(250)) * x0, atol=0)
    # small t: x_t ~ x0
    got = forward_noise(x0, 1, eps, sched)
    assert np.max(np.abs(got - x0)) <= 0.1
    with pytest.raises(IndexError):
        forward_noise(x0, 0, eps, sched)
    with pytest.raises(IndexError):
        forward_noise(x0, 501, eps, sched)


def test_forward_noise_algebraic_inversion():
    sched = NoiseSchedule.cosine(500)
    x0 = RNG.standard_normal((5, 3))
    eps = RNG.standard_normal((5, 3))
    for t in (1, 137, 499):
        x_t = forward_noise(x0, t, eps, sched)
        assert np.max(np.abs(x0_from_eps(x_t, eps, t, sched) - x0)) <= 1e-12
        assert np.max(np.abs(eps_from_x0(x_t, x0, t, sched) - eps)) <= 1e-12


def test_parameterization_duality_round_trip():
    sched = NoiseSchedule.cosine(500)
    x_t = RNG.standard_normal((4, 4))
    eps = RNG.standard_normal((4, 4))
    t = 321
    x0 = x0_from_eps(x_t, eps, t, sched)
    assert np.max(np.abs(eps_from_x0(x_t, x0, t, sched) - eps)) <= 1e-12


def test_closed_form_matches_iterated_forward_statistics():
    # composing the stepwise kernel t times matches the closed-form marginal
    sched = NoiseSchedule.cosine(50)
    rng = np.random.default_rng(3)
    n = 100_000
    x0 = 1.7
    t = 12
    x = np.full(n, x0)
    for step in range(1, t + 1):
        beta = sched.betas[step - 1]
        x = np.sqrt(1 - beta) * x + np.sqrt(beta) * rng.standard_normal(n)
    abar = sched.alpha_bar(t)
    want_mean, want_std = np.sqrt(abar) * x0, np.sqrt(1 - abar)
    assert abs(x.mean() - want_mean) <= 3 * want_std / np.sqrt(n)
    assert abs(x.std(ddof=1) - want_std) <= 3 * want_std / np.sqrt(2 * n)


def test_losses_zero_and_offsets():
    pred = RNG.standard_normal((5, 3))
    assert loss_eps(pred, pred) == 0.0
    assert abs(loss_eps(pred + 1.0, pred) - 1.0) <= 1e-12
    assert loss_x0_simple(pred, pred) == 0.0
    # constant per-frame offset: velocity term zero, simple term positive
    assert loss_x0_velocity(pred + 2.0, pred) <= 1e-12
    assert loss_x0_simple(pred + 2.0, pred) > 0
    with pytest.raises(ShapeError):
        loss_eps(pred, pred[:3])


def test_loss_x0_hand_case():
    pred = np.array([[0.0], [2.0], [3.0]])
    x0 = np.array([[0.0], [1.0], [1.0]])
    simple = np.mean((pred - x0) ** 2)                  # (0 + 1 + 4) / 3
    vel = np.mean((np.diff(pred, axis=0) - np.diff(x0, axis=0)) ** 2)
    assert abs(loss_x0_simple(pred, x0) - simple) <= 1e-12
    assert abs(loss_x0_velocity(pred, x0) - vel) <= 1e-12
    assert abs(loss_x0_total(pred, x0) - (simple + vel)) <= 1e-12


def test_ddim_timesteps_stride():
    taus = ddim_timesteps(500, 50)
    assert len(taus) == 50
    assert taus[0] == 500 and taus[-1] == 10
    assert np.all(np.diff(taus) == -10)


def test_ddim_with_oracle_noise_recovers_clean_sample():
    # a predictor returning the exact forward noise inverts the chain exactly
    sched = NoiseSchedule.cosine(500)
    x0 = RNG.standard_normal((6, 4))
    eps = RNG.standard_normal((6, 4))
    x_init = forward_noise(x0, 500, eps, sched)
    got = ddim_sample(lambda x, t: eps, sched, x_init, steps=50,
                      parameterization="eps")
    assert np.max(np.abs(got - x0)) <= 1e-12
    # same through the clean-sample parameterization
    got = ddim_sample(lambda x, t: x0, sched, x_init, steps=50,
                      parameterization="x0")
    assert np.max(np.abs(got - x0)) <= 1e-12


def test_ddim_deterministic():
    sched = NoiseSchedule.cosine(500)
    config = PredictorConfig(latent_dim=4, audio_dim=3, hidden_dim=8, heads=2,
                             half_width=1, blocks=1, window_len=4, context_len=2)
    model = VectorFieldPredictor(config, seed=4, zero_init=False)
    audio = RNG.standard_normal((config.total_len, config.audio_dim))
    state = WindowState.initial(config)
    outs = []
    for _ in range(2):
        rng = np.random.Generator(np.random.Philox(17))
        gen, _ = generate_window_ddim(model, sched, "eps", state, audio,
                                      np.eye(7)[1], np.zeros(4),
                                      GuidanceSpec(mode="none"), rng, steps=10)
        outs.append(gen)
    assert np.array_equal(outs[0], outs[1])


def test_ddim_window_counts_calls_and_clamps():
    sched = NoiseSchedule.cosine(500)
    config = PredictorConfig(latent_dim=4, audio_dim=3, hidden_dim=8, heads=2,
                             half_width=1, blocks=1, window_len=4, context_len=2)
    model = VectorFieldPredictor(config, seed=4, zero_init=False)
    audio = RNG.standard_normal((config.total_len, config.audio_dim))
    counter = CallCounter()
    state = WindowState(preceding_motion=np.full((2, 4), 0.25),
                        preceding_audio=np.zeros((2, 3)), index=1, first=False)
    rng = np.random.Generator(np.random.Philox(23))
    gen, new_state = generate_window_ddim(
        model, sched, "x0", state, audio, np.eye(7)[2], np.zeros(4),
        GuidanceSpec(mode="incremental"), rng, steps=10, counter=counter)
    assert counter.count == 10 * 3  # steps x guidance variants
    assert gen.shape == (4, 4)
    assert np.array_equal(new_state.preceding_motion, gen[-2:])
