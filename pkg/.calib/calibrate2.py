import json, time
import numpy as np
from motionflow.predictor import PredictorConfig, VectorFieldPredictor
from motionflow.synthdata import SceneSpec, make_dataset
from motionflow.training import TrainSettings, train_flow, train_diffusion
from motionflow.diffusion import NoiseSchedule
from motionflow.sampler import GuidanceSpec
from motionflow.evaluate import WindowSampler, generate_clip, oracle_self_floor
from motionflow.basis import project
from motionflow.metrics import pearson, energy_distance, velocity_error

spec = SceneSpec(seed=7)
ds = make_dataset(spec, 2000)
held = make_dataset(spec, 64, first_clip=100000)
cfg = PredictorConfig()
basis = held.scene.basis

def full_eval(model, kind, nfe, guidance, clips=range(32), ddim=50):
    sampler = WindowSampler(model, kind=kind, nfe=nfe, ddim_steps=ddim)
    gcoef, ocoef, gmot, omot = [], [], [], []
    for clip in clips:
        windows, _ = generate_clip(sampler, held, clip, guidance, seed=0)
        gen = np.concatenate(windows, 0)
        gcoef.append(np.array([project(f, basis) for f in gen]))
        ocoef.append(held.clip_coeffs(clip)[:48])
        gmot.append(gen); omot.append(held.clip_motion(clip)[:48])
    G, O = np.concatenate(gcoef), np.concatenate(ocoef)
    corr = np.mean([pearson(G[:, j], O[:, j]) for j in range(8)])
    disp = G.std(0).mean()/O.std(0).mean()
    GM, OM = np.concatenate(gmot), np.concatenate(omot)
    return dict(corr=round(corr,4), disp=round(disp,3),
                e_marg=round(energy_distance(GM, OM),4),
                e_delta=round(energy_distance(np.diff(GM, axis=0), np.diff(OM, axis=0)),4),
                vel=round(float(np.mean([velocity_error(g,o) for g,o in zip(gmot,omot)])),4))

g11 = GuidanceSpec(mode="incremental", audio_scale=1.0, emotion_scale=1.0)
g21 = GuidanceSpec(mode="incremental", audio_scale=2.0, emotion_scale=1.0)

for steps in (5000, 8000):
    m = VectorFieldPredictor(cfg, seed=0)
    t0 = time.perf_counter()
    hist = train_flow(m, ds, TrainSettings(steps=steps, batch=8, log_every=100, seed=0))
    print(f"flow{steps} w/decay: {(time.perf_counter()-t0)/60:.1f} min, loss -> {np.mean([h['loss'] for h in hist[-5:]]):.4f}", flush=True)
    m.save(f".calib/flow{steps}d.ckpt")
    for gl, g in (("g11", g11), ("g21", g21)):
        for nfe in (2, 10, 50):
            print(f"flow{steps} {gl} nfe={nfe}:", full_eval(m, "flow", nfe, g), flush=True)

m = VectorFieldPredictor(cfg, seed=0)
t0 = time.perf_counter()
hist = train_diffusion(m, NoiseSchedule.cosine(500), "eps", ds, TrainSettings(steps=6000, batch=8, log_every=100, seed=0))
print(f"eps6000 w/decay: {(time.perf_counter()-t0)/60:.1f} min, loss -> {np.mean([h['loss'] for h in hist[-5:]]):.5f}", flush=True)
m.save(".calib/eps6000d.ckpt")
print("eps6000 g11 ddim50:", full_eval(m, "eps", 10, g11), flush=True)

m = VectorFieldPredictor(cfg, seed=0)
hist = train_diffusion(m, NoiseSchedule.cosine(500), "x0", ds, TrainSettings(steps=3000, batch=8, log_every=100, seed=0))
m.save(".calib/x03000d.ckpt")
print("x0_3000decay g11 ddim50:", full_eval(m, "x0", 10, g11), flush=True)
print("floor:", oracle_self_floor(held, clips=list(range(32))), flush=True)
print("DONE")
