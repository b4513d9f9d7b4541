import json, time
import numpy as np
from motionflow.predictor import PredictorConfig, VectorFieldPredictor
from motionflow.synthdata import SceneSpec, make_dataset
from motionflow.training import TrainSettings, train_flow
from motionflow.sampler import GuidanceSpec
from motionflow.evaluate import WindowSampler, generate_clip, evaluate_checkpoint, oracle_self_floor
from motionflow.basis import project
from motionflow.metrics import pearson, energy_distance, velocity_error

spec = SceneSpec(seed=7)
ds = make_dataset(spec, 2000)
held = make_dataset(spec, 64, first_clip=100000)
cfg = PredictorConfig()
m = VectorFieldPredictor(cfg, seed=0)
t0 = time.perf_counter()
hist = train_flow(m, ds, TrainSettings(steps=8000, batch=8, log_every=100, seed=0))
minutes = (time.perf_counter()-t0)/60
print(f"train 8000 steps w/ decay: {minutes:.1f} min, loss {hist[0]['loss']:.4f} -> {hist[-1]['loss']:.4f}", flush=True)
m.save(".calib/flow8k.ckpt")
basis = held.scene.basis

def full_eval(nfe, guidance, clips=range(32)):
    sampler = WindowSampler(m, kind="flow", nfe=nfe)
    gcoef, ocoef, gmot, omot = [], [], [], []
    win_corr = {0: [], 1: []}
    for clip in clips:
        windows, _ = generate_clip(sampler, held, clip, guidance, seed=0)
        gen = np.concatenate(windows, 0)
        co = held.clip_coeffs(clip)[:48]
        gc = np.array([project(f, basis) for f in gen])
        gcoef.append(gc); ocoef.append(co)
        gmot.append(gen); omot.append(held.clip_motion(clip)[:48])
    G, O = np.concatenate(gcoef), np.concatenate(ocoef)
    corr = np.mean([pearson(G[:, j], O[:, j]) for j in range(8)])
    disp = G.std(0).mean()/O.std(0).mean()
    GM, OM = np.concatenate(gmot), np.concatenate(omot)
    e_marg = energy_distance(GM, OM)
    e_delta = energy_distance(np.diff(GM[:, :], axis=0), np.diff(OM, axis=0))
    vel = np.mean([velocity_error(g, o) for g, o in zip(gmot, omot)])
    return corr, disp, e_marg, e_delta, vel

for label, guidance in (("g(1,1)", GuidanceSpec(mode="incremental", audio_scale=1.0, emotion_scale=1.0)),
                        ("g(2,1)", GuidanceSpec(mode="incremental", audio_scale=2.0, emotion_scale=1.0))):
    for nfe in (2, 10, 50):
        corr, disp, e_marg, e_delta, vel = full_eval(nfe, guidance)
        print(f"{label} nfe={nfe}: corr={corr:.4f} disp={disp:.3f} e_marg={e_marg:.4f} e_delta={e_delta:.4f} vel_err={vel:.4f}", flush=True)
print("floor:", oracle_self_floor(held, clips=list(range(32))), flush=True)
print("DONE")
