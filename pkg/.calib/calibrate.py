import json, time
import numpy as np
from motionflow.predictor import PredictorConfig, VectorFieldPredictor
from motionflow.synthdata import SceneSpec, make_dataset
from motionflow.training import TrainSettings, train_flow, train_diffusion
from motionflow.diffusion import NoiseSchedule
from motionflow.sampler import GuidanceSpec
from motionflow.evaluate import evaluate_checkpoint, oracle_self_floor

out = {}
spec = SceneSpec(seed=7)
t0 = time.perf_counter()
ds = make_dataset(spec, 2000)
held = make_dataset(spec, 64, first_clip=100000)
out["data_gen_s"] = time.perf_counter() - t0

cfg = PredictorConfig()
guide = GuidanceSpec(mode="incremental", audio_scale=2.0, emotion_scale=1.0)
clips = list(range(32))

# flow model, full desk scale
m = VectorFieldPredictor(cfg, seed=0)
t0 = time.perf_counter()
hist = train_flow(m, ds, TrainSettings(steps=5000, batch=8, log_every=50, seed=0))
out["flow_train_min"] = (time.perf_counter() - t0) / 60
out["flow_loss_head"] = [h["loss"] for h in hist[:4]]
out["flow_loss_tail"] = [h["loss"] for h in hist[-4:]]
losses = [h["loss"] for h in hist]
steps = [h["step"] for h in hist]
ma100_at_100 = np.mean([l for s, l in zip(steps, losses) if s <= 100])
ma_tail = np.mean(losses[-5:])
out["ma100_at_100"] = ma100_at_100
out["ma_tail"] = ma_tail
m.save(".calib/flow.ckpt")

rep = evaluate_checkpoint(m, held, guide, nfe=10, clips=clips, seed=0)
out["flow_eval"] = rep.scalars
out["floor"] = oracle_self_floor(held, clips=clips)

# nfe sweep with same seeds
for nfe in (2, 5, 10, 20, 50):
    r = evaluate_checkpoint(m, held, guide, nfe=nfe, clips=clips, seed=0, emotion_pairs=1)
    out[f"nfe_{nfe}"] = {k: r.scalars[k] for k in ("coeff_corr", "energy_distance", "wall_clock_per_sample", "predictor_calls", "boundary_jump_ratio")}
    print("nfe", nfe, out[f"nfe_{nfe}"], flush=True)

# baselines
sched = NoiseSchedule.cosine(500)
for kind, steps_n in (("eps", 3000), ("x0", 3000)):
    bm = VectorFieldPredictor(cfg, seed=0)
    t0 = time.perf_counter()
    bh = train_diffusion(bm, sched, kind, ds, TrainSettings(steps=steps_n, batch=8, log_every=50, seed=0))
    out[f"{kind}_train_min"] = (time.perf_counter() - t0) / 60
    out[f"{kind}_loss"] = [bh[0]["loss"], bh[len(bh)//2]["loss"], bh[-1]["loss"]]
    bm.save(f".calib/{kind}.ckpt")
    br = evaluate_checkpoint(bm, held, GuidanceSpec(mode="incremental", audio_scale=1.0, emotion_scale=1.0),
                             clips=clips, seed=0, sampler_kind=kind, ddim_steps=50, emotion_pairs=1)
    out[f"{kind}_eval"] = {k: br.scalars[k] for k in ("coeff_corr", "energy_distance", "wall_clock_per_sample", "predictor_calls", "boundary_jump_ratio")}
    print(kind, out[f"{kind}_eval"], flush=True)

json.dump(out, open(".calib/result.json", "w"), indent=1)
print("DONE")
