"""Command-line harness: gen-data, train, sample, edit, sweep, eval, inspect.

Exit codes: 0 success, 2 usage/config, 3 data, 4 numerical. Every output
file embeds the effective config hash and seed; no command mutates its
inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .basis import MotionBasis, project, shift_coefficient
from .config import RunConfig, load_run_config
from .diffusion import NoiseSchedule
from .errors import ConfigError, DataError, NumericalError, UsageError
from .evaluate import evaluate_checkpoint, oracle_self_floor
from .io import read_container, refuse_overwrite, write_container
from .metrics import write_report_table
from .predictor import VectorFieldPredictor
from .sampler import GuidanceSpec, generate_sequence
from .synthdata import Dataset, gen_driving, make_dataset
from .training import TrainSettings, train_diffusion, train_flow, write_loss_csv

SEQUENCE_MAGIC = b"MSEQ"


def _echo(args, payload: dict, text: str):
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=1, sort_keys=True, default=str))
    else:
        print(text)


def _load_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    rc = load_run_config(getattr(args, "config", None), overrides)
    rc.validate()
    return rc


def _write_config_echo(out_path, rc: RunConfig):
    Path(str(out_path) + ".config.txt").write_text(rc.to_text())


# -- gen-data ----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    rc = _load_config(args)
    refuse_overwrite(args.out, args.force)
    clips = args.clips if args.clips is not None else rc.clips
    if clips < 1:
        raise DataError("refusing to generate an empty dataset (--clips >= 1)")
    scene_spec = rc.scene
    if rc.seed:
        scene_spec = type(scene_spec).from_dict({**scene_spec.to_dict(), "seed": rc.seed})
    dataset = make_dataset(scene_spec, clips, first_clip=args.first_clip)
    dataset.save(args.out)
    _write_config_echo(args.out, rc)
    manifest = json.loads(Path(str(args.out) + ".manifest.json").read_text())
    manifest["config_hash"] = rc.hash()
    Path(str(args.out) + ".manifest.json").write_text(json.dumps(manifest, indent=1))
    _echo(args, manifest,
          f"dataset: {clips} clips x {scene_spec.frames} frames -> {args.out} "
          f"({manifest['bytes']} bytes)")
    return 0


# -- train --------------------------------------------------------------------

def cmd_train(args) -> int:
    rc = _load_config(args)
    dataset = Dataset.load(args.data)
    _check_dataset_compat(rc, dataset)
    refuse_overwrite(args.out, args.force)
    settings = rc.train
    if args.steps is not None:
        settings = TrainSettings(**{**vars(settings), "steps": args.steps})
    if rc.seed:
        settings = TrainSettings(**{**vars(settings), "seed": rc.seed})
    model = VectorFieldPredictor(rc.predictor, seed=settings.seed)
    snapshot = str(args.out) + ".failed.json"
    started = time.perf_counter()
    if args.baseline:
        schedule = NoiseSchedule.cosine(rc.schedule_steps)
        history = train_diffusion(model, schedule, args.baseline, dataset,
                                  settings, snapshot_path=snapshot)
        parameterization = args.baseline
        extra_header = {"schedule_steps": rc.schedule_steps}
    else:
        history = train_flow(model, dataset, settings, snapshot_path=snapshot)
        parameterization = "flow"
        extra_header = {}
    minutes = (time.perf_counter() - started) / 60
    header = {
        "run_config_hash": rc.hash(),
        "seed": settings.seed,
        "train": vars(settings).copy(),
        "final_loss": history[-1]["loss"],
        **extra_header,
    }
    model.save(args.out, parameterization=parameterization, extra_header=header)
    _write_config_echo(args.out, rc)
    loss_csv = args.loss_csv or str(args.out) + ".loss.csv"
    write_loss_csv(history, loss_csv)
    _echo(args, {"checkpoint": str(args.out), "final_loss": history[-1]["loss"],
                 "steps": settings.steps, "minutes": round(minutes, 2)},
          f"trained {parameterization} model: {settings.steps} steps in "
          f"{minutes:.1f} min, final loss {history[-1]['loss']:.5f} -> {args.out}")
    return 0


def _check_dataset_compat(rc: RunConfig, dataset: Dataset):
    spec = dataset.scene.spec
    mismatches = []
    for name, want in (("latent_dim", rc.predictor.latent_dim),
                       ("audio_dim", rc.predictor.audio_dim),
                       ("extra_dims", rc.predictor.extra_dims)):
        have = getattr(spec, name)
        if have != want:
            mismatches.append(f"{name}: dataset={have} config={want}")
    if spec.frames < rc.predictor.total_len:
        mismatches.append(f"frames: dataset={spec.frames} < window+context={rc.predictor.total_len}")
    if mismatches:
        raise ConfigError("dataset/config mismatch: " + "; ".join(mismatches))


# -- sample -------------------------------------------------------------------

def _guidance_from_args(args, rc: RunConfig) -> GuidanceSpec:
    mode = args.guidance_mode or rc.guidance.mode
    return GuidanceSpec(
        mode=mode,
        scale=args.guidance_scale if args.guidance_scale is not None else rc.guidance.scale,
        audio_scale=args.guidance_audio if args.guidance_audio is not None else rc.guidance.audio_scale,
        emotion_scale=args.guidance_emotion if args.guidance_emotion is not None else rc.guidance.emotion_scale,
    )


def cmd_sample(args) -> int:
    rc = _load_config(args)
    refuse_overwrite(args.out, args.force)
    model, header = VectorFieldPredictor.load(args.checkpoint)
    if header.get("parameterization", "flow") != "flow":
        raise ConfigError("sample drives the flow checkpoint; use sweep for baselines")
    dataset = Dataset.load(args.data)
    c = model.config
    guidance = _guidance_from_args(args, rc)
    nfe = args.nfe if args.nfe is not None else rc.nfe
    seed = rc.seed
    basis = dataset.scene.basis

    if args.driving_seed is not None:
        frames = args.windows * c.window_len
        audio = gen_driving(args.driving_seed, frames, c.audio_dim,
                            freq_band=(dataset.scene.spec.freq_low, dataset.scene.spec.freq_high),
                            noise_amp=dataset.scene.spec.noise_amp)
        emotion = np.zeros(7)
        emotion[args.emotion] = 1.0
        source = np.zeros(c.latent_dim)
        provenance = {"driving_seed": args.driving_seed, "emotion": args.emotion}
    else:
        audio = dataset.clip_audio(args.clip)[:args.windows * c.window_len]
        emotion = dataset.emotion[args.clip]
        source = dataset.source_motion[args.clip]
        provenance = {"clip": args.clip}

    trajectory_sink = [] if args.dump_trajectory else None
    latents = generate_sequence(model, audio, emotion, source, guidance, nfe,
                                seed, solver=args.solver or rc.solver,
                                clamp_preceding=not args.no_clamp,
                                trajectory_sink=trajectory_sink)
    coeffs = np.array([project(f, basis) for f in latents])
    header_out = {
        "config_hash": rc.hash(),
        "checkpoint_hash": model.config.hash(),
        "seed": seed,
        "nfe": nfe,
        "guidance": {"mode": guidance.mode, "scale": guidance.scale,
                     "audio_scale": guidance.audio_scale,
                     "emotion_scale": guidance.emotion_scale},
        "windows": args.windows,
        **provenance,
    }
    write_container(args.out, SEQUENCE_MAGIC, header_out,
                    {"latents": latents, "coeffs": coeffs,
                     "basis": basis.vectors})
    if args.dump_trajectory:
        _dump_trajectories(args.dump_trajectory, trajectory_sink, header_out, args.force)
    _echo(args, {**header_out, "frames": len(latents), "out": str(args.out)},
          f"sampled {len(latents)} frames ({args.windows} windows, nfe={nfe}) -> {args.out}")
    return 0


def _dump_trajectories(path, trajectories, provenance, force):
    refuse_overwrite(path, force)
    arrays = {f"window{i}": traj for i, traj in enumerate(trajectories)}
    write_container(path, b"MTRJ", {"provenance": provenance,
                                    "windows": len(trajectories)}, arrays)
    index = {"windows": len(trajectories),
             "steps_per_window": [int(t.shape[0]) for t in trajectories]}
    Path(str(path) + ".index.json").write_text(json.dumps(index, indent=1))


# -- edit ---------------------------------------------------------------------

def cmd_edit(args) -> int:
    refuse_overwrite(args.out, args.force)
    magic, _, header, arrays = read_container(args.infile, SEQUENCE_MAGIC)
    basis = MotionBasis(arrays["basis"])
    latents = arrays["latents"]
    if not 0 <= args.index < basis.count:
        raise IndexError(f"direction index {args.index} out of range [0, {basis.count})")
    edited = np.array([shift_coefficient(f, basis, args.index, args.delta)
                       for f in latents])
    coeffs_before = arrays["coeffs"]
    coeffs_after = np.array([project(f, basis) for f in edited])
    header = dict(header)
    header["edit"] = {"index": args.index, "delta": args.delta}
    write_container(args.out, SEQUENCE_MAGIC, header,
                    {"latents": edited, "coeffs": coeffs_after,
                     "basis": basis.vectors})
    table = {
        "index": args.index,
        "delta": args.delta,
        "mean_before": float(coeffs_before[:, args.index].mean()),
        "mean_after": float(coeffs_after[:, args.index].mean()),
    }
    _echo(args, table,
          "direction {index}: mean coefficient {mean_before:.4f} -> {mean_after:.4f} "
          "(delta {delta})".format(**table))
    return 0


# -- sweep / eval ---------------------------------------------------------------

SWEEP_AXES = ("nfe", "audio_scale", "emotion_scale", "solver", "baseline")


def cmd_sweep(args) -> int:
    rc = _load_config(args)
    if args.axis not in SWEEP_AXES:
        raise UsageError(f"unknown sweep axis {args.axis!r}; choose from {SWEEP_AXES}")
    values = [v for v in args.values.split(",") if v]
    if not values:
        raise UsageError("sweep needs at least one value")
    dataset = Dataset.load(args.data)
    clips = list(range(min(rc.eval_clips, dataset.n_clips)))
    rows = []
    for raw in values:
        guidance = rc.guidance
        nfe = rc.nfe
        solver = rc.solver
        checkpoint = args.checkpoint
        kind = "flow"
        if args.axis == "nfe":
            nfe = int(raw)
        elif args.axis == "audio_scale":
            guidance = GuidanceSpec(mode="incremental", audio_scale=float(raw),
                                    emotion_scale=rc.guidance.emotion_scale)
        elif args.axis == "emotion_scale":
            guidance = GuidanceSpec(mode="incremental",
                                    audio_scale=rc.guidance.audio_scale,
                                    emotion_scale=float(raw))
        elif args.axis == "solver":
            solver = raw
        elif args.axis == "baseline":
            checkpoint = raw
        model, header = VectorFieldPredictor.load(checkpoint)
        kind = header.get("parameterization", "flow")
        report = evaluate_checkpoint(
            model, dataset, guidance, nfe=nfe, clips=clips, seed=rc.seed,
            sampler_kind=kind, solver=solver, ddim_steps=rc.ddim_steps)
        row = {"axis": args.axis, "value": raw, **report.row()}
        rows.append(row)
        if not args.json:
            print(f"{args.axis}={raw}: corr={row['coeff_corr']:.4f} "
                  f"energy={row['energy_distance']:.4f} "
                  f"wall={row['wall_clock_per_sample'] * 1e3:.1f}ms "
                  f"calls={row['predictor_calls']}")
    refuse_overwrite(str(args.out) + ".csv", args.force)
    write_report_table(rows, str(args.out) + ".csv", str(args.out) + ".json")
    if args.json:
        print(json.dumps(rows, indent=1))
    return 0


def cmd_eval(args) -> int:
    rc = _load_config(args)
    dataset = Dataset.load(args.data)
    if dataset.n_clips < 1:
        raise DataError("held-out dataset is empty")
    model, header = VectorFieldPredictor.load(args.checkpoint)
    kind = header.get("parameterization", "flow")
    guidance = _guidance_from_args(args, rc)
    nfe = args.nfe if args.nfe is not None else rc.nfe
    clips = list(range(min(rc.eval_clips, dataset.n_clips)))
    report = evaluate_checkpoint(model, dataset, guidance, nfe=nfe, clips=clips,
                                 seed=rc.seed, sampler_kind=kind,
                                 solver=rc.solver, ddim_steps=rc.ddim_steps,
                                 sliced=args.sliced)
    report.scalars["oracle_floor"] = oracle_self_floor(dataset, clips=clips)
    if args.out:
        refuse_overwrite(str(args.out) + ".json", args.force)
        write_report_table([report.row()], str(args.out) + ".csv",
                           str(args.out) + ".json")
    payload = report.row()
    _echo(args, payload,
          "\n".join(f"{k} = {v}" for k, v in sorted(payload.items())))
    return 0


# -- inspect --------------------------------------------------------------------

def cmd_inspect(args) -> int:
    magic, version, header, arrays = read_container(args.path)
    info = {
        "magic": magic.decode("ascii", "replace"),
        "version": version,
        "header": header,
        "arrays": {name: list(arr.shape) for name, arr in arrays.items()},
    }
    _echo(args, info, json.dumps(info, indent=1, sort_keys=True))
    return 0


# -- entry ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionflow",
        description="Conditional flow matching for motion-latent sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", default=None, help="key-path config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--force", action="store_true")
        p.add_argument("--json", action="store_true")

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--clips", type=int, default=None)
    p.add_argument("--first-clip", type=int, default=0,
                   help="clip-range offset; disjoint ranges give held-out splits")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the flow model or a baseline")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--baseline", choices=("eps", "x0"), default=None)
    p.add_argument("--loss-csv", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate a latent sequence")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip", type=int, default=0)
    p.add_argument("--driving-seed", type=int, default=None)
    p.add_argument("--emotion", type=int, default=4)
    p.add_argument("--windows", type=int, default=2)
    p.add_argument("--nfe", type=int, default=None)
    p.add_argument("--solver", choices=("euler", "midpoint"), default=None)
    p.add_argument("--guidance-mode", choices=("none", "single", "incremental"),
                   default=None)
    p.add_argument("--guidance-scale", type=float, default=None)
    p.add_argument("--guidance-audio", type=float, default=None)
    p.add_argument("--guidance-emotion", type=float, default=None)
    p.add_argument("--no-clamp", action="store_true",
                   help="integrate context rows instead of clamping them")
    p.add_argument("--dump-trajectory", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("edit", help="shift one motion coefficient per frame")
    common(p, config=False)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("sweep", help="evaluate along one axis")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="prefix for .csv/.json")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="oracle metrics for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="prefix for .csv/.json")
    p.add_argument("--sliced", action="store_true",
                   help="also report sliced Wasserstein (cross-check metric)")
    p.add_argument("--nfe", type=int, default=None)
    p.add_argument("--guidance-mode", choices=("none", "single", "incremental"),
                   default=None)
    p.add_argument("--guidance-scale", type=float, default=None)
    p.add_argument("--guidance-audio", type=float, default=None)
    p.add_argument("--guidance-emotion", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="print any artifact's header")
    common(p, config=False)
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
