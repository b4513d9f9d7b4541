import json
from pathlib import Path

import numpy as np
import pytest

from motionflow.basis import MotionBasis, project
from motionflow.cli import main
from motionflow.config import RunConfig, load_run_config, parse_config_text
from motionflow.errors import UsageError
from motionflow.io import read_container
from motionflow.metrics import read_report_csv

TINY = """
# desk-scale-but-tiny run
predictor.latent_dim = 8
predictor.audio_dim = 4
predictor.hidden_dim = 16
predictor.heads = 2
predictor.half_width = 1
predictor.blocks = 2
predictor.window_len = 8
predictor.context_len = 3
scene.latent_dim = 8
scene.audio_dim = 4
scene.directions = 4
scene.identities = 5
scene.frames = 24
scene.seed = 11
train.steps = 40
train.batch = 4
train.log_every = 10
clips = 30
eval_clips = 4
nfe = 4
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(TINY)
    return root, str(cfg)


def run(args):
    return main(args)


# -- config -------------------------------------------------------------------

def test_parse_config_text_values():
    flat = parse_config_text("a.b = 3\nc = \"x\"  # comment\n\nd = [1, 2]\ne = true")
    assert flat == {"a.b": 3, "c": "x", "d": [1, 2], "e": True}


def test_parse_config_rejects_bad_line():
    with pytest.raises(UsageError):
        parse_config_text("just words")


def test_run_config_round_trip_and_hash():
    rc = RunConfig()
    text = rc.to_text()
    flat = parse_config_text(text)
    rc2 = RunConfig.from_flat(flat)
    assert rc2.to_text() == text
    assert rc2.hash() == rc.hash()


def test_run_config_unknown_key_rejected():
    with pytest.raises(UsageError):
        RunConfig.from_flat({"predictor.bogus": 1})


def test_run_config_cross_validation():
    with pytest.raises(UsageError):
        RunConfig.from_flat({"scene.latent_dim": 32})  # predictor stays 16


def test_load_run_config_file(workdir):
    _, cfg = workdir
    rc = load_run_config(cfg)
    assert rc.predictor.hidden_dim == 16
    assert rc.clips == 30


# -- CLI end-to-end ------------------------------------------------------------

def test_cli_pipeline(workdir, capsys):
    root, cfg = workdir
    data = root / "train.bin"
    held = root / "held.bin"
    ckpt = root / "model.ckpt"

    assert run(["gen-data", "--config", cfg, "--out", str(data)]) == 0
    manifest = json.loads(Path(str(data) + ".manifest.json").read_text())
    assert manifest["n_clips"] == 30          # read-back matches the request
    assert "config_hash" in manifest
    assert run(["gen-data", "--config", cfg, "--out", str(held),
                "--first-clip", "500", "--clips", "8"]) == 0
    # rerun without --force refuses (exit 3), with --force succeeds and is identical
    assert run(["gen-data", "--config", cfg, "--out", str(data)]) == 3
    before = data.read_bytes()
    assert run(["gen-data", "--config", cfg, "--out", str(data), "--force"]) == 0
    assert data.read_bytes() == before

    assert run(["train", "--config", cfg, "--data", str(data),
                "--out", str(ckpt)]) == 0
    assert ckpt.exists() and (root / "model.ckpt.loss.csv").exists()
    assert (root / "model.ckpt.config.txt").exists()

    seq = root / "sample.bin"
    assert run(["sample", "--config", cfg, "--checkpoint", str(ckpt),
                "--data", str(held), "--out", str(seq), "--windows", "2",
                "--nfe", "3", "--dump-trajectory", str(root / "traj.bin")]) == 0
    _, _, header, arrays = read_container(seq)
    assert arrays["latents"].shape == (16, 8)
    assert arrays["coeffs"].shape == (16, 4)
    assert header["nfe"] == 3
    assert "config_hash" in header and "seed" in header
    assert (root / "traj.bin.index.json").exists()
    # trajectory dump: one (nfe+1, frames, dims) block per window
    _, _, theader, tarrays = read_container(root / "traj.bin")
    assert theader["windows"] == 2
    assert tarrays["window0"].shape == (4, 11, 8)

    # synthesized driving from a seed instead of a clip
    seeded = root / "seeded.bin"
    assert run(["sample", "--config", cfg, "--checkpoint", str(ckpt),
                "--data", str(held), "--out", str(seeded), "--windows", "1",
                "--driving-seed", "42", "--emotion", "3"]) == 0
    _, _, sheader, sarrays = read_container(seeded)
    assert sheader["driving_seed"] == 42 and sheader["emotion"] == 3
    assert sarrays["latents"].shape == (8, 8)

    capsys.readouterr()


def test_cli_sample_reproducible(workdir):
    root, cfg = workdir
    ckpt = root / "model.ckpt"
    held = root / "held.bin"
    a, b = root / "s1.bin", root / "s2.bin"
    for out in (a, b):
        assert run(["sample", "--config", cfg, "--checkpoint", str(ckpt),
                    "--data", str(held), "--out", str(out), "--windows", "1",
                    "--seed", "3"]) == 0
    ca = read_container(a)[3]["latents"]
    cb = read_container(b)[3]["latents"]
    assert np.array_equal(ca, cb)


def test_cli_edit(workdir, capsys):
    root, cfg = workdir
    seq = root / "sample.bin"
    out0 = root / "edit0.bin"
    out1 = root / "edit1.bin"

    # delta 0: payload identical
    assert run(["edit", "--in", str(seq), "--out", str(out0),
                "--index", "1", "--delta", "0"]) == 0
    orig = read_container(seq)
    same = read_container(out0)
    assert np.array_equal(orig[3]["latents"], same[3]["latents"])

    assert run(["edit", "--in", str(seq), "--out", str(out1),
                "--index", "1", "--delta", "2.5"]) == 0
    edited = read_container(out1)
    basis = MotionBasis(orig[3]["basis"])
    for before_frame, after_frame in zip(orig[3]["latents"], edited[3]["latents"]):
        cb = project(before_frame, basis)
        ca = project(after_frame, basis)
        assert abs(ca[1] - cb[1] - 2.5) <= 1e-9
        mask = np.arange(4) != 1
        assert np.max(np.abs(ca[mask] - cb[mask])) <= 1e-9
    # bad index -> exit 3
    assert run(["edit", "--in", str(seq), "--out", str(root / "x.bin"),
                "--index", "9", "--delta", "1"]) == 3
    capsys.readouterr()


def test_cli_eval_and_sweep(workdir, capsys):
    root, cfg = workdir
    ckpt = root / "model.ckpt"
    held = root / "held.bin"

    assert run(["eval", "--config", cfg, "--checkpoint", str(ckpt),
                "--data", str(held), "--out", str(root / "eval")]) == 0
    rows = read_report_csv(root / "eval.csv")
    jrows = json.loads((root / "eval.json").read_text())
    assert len(rows) == 1
    for key, val in rows[0].items():   # CSV and JSON agree scalar-for-scalar
        assert jrows[0][key] == val, key
    assert "coeff_corr" in rows[0] and "energy_distance" in rows[0]

    assert run(["sweep", "--config", cfg, "--checkpoint", str(ckpt),
                "--data", str(held), "--axis", "nfe", "--values", "2,4",
                "--out", str(root / "sweep")]) == 0
    srows = read_report_csv(root / "sweep.csv")
    assert [r["value"] for r in srows] == [2, 4]
    assert srows[0]["predictor_calls"] < srows[1]["predictor_calls"]

    # single-value sweep -> single row
    assert run(["sweep", "--config", cfg, "--checkpoint", str(ckpt),
                "--data", str(held), "--axis", "solver", "--values", "midpoint",
                "--out", str(root / "sweep1"), "--force"]) == 0
    assert len(read_report_csv(root / "sweep1.csv")) == 1

    # unknown axis -> usage error
    assert run(["sweep", "--config", cfg, "--checkpoint", str(ckpt),
                "--data", str(held), "--axis", "banana", "--values", "1",
                "--out", str(root / "bad")]) == 2
    capsys.readouterr()


def test_cli_inspect(workdir, capsys):
    root, _ = workdir
    assert run(["inspect", str(root / "model.ckpt")]) == 0
    out = capsys.readouterr().out
    assert "VFCK" in out and "config" in out


def test_cli_gen_data_zero_clips(workdir, capsys):
    root, cfg = workdir
    code = run(["gen-data", "--config", cfg, "--out", str(root / "none.bin"),
                "--clips", "0"])
    assert code == 3
    capsys.readouterr()


def test_cli_baseline_training_and_sweep(workdir, capsys):
    root, cfg = workdir
    data = root / "train.bin"
    held = root / "held.bin"
    eps_ckpt = root / "eps.ckpt"
    assert run(["train", "--config", cfg, "--data", str(data), "--out",
                str(eps_ckpt), "--baseline", "eps", "--steps", "25"]) == 0
    _, _, header, _ = read_container(eps_ckpt)
    assert header["parameterization"] == "eps"

    assert run(["sweep", "--config", cfg, "--checkpoint", str(root / "model.ckpt"),
                "--data", str(held), "--axis", "baseline",
                "--values", f"{root / 'model.ckpt'},{eps_ckpt}",
                "--out", str(root / "bsweep")]) == 0
    rows = read_report_csv(root / "bsweep.csv")
    assert len(rows) == 2
    # DDIM baseline spends more predictor calls than the flow sampler
    assert rows[1]["predictor_calls"] > rows[0]["predictor_calls"]
    capsys.readouterr()


def test_cli_checkpoint_dataset_mismatch(workdir, tmp_path, capsys):
    root, cfg = workdir
    other_cfg = tmp_path / "other.cfg"
    other_cfg.write_text(TINY.replace("predictor.hidden_dim = 16",
                                      "predictor.hidden_dim = 16")
                         .replace("scene.latent_dim = 8\n", "scene.latent_dim = 8\n")
                         .replace("predictor.latent_dim = 8", "predictor.latent_dim = 12")
                         .replace("scene.latent_dim = 8", "scene.latent_dim = 12"))
    code = run(["train", "--config", str(other_cfg), "--data", str(root / "train.bin"),
                "--out", str(tmp_path / "bad.ckpt")])
    assert code == 2  # dataset/config mismatch is a config error
    capsys.readouterr()
