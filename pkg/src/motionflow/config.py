"""Run configuration: one flat key-path = value text format.

Example::

    predictor.hidden_dim = 64
    train.steps = 5000
    guidance.audio_scale = 2.0

Values are JSON literals (numbers, strings, booleans, lists). Every command
echoes the full effective configuration into its outputs, keyed by a stable
hash, so runs are replayable from their artifacts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import UsageError
from .predictor import PredictorConfig
from .sampler import GuidanceSpec
from .synthdata import SceneSpec
from .training import TrainSettings


@dataclass
class RunConfig:
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)
    train: TrainSettings = field(default_factory=TrainSettings)
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    nfe: int = 10
    solver: str = "euler"
    ddim_steps: int = 50
    schedule_steps: int = 500
    clips: int = 2000
    eval_clips: int = 32
    seed: int = 0

    def validate(self):
        if self.scene.latent_dim != self.predictor.latent_dim:
            raise UsageError("scene.latent_dim must equal predictor.latent_dim")
        if self.scene.audio_dim != self.predictor.audio_dim:
            raise UsageError("scene.audio_dim must equal predictor.audio_dim")
        if self.scene.extra_dims != self.predictor.extra_dims:
            raise UsageError("scene.extra_dims must equal predictor.extra_dims")
        if self.predictor.total_len > self.scene.frames:
            raise UsageError("context + window length exceeds clip frames")
        if self.nfe < 1 or self.ddim_steps < 1:
            raise UsageError("nfe and ddim_steps must be >= 1")
        if self.solver not in ("euler", "midpoint"):
            raise UsageError(f"unknown solver {self.solver!r}")

    def to_flat(self) -> dict:
        flat = {}
        for section in ("predictor", "scene", "train", "guidance"):
            data = asdict(getattr(self, section))
            if section == "scene":
                data["emotion_probs"] = list(data["emotion_probs"])
            for key, value in data.items():
                flat[f"{section}.{key}"] = value
        for key in ("nfe", "solver", "ddim_steps", "schedule_steps", "clips",
                    "eval_clips", "seed"):
            flat[key] = getattr(self, key)
        return flat

    def to_text(self) -> str:
        flat = self.to_flat()
        return "".join(f"{key} = {json.dumps(flat[key])}\n" for key in sorted(flat))

    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        base = cls().to_flat()
        for key in flat:
            if key not in base:
                raise UsageError(f"unknown config key {key!r}")
        base.update(flat)
        sections = {"predictor": {}, "scene": {}, "train": {}, "guidance": {}}
        top = {}
        for key, value in base.items():
            if "." in key:
                section, name = key.split(".", 1)
                sections[section][name] = value
            else:
                top[key] = value
        sections["scene"]["emotion_probs"] = tuple(sections["scene"]["emotion_probs"])
        rc = cls(
            predictor=PredictorConfig(**sections["predictor"]),
            scene=SceneSpec(**sections["scene"]),
            train=TrainSettings(**sections["train"]),
            guidance=GuidanceSpec(**sections["guidance"]),
            **top,
        )
        rc.validate()
        return rc


def parse_config_text(text: str) -> dict:
    """Parse ``key.path = json-value`` lines; '#' starts a comment."""
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        try:
            flat[key] = json.loads(value)
        except json.JSONDecodeError:
            flat[key] = value
    return flat


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    flat = {}
    if path is not None:
        flat.update(parse_config_text(Path(path).read_text()))
    if overrides:
        flat.update(overrides)
    return RunConfig.from_flat(flat)
