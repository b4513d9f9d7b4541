"""Deterministic synthetic stand-in for the audio/emotion/motion pipeline.

Driving signals are seeded band-limited sinusoid mixtures; ground-truth
motion coefficients follow a known law: an exponential moving average of
the driving mapped linearly into coefficient space, plus a per-emotion
offset. Motion latents are those coefficients composed over an orthonormal
basis, with identity content drawn in the basis complement. Because the law
is exact and reproducible, every learned quantity has a checkable oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .basis import MotionBasis, complement_vector, orthonormalize
from .errors import DataError, ShapeError
from .flow import TrainingItem
from .io import read_container, write_container

DATASET_MAGIC = b"MSET"


@dataclass(frozen=True)
class SceneSpec:
    """Configuration of the synthetic world; all content derives from it."""

    seed: int = 7
    latent_dim: int = 16
    audio_dim: int = 8
    directions: int = 8
    identities: int = 50
    frames: int = 48
    emotion_probs: tuple = tuple([1.0 / 7] * 7)
    half_life: float = 4.0
    noise_amp: float = 0.05
    freq_low: float = 0.01
    freq_high: float = 0.12
    offset_scale: float = 0.75
    extra_dims: int = 0

    def __post_init__(self):
        if self.half_life < 1.0:
            raise ShapeError("smoothing half-life must be >= 1 frame")
        probs = np.asarray(self.emotion_probs, dtype=np.float64)
        if probs.shape != (7,) or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-9:
            raise ShapeError("emotion_probs must be a 7-class distribution")
        if self.directions > self.latent_dim:
            raise ShapeError("more directions than latent dimensions")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["emotion_probs"] = list(self.emotion_probs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        d["emotion_probs"] = tuple(d["emotion_probs"])
        return cls(**d)


@dataclass
class Scene:
    """Materialized synthetic world: basis, per-emotion offsets, driving map."""

    spec: SceneSpec
    basis: MotionBasis
    emotion_offsets: np.ndarray   # (7, directions)
    driving_map: np.ndarray       # (directions, audio_dim)

    @classmethod
    def from_spec(cls, spec: SceneSpec) -> "Scene":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, 11])))
        basis = orthonormalize(rng.standard_normal((spec.directions, spec.latent_dim)))
        offsets = spec.offset_scale * rng.standard_normal((7, spec.directions))
        driving_map = rng.standard_normal((spec.directions, spec.audio_dim)) / np.sqrt(spec.audio_dim)
        return cls(spec=spec, basis=basis, emotion_offsets=offsets, driving_map=driving_map)


def gen_driving(seed: int, frames: int, audio_dim: int, freq_band=(0.01, 0.12),
                noise_amp: float = 0.05, target_std: float = 1.0,
                return_components: bool = False):
    """Seeded driving signal: 3 sinusoids per channel plus white noise.

    Sinusoid amplitudes are set so the per-channel variance is about
    ``target_std ** 2``; frequencies live in ``freq_band`` (cycles/frame).
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 23])))
    t = np.arange(frames)
    out = np.zeros((frames, audio_dim))
    amp = np.sqrt(2.0 * max(target_std**2 - noise_amp**2, 0.0) / 3.0)
    freqs = rng.uniform(freq_band[0], freq_band[1], size=(audio_dim, 3))
    phases = rng.uniform(0, 2 * np.pi, size=(audio_dim, 3))
    for ch in range(audio_dim):
        for k in range(3):
            out[:, ch] += amp * np.sin(2 * np.pi * freqs[ch, k] * t + phases[ch, k])
    out += noise_amp * rng.standard_normal((frames, audio_dim))
    if return_components:
        return out, amp, freqs, phases
    return out


def ema(x: np.ndarray, half_life: float) -> np.ndarray:
    """Exponential moving average along axis 0, seeded at the first frame."""
    x = np.asarray(x, dtype=np.float64)
    rho = 0.5 ** (1.0 / half_life)
    out = np.empty_like(x)
    out[0] = x[0]
    for i in range(1, len(x)):
        out[i] = rho * out[i - 1] + (1 - rho) * x[i]
    return out


def oracle_coefficients(scene: Scene, driving: np.ndarray,
                        emotion_index: int) -> np.ndarray:
    """The generative law: EMA(driving) @ map + per-emotion offset."""
    smoothed = ema(driving, scene.spec.half_life)
    return smoothed @ scene.driving_map.T + scene.emotion_offsets[emotion_index]


def gen_ground_truth(scene: Scene, driving: np.ndarray, emotion_index: int,
                     identity_seed: int):
    """Returns (identity latent, motion sequence, coefficient trajectories)."""
    coeffs = oracle_coefficients(scene, driving, emotion_index)
    motion = coeffs @ scene.basis.vectors
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([scene.spec.seed, 31, identity_seed])))
    identity = complement_vector(rng, scene.basis)
    return identity, motion, coeffs


@dataclass
class Dataset:
    """Clip collection over one Scene, stored as stacked frame arrays."""

    scene: Scene
    n_clips: int
    audio: np.ndarray          # (n_clips * frames, audio_dim)
    motion: np.ndarray         # (n_clips * frames, latent_dim)
    coeffs: np.ndarray         # (n_clips * frames, directions)
    identity: np.ndarray       # (n_clips, latent_dim)
    emotion: np.ndarray        # (n_clips, 7)
    emotion_index: np.ndarray  # (n_clips,)
    source_motion: np.ndarray  # (n_clips, latent_dim)
    extra: np.ndarray | None = None   # (n_clips * frames, extra_dims)
    first_clip: int = 0

    @property
    def frames(self) -> int:
        return self.scene.spec.frames

    def _span(self, clip: int):
        if not 0 <= clip < self.n_clips:
            raise IndexError(f"clip {clip} out of range [0, {self.n_clips})")
        return clip * self.frames, (clip + 1) * self.frames

    def clip_audio(self, clip: int) -> np.ndarray:
        lo, hi = self._span(clip)
        return self.audio[lo:hi]

    def clip_motion(self, clip: int) -> np.ndarray:
        lo, hi = self._span(clip)
        return self.motion[lo:hi]

    def clip_coeffs(self, clip: int) -> np.ndarray:
        lo, hi = self._span(clip)
        return self.coeffs[lo:hi]

    def clip_extra(self, clip: int):
        if self.extra is None:
            return None
        lo, hi = self._span(clip)
        return self.extra[lo:hi]

    def window_starts(self, window_len: int, context_len: int) -> list[int]:
        """Valid window start frames: 0 (no predecessor) plus every start
        with a full context block before it."""
        last = self.frames - window_len
        if last < 0:
            raise ShapeError(f"window {window_len} longer than clip {self.frames}")
        return [0] + [s for s in range(context_len, last + 1)]

    def training_item(self, clip: int, start: int, window_len: int,
                      context_len: int) -> TrainingItem:
        lo, _ = self._span(clip)
        motion = self.clip_motion(clip)
        audio = self.clip_audio(clip)
        extra_clip = self.clip_extra(clip)
        first = start == 0
        if first:
            preceding = np.zeros((context_len, motion.shape[1]))
            window_audio = np.concatenate(
                [np.zeros((context_len, audio.shape[1])), audio[:window_len]], axis=0)
            win_extra = None
            if extra_clip is not None:
                win_extra = np.concatenate(
                    [np.zeros((context_len, extra_clip.shape[1])), extra_clip[:window_len]], axis=0)
        else:
            if start < context_len or start + window_len > self.frames:
                raise IndexError(f"window start {start} invalid for clip of {self.frames} frames")
            preceding = motion[start - context_len:start].copy()
            window_audio = audio[start - context_len:start + window_len].copy()
            win_extra = None
            if extra_clip is not None:
                win_extra = extra_clip[start - context_len:start + window_len].copy()
        return TrainingItem(
            target_motion=motion[start:start + window_len].copy(),
            preceding_motion=preceding,
            audio=window_audio,
            emotion=self.emotion[clip].copy(),
            source_motion=self.source_motion[clip].copy(),
            extra=win_extra,
            first_window=first,
        )

    def sample_item(self, rng: np.random.Generator, window_len: int,
                    context_len: int) -> TrainingItem:
        starts = self.window_starts(window_len, context_len)
        clip = int(rng.integers(self.n_clips))
        start = starts[int(rng.integers(len(starts)))]
        return self.training_item(clip, start, window_len, context_len)

    def save(self, path):
        header = {"scene": self.scene.spec.to_dict(), "n_clips": self.n_clips,
                  "first_clip": self.first_clip}
        arrays = {
            "basis": self.scene.basis.vectors,
            "emotion_offsets": self.scene.emotion_offsets,
            "driving_map": self.scene.driving_map,
            "audio": self.audio,
            "motion": self.motion,
            "coeffs": self.coeffs,
            "identity": self.identity,
            "emotion": self.emotion,
            "emotion_index": self.emotion_index.astype(np.int64),
            "source_motion": self.source_motion,
        }
        if self.extra is not None:
            arrays["extra"] = self.extra
        write_container(path, DATASET_MAGIC, header, arrays)
        manifest = {
            "scene": self.scene.spec.to_dict(),
            "n_clips": self.n_clips,
            "first_clip": self.first_clip,
            "frames": self.frames,
            "bytes": Path(path).stat().st_size,
        }
        Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=1))

    @classmethod
    def load(cls, path) -> "Dataset":
        _, _, header, arrays = read_container(path, DATASET_MAGIC)
        spec = SceneSpec.from_dict(header["scene"])
        scene = Scene(
            spec=spec,
            basis=MotionBasis(arrays["basis"]),
            emotion_offsets=arrays["emotion_offsets"],
            driving_map=arrays["driving_map"],
        )
        n_clips = int(header["n_clips"])
        expected = n_clips * spec.frames
        if arrays["audio"].shape != (expected, spec.audio_dim):
            raise DataError(f"audio payload shape {arrays['audio'].shape} inconsistent with header")
        return cls(
            scene=scene,
            n_clips=n_clips,
            audio=arrays["audio"],
            motion=arrays["motion"],
            coeffs=arrays["coeffs"],
            identity=arrays["identity"],
            emotion=arrays["emotion"],
            emotion_index=arrays["emotion_index"],
            source_motion=arrays["source_motion"],
            extra=arrays.get("extra"),
            first_clip=int(header.get("first_clip", 0)),
        )


def make_dataset(spec: SceneSpec, n_clips: int, first_clip: int = 0) -> Dataset:
    """Generate clips [first_clip, first_clip + n_clips) of the scene.

    A pure function of (spec, clip range); disjoint ranges give disjoint
    clips of the same world, which is how held-out splits are made.
    """
    if n_clips < 1:
        raise DataError("dataset needs at least one clip")
    scene = Scene.from_spec(spec)
    frames = spec.frames
    audio = np.empty((n_clips * frames, spec.audio_dim))
    motion = np.empty((n_clips * frames, spec.latent_dim))
    coeffs = np.empty((n_clips * frames, spec.directions))
    identity = np.empty((n_clips, spec.latent_dim))
    emotion = np.zeros((n_clips, 7))
    emotion_index = np.empty(n_clips, dtype=np.int64)
    source_motion = np.empty((n_clips, spec.latent_dim))
    extra = np.empty((n_clips * frames, spec.extra_dims)) if spec.extra_dims else None
    probs = np.asarray(spec.emotion_probs)
    for clip in range(n_clips):
        clip_id = first_clip + clip
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([spec.seed, 47, clip_id])))
        e_idx = int(rng.choice(7, p=probs))
        drive = gen_driving(int(rng.integers(2**31)), frames, spec.audio_dim,
                            freq_band=(spec.freq_low, spec.freq_high),
                            noise_amp=spec.noise_amp)
        ident, clip_motion, clip_coeffs = gen_ground_truth(
            scene, drive, e_idx, identity_seed=clip_id % spec.identities)
        lo, hi = clip * frames, (clip + 1) * frames
        audio[lo:hi] = drive
        motion[lo:hi] = clip_motion
        coeffs[lo:hi] = clip_coeffs
        identity[clip] = ident
        emotion[clip, e_idx] = 1.0
        emotion_index[clip] = e_idx
        source_motion[clip] = clip_motion[0]
        if extra is not None:
            extra[lo:hi] = clip_coeffs[:, :spec.extra_dims]
    return Dataset(scene=scene, n_clips=n_clips, audio=audio, motion=motion,
                   coeffs=coeffs, identity=identity, emotion=emotion,
                   emotion_index=emotion_index, source_motion=source_motion,
                   extra=extra, first_clip=first_clip)
