"""Synthetic audio-visual scenes with exact ground truth.

A scene follows one latent unit vector that drifts smoothly over time.  The
audio feature is a fixed orthonormal projection of that latent, and the
speaking face's video feature is a second, independent orthonormal projection
of the same latent.  Silent faces show background noise, or, with some
probability, a "confuser" that mimics the current latent exactly, so a single
frame cannot tell it from the speaker; only its lack of persistence across
neighbouring frames gives it away.  Frames can also carry off-screen speech
(speech audio, nobody visible speaking) or silence.

Because both projections have orthonormal columns, projecting features back
recovers the latent exactly in the noiseless case, which gives a closed-form
detector with perfect average precision to test against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ParseError
from .evaluation import PredictionRecord
from .graphs import FeatureNode, Modality

LATENT_SMOOTHING = 0.8
ACTIVE_PERSISTENCE = 0.8


@dataclass
class SynthConfig:
    """Knobs of the scene generator."""

    num_scenes: int = 100
    frames_per_scene: int = 13
    speakers_range: tuple[int, int] = (1, 4)
    feature_dim: int = 512
    latent_dim: int = 16
    noise_sigma: float = 0.0
    confuser_prob: float = 0.0
    offscreen_prob: float = 0.0
    silence_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.speakers_range = tuple(self.speakers_range)
        if self.num_scenes < 0:
            raise ConfigError("num_scenes must be non-negative")
        if self.frames_per_scene < 1:
            raise ConfigError("frames_per_scene must be at least 1")
        lo, hi = self.speakers_range
        if not (1 <= lo <= hi):
            raise ConfigError(f"speakers_range must satisfy 1 <= min <= max, got {lo, hi}")
        if not (1 <= self.latent_dim <= self.feature_dim):
            raise ConfigError("latent_dim must be in [1, feature_dim]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        for name in ("confuser_prob", "offscreen_prob", "silence_prob"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.offscreen_prob + self.silence_prob > 1.0:
            raise ConfigError("offscreen_prob + silence_prob must not exceed 1")

    @property
    def speak_prob(self) -> float:
        return 1.0 - self.offscreen_prob - self.silence_prob

    def to_dict(self) -> dict:
        out = {f: getattr(self, f) for f in self.__dataclass_fields__}
        out["speakers_range"] = list(self.speakers_range)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Frame:
    """One time step: the shared audio node plus every visible face.

    ``speech`` records whether the audio track actually contains speech,
    independently of whether a visible face produced it.
    """

    t: int
    audio: FeatureNode
    videos: list[FeatureNode]
    speech: bool

    @property
    def active_speaker(self) -> int | None:
        for node in self.videos:
            if node.label == 1:
                return node.speaker_id
        return None


@dataclass
class SceneSample:
    scene_id: int
    frames: list[Frame]

    @property
    def has_active_speaker(self) -> bool:
        return any(f.active_speaker is not None for f in self.frames)


def projection_matrices(config: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-dataset audio and video projections with orthonormal columns."""
    rng = np.random.default_rng([config.seed])
    audio_proj, _ = np.linalg.qr(rng.standard_normal((config.feature_dim, config.latent_dim)))
    video_proj, _ = np.linalg.qr(rng.standard_normal((config.feature_dim, config.latent_dim)))
    return audio_proj, video_proj


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v = v.copy()
        v[0] = 1.0
        return v
    return v / norm


def _generate_scene(config: SynthConfig, audio_proj, video_proj, scene_id: int) -> SceneSample:
    rng = np.random.default_rng([config.seed, scene_id])
    lo, hi = config.speakers_range
    num_speakers = int(rng.integers(lo, hi + 1))
    latent = _unit(rng.standard_normal(config.latent_dim))
    active = int(rng.integers(num_speakers))
    sigma = config.noise_sigma

    def noise():
        if sigma == 0.0:
            return np.zeros(config.feature_dim)
        return rng.normal(0.0, sigma, config.feature_dim)

    frames = []
    for t in range(config.frames_per_scene):
        if t > 0:
            latent = _unit(
                LATENT_SMOOTHING * latent
                + (1.0 - LATENT_SMOOTHING) * rng.standard_normal(config.latent_dim)
            )
            if rng.random() >= ACTIVE_PERSISTENCE:
                active = int(rng.integers(num_speakers))
        draw = rng.random()
        if draw < config.speak_prob:
            event = "speak"
        elif draw < config.speak_prob + config.offscreen_prob:
            event = "offscreen"
        else:
            event = "silence"
        confused = rng.random(num_speakers) < config.confuser_prob

        if event == "silence":
            audio_feat = noise()
        else:
            audio_feat = audio_proj @ latent + noise()
        audio = FeatureNode(
            node_id=0,
            modality=Modality.AUDIO,
            feature=audio_feat.astype(np.float32),
            timestamp=t,
            speaker_id=None,
            label=1 if event == "speak" else 0,
        )
        videos = []
        for s in range(num_speakers):
            if event == "speak" and s == active:
                feat, label = video_proj @ latent + noise(), 1
            elif confused[s]:
                feat, label = video_proj @ latent + noise(), 0
            else:
                feat, label = noise(), 0
            videos.append(
                FeatureNode(
                    node_id=s + 1,
                    modality=Modality.VIDEO,
                    feature=feat.astype(np.float32),
                    timestamp=t,
                    speaker_id=s,
                    label=label,
                )
            )
        frames.append(Frame(t=t, audio=audio, videos=videos, speech=event != "silence"))
    return SceneSample(scene_id=scene_id, frames=frames)


def generate(config: SynthConfig) -> list[SceneSample]:
    """Generate all scenes; each scene uses its own (seed, scene_id) substream."""
    audio_proj, video_proj = projection_matrices(config)
    return [
        _generate_scene(config, audio_proj, video_proj, scene_id)
        for scene_id in range(config.num_scenes)
    ]


def oracle_scores(scenes: list[SceneSample], config: SynthConfig) -> list[PredictionRecord]:
    """Closed-form detector: cosine of back-projected latents, audio vs video.

    Zero-norm projections (background-only features in the noiseless setting)
    score 0, below any genuine match.
    """
    audio_proj, video_proj = projection_matrices(config)
    records = []
    for scene in scenes:
        for frame in scene.frames:
            z_audio = audio_proj.T @ frame.audio.feature.astype(np.float64)
            norm_audio = np.linalg.norm(z_audio)
            for node in frame.videos:
                z_video = video_proj.T @ node.feature.astype(np.float64)
                denom = norm_audio * np.linalg.norm(z_video)
                score = 0.0 if denom < 1e-30 else float(z_video @ z_audio / denom)
                records.append(
                    PredictionRecord(
                        scene_id=scene.scene_id,
                        timestamp=frame.t,
                        speaker_id=node.speaker_id,
                        score=score,
                        label=node.label,
                    )
                )
    return records


def offscreen_augment(
    scenes: list[SceneSample], p: float, rng, audio_label_mode: str = "max_video"
) -> list[SceneSample]:
    """Give silent scenes a speech-bearing audio track with probability ``p``.

    Only scenes without any active speaker are eligible.  The replacement
    copies the whole audio track (features and speech flags) of a donor scene
    drawn from the rest of the batch.  By default labels stay untouched, so
    the swapped-in speech is still supervised as "not speaking"; with
    ``audio_label_mode="speech"`` the audio labels follow the donor's speech
    flags instead.
    """
    if not (0.0 <= p <= 1.0):
        raise ConfigError("augmentation probability must lie in [0, 1]")
    if audio_label_mode not in ("max_video", "speech"):
        raise ConfigError("audio_label_mode must be 'max_video' or 'speech'")
    donor_ids = [i for i, s in enumerate(scenes) if any(f.speech for f in s.frames)]
    out = list(scenes)
    for i, scene in enumerate(scenes):
        if scene.has_active_speaker:
            continue
        pool = [j for j in donor_ids if j != i]
        if not pool:
            continue
        if rng.random() >= p:
            continue
        donor = scenes[pool[int(rng.integers(len(pool)))]]
        new_frames = []
        for frame, donor_frame in zip(scene.frames, donor.frames, strict=True):
            if audio_label_mode == "speech":
                label = 1 if donor_frame.speech else 0
            else:
                label = frame.audio.label
            audio = replace(
                frame.audio, feature=donor_frame.audio.feature.copy(), label=label
            )
            new_frames.append(
                Frame(t=frame.t, audio=audio, videos=frame.videos, speech=donor_frame.speech)
            )
        out[i] = SceneSample(scene_id=scene.scene_id, frames=new_frames)
    return out


def write_dataset(scenes: list[SceneSample], path, config: SynthConfig | None = None) -> None:
    """Write scenes as JSONL, one node per line, with an optional header line.

    Floats are serialized through Python's shortest repr, which round-trips
    32-bit values exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        if config is not None:
            fh.write(json.dumps({"config": config.to_dict()}, sort_keys=True) + "\n")
        for scene in scenes:
            for frame in scene.frames:
                fh.write(_node_line(scene.scene_id, frame.audio, speech=frame.speech))
                for node in frame.videos:
                    fh.write(_node_line(scene.scene_id, node))


def _node_line(scene_id: int, node: FeatureNode, speech: bool | None = None) -> str:
    obj = {
        "scene_id": int(scene_id),
        "t": int(node.timestamp),
        "modality": node.modality.value,
        "label": int(node.label),
        "feature": [float(v) for v in node.feature],
    }
    if node.speaker_id is not None:
        obj["speaker_id"] = int(node.speaker_id)
    if speech is not None:
        obj["speech"] = bool(speech)
    return json.dumps(obj, sort_keys=True) + "\n"


def read_dataset_header(path) -> dict | None:
    """Return the header line's config dict, or None when there is no header."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=1) from exc
            if isinstance(obj, dict) and "config" in obj:
                return obj["config"]
            return None
    return None


def _require(obj: dict, key: str, lineno: int):
    if key not in obj:
        raise ParseError(f"missing field '{key}'", line=lineno)
    return obj[key]


def read_dataset(path) -> list[SceneSample]:
    """Parse a JSONL dataset back into scenes; errors carry the line number."""
    scenes: dict[int, SceneSample] = {}
    frames: dict[tuple[int, int], Frame] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno)
            if lineno == 1 and "config" in obj:
                continue
            scene_id = int(_require(obj, "scene_id", lineno))
            t = int(_require(obj, "t", lineno))
            modality = _require(obj, "modality", lineno)
            label = _require(obj, "label", lineno)
            if label not in (0, 1):
                raise ParseError(f"label must be 0 or 1, got {label!r}", line=lineno)
            feature = _require(obj, "feature", lineno)
            if not isinstance(feature, list) or not all(
                isinstance(v, (int, float)) for v in feature
            ):
                raise ParseError("feature must be a list of numbers", line=lineno)
            feat = np.asarray(feature, dtype=np.float32)

            if scene_id not in scenes:
                scenes[scene_id] = SceneSample(scene_id=scene_id, frames=[])
            scene = scenes[scene_id]
            key = (scene_id, t)
            if modality == "audio":
                if "speaker_id" in obj:
                    raise ParseError("audio line must not carry speaker_id", line=lineno)
                if key in frames:
                    raise ParseError(f"duplicate audio line for t={t}", line=lineno)
                node = FeatureNode(
                    node_id=0,
                    modality=Modality.AUDIO,
                    feature=feat,
                    timestamp=t,
                    speaker_id=None,
                    label=int(label),
                )
                frame = Frame(t=t, audio=node, videos=[], speech=bool(obj.get("speech", label)))
                frames[key] = frame
                scene.frames.append(frame)
            elif modality == "video":
                if key not in frames:
                    raise ParseError(
                        f"video line for t={t} precedes its audio line", line=lineno
                    )
                frame = frames[key]
                node = FeatureNode(
                    node_id=len(frame.videos) + 1,
                    modality=Modality.VIDEO,
                    feature=feat,
                    timestamp=t,
                    speaker_id=int(_require(obj, "speaker_id", lineno)),
                    label=int(label),
                )
                frame.videos.append(node)
            else:
                raise ParseError(f"unknown modality {modality!r}", line=lineno)
    out = list(scenes.values())
    for scene in out:
        scene.frames.sort(key=lambda f: f.t)
    return out
