"""Seeded synthetic broadcast videos for desk-scale experiments.

Each video is a run of scenes, each scene a run of shots. A shot gets

* a visual descriptor: its scene's centre plus noise on a few "signal"
  dimensions, and scene-independent clutter on the remaining ones (the
  stand-in for everything a CNN sees that is not about the scene);
* transcript words drawn from its scene's topic, placed uniformly in time;
* a colour histogram drawn around one of a small pool of palettes, so that
  different scenes often look alike in colour alone.

The embedding table clusters each topic's words around a topic direction.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .features import descriptors_bin, descriptors_csv, embeddings_csv
from .timeline import (
    SceneSegmentation, ShotTimeline, TranscriptWord, atomic_write, scenes_csv, shots_csv,
    transcript_csv,
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_videos: int = 5
    n_scenes: int = 8
    shots_per_scene: tuple[int, int] = (4, 7)
    shot_frames: tuple[int, int] = (50, 400)
    fps: float = 25.0
    visual_dim: int = 64
    signal_dims: int = 8
    separation: float = 8.0  # spread of scene centres over within-scene noise
    noise: float = 0.02
    clutter: float = 0.06  # std of the scene-independent dimensions
    n_topics: int = 12
    vocab_per_topic: int = 10
    embed_dim: int = 16
    word_rate: float = 0.6  # words per second
    n_palettes: int = 3
    hist_bins: int = 4  # per colour channel
    hist_concentration: float = 30.0
    seed: int = 0

    def __post_init__(self):
        counts = [self.n_videos, self.n_scenes, self.visual_dim, self.n_topics,
                  self.vocab_per_topic, self.embed_dim, self.n_palettes, self.hist_bins]
        if min(counts) < 1:
            raise ValueError("all counts must be positive")
        lo, hi = self.shots_per_scene
        if not 1 <= lo <= hi:
            raise ValueError("bad shots_per_scene range")
        lo, hi = self.shot_frames
        if not 1 <= lo <= hi:
            raise ValueError("bad shot_frames range")
        if not 0 < self.signal_dims <= self.visual_dim:
            raise ValueError("signal_dims must be in 1..visual_dim")
        if not self.noise > 0:
            raise ValueError("noise must be positive")
        if self.separation < 0 or self.clutter < 0 or self.word_rate < 0:
            raise ValueError("separation, clutter and word rate must be non-negative")
        if not self.fps > 0 or not self.hist_concentration > 0:
            raise ValueError("fps and histogram concentration must be positive")

    def video_ids(self) -> list[str]:
        return [f"video{v:02d}" for v in range(self.n_videos)]


@dataclass
class SyntheticVideo:
    video_id: str
    timeline: ShotTimeline
    scenes: SceneSegmentation
    transcript: list[TranscriptWord]
    visual: np.ndarray
    hist: np.ndarray


def _vocabulary(spec: SyntheticSpec, rng: np.random.Generator):
    topics = rng.normal(size=(spec.n_topics, spec.embed_dim))
    topics /= np.linalg.norm(topics, axis=1, keepdims=True)
    tokens, vectors = [], []
    for t in range(spec.n_topics):
        for w in range(spec.vocab_per_topic):
            tokens.append(f"t{t:02d}w{w:02d}")
            vectors.append(topics[t] + 0.15 * rng.normal(size=spec.embed_dim))
    return tokens, np.array(vectors)


def generate(spec: SyntheticSpec) -> tuple[list[str], np.ndarray, list[SyntheticVideo]]:
    """Build the vocabulary and every video in memory."""
    root = np.random.default_rng([spec.seed, 0])
    tokens, vectors = _vocabulary(spec, root)
    n_bins = spec.hist_bins ** 3
    palettes = root.dirichlet(np.full(n_bins, 0.5), size=spec.n_palettes)

    videos = []
    for v, vid in enumerate(spec.video_ids()):
        rng = np.random.default_rng([spec.seed, v + 1])
        sizes = rng.integers(spec.shots_per_scene[0], spec.shots_per_scene[1] + 1,
                             size=spec.n_scenes)
        labels = np.repeat(np.arange(spec.n_scenes), sizes)
        n = labels.size
        lengths = rng.integers(spec.shot_frames[0], spec.shot_frames[1] + 1, size=n)
        timeline = ShotTimeline.from_lengths(lengths.tolist(), vid, spec.fps)
        scenes = SceneSegmentation.from_boundaries(n, np.cumsum(sizes)[:-1].tolist())

        centers = rng.normal(size=(spec.n_scenes, spec.signal_dims)) * spec.separation * spec.noise
        visual = np.empty((n, spec.visual_dim))
        visual[:, :spec.signal_dims] = (centers[labels]
                                        + spec.noise * rng.normal(size=(n, spec.signal_dims)))
        visual[:, spec.signal_dims:] = spec.clutter * rng.normal(
            size=(n, spec.visual_dim - spec.signal_dims))

        topic_of = rng.integers(spec.n_topics, size=spec.n_scenes)
        words = []
        for shot, lab in zip(timeline.shots, labels):
            start, dur = shot.frame_start / spec.fps, shot.n_frames / spec.fps
            count = rng.poisson(spec.word_rate * dur)
            times = np.sort(start + dur * rng.random(count))
            picks = rng.integers(spec.vocab_per_topic, size=count)
            base = topic_of[lab] * spec.vocab_per_topic
            words.extend(TranscriptWord(tokens[base + p], round(float(t), 3))
                         for t, p in zip(times, picks))
        words.sort(key=lambda w: w.time)

        palette_of = rng.integers(spec.n_palettes, size=spec.n_scenes)
        alpha = spec.hist_concentration * palettes[palette_of[labels]] + 1e-3
        hist = np.array([rng.dirichlet(a) for a in alpha])
        videos.append(SyntheticVideo(vid, timeline, scenes, words, visual, hist))
    return tokens, vectors, videos


def write_dataset(spec: SyntheticSpec, out_dir, visual_format: str = "csv") -> list[str]:
    """Generate and write the fixture tree; returns the video ids.

    Layout::

        out_dir/embeddings.csv
        out_dir/dataset.json
        out_dir/<video>/{shots,scenes,transcript,hist}.csv and visual.csv|visual.bin
    """
    tokens, vectors, videos = generate(spec)
    files: dict[str, str | bytes] = {
        "embeddings.csv": embeddings_csv(tokens, vectors),
        "dataset.json": json.dumps({"spec": asdict(spec), "videos": spec.video_ids()},
                                   indent=1, sort_keys=True) + "\n",
    }
    for video in videos:
        base = video.video_id
        files[f"{base}/shots.csv"] = shots_csv(video.timeline)
        files[f"{base}/scenes.csv"] = scenes_csv(video.scenes)
        files[f"{base}/transcript.csv"] = transcript_csv(video.transcript)
        files[f"{base}/hist.csv"] = descriptors_csv(video.hist)
        if visual_format == "bin":
            files[f"{base}/visual.bin"] = descriptors_bin(video.visual)
        else:
            files[f"{base}/visual.csv"] = descriptors_csv(video.visual)
    for rel, data in files.items():
        atomic_write(os.path.join(out_dir, rel), data)
    return spec.video_ids()
