"""Shots, scenes and transcripts: domain types and CSV ingestion.

Frame intervals are half-open ``[frame_start, frame_end)`` and shots are
0-indexed. A :class:`SceneSegmentation` is stored as its sorted scene start
indices; ``scenes`` expands it to ``(lo, hi)`` shot intervals.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

DEFAULT_FPS = 25.0


class TimelineError(ValueError):
    """Invalid shot, scene or transcript data."""


@dataclass(frozen=True)
class Shot:
    index: int
    frame_start: int
    frame_end: int

    def __post_init__(self):
        if self.frame_end <= self.frame_start:
            raise TimelineError(f"empty shot at index {self.index}")

    @property
    def center_frame(self) -> int:
        return (self.frame_start + self.frame_end) // 2

    @property
    def n_frames(self) -> int:
        return self.frame_end - self.frame_start


@dataclass(frozen=True)
class ShotTimeline:
    video_id: str
    fps: float
    shots: tuple[Shot, ...]

    def __post_init__(self):
        if not self.shots:
            raise TimelineError("timeline has no shots")
        if not self.fps > 0:
            raise TimelineError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "shots", tuple(self.shots))
        for k, shot in enumerate(self.shots):
            if shot.index != k:
                raise TimelineError(f"shot index {shot.index} found at position {k}")
            if k and shot.frame_start != self.shots[k - 1].frame_end:
                raise TimelineError(f"gap between shots at index {k}")

    @classmethod
    def from_lengths(cls, lengths: Iterable[int], video_id: str = "video",
                     fps: float = DEFAULT_FPS, start: int = 0) -> "ShotTimeline":
        shots = []
        pos = start
        for k, length in enumerate(lengths):
            shots.append(Shot(k, pos, pos + int(length)))
            pos += int(length)
        return cls(video_id, fps, tuple(shots))

    def __len__(self) -> int:
        return len(self.shots)

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    @property
    def frame_offsets(self) -> np.ndarray:
        """Start frame of every shot followed by the end frame of the last."""
        return np.array([s.frame_start for s in self.shots] + [self.shots[-1].frame_end],
                        dtype=np.int64)

    @property
    def end_frame(self) -> int:
        return self.shots[-1].frame_end

    @property
    def duration(self) -> float:
        return self.end_frame / self.fps


@dataclass(frozen=True)
class SceneSegmentation:
    """Partition of ``range(n_shots)`` into contiguous scenes.

    ``starts`` holds the first shot of each scene, beginning with 0.
    """

    n_shots: int
    starts: tuple[int, ...] = field(default=(0,))

    def __post_init__(self):
        starts = tuple(int(s) for s in self.starts)
        object.__setattr__(self, "starts", starts)
        if self.n_shots < 1:
            raise TimelineError("segmentation must cover at least one shot")
        if not starts or starts[0] != 0:
            raise TimelineError("first scene must start at shot 0")
        for a, b in zip(starts, starts[1:]):
            if b <= a:
                raise TimelineError(f"scene starts not strictly increasing at {b}")
        if starts[-1] >= self.n_shots:
            raise TimelineError(f"scene start {starts[-1]} outside 0..{self.n_shots - 1}")

    @classmethod
    def from_boundaries(cls, n_shots: int, boundaries: Iterable[int]) -> "SceneSegmentation":
        """Build from boundary shot indices (a boundary ``b`` sits before shot ``b``)."""
        bounds = sorted(int(b) for b in boundaries)
        for b in bounds:
            if not 0 < b < n_shots:
                raise TimelineError(f"boundary {b} out of range 1..{n_shots - 1}")
        return cls(n_shots, (0, *bounds))

    @classmethod
    def from_scenes(cls, scenes: Sequence[tuple[int, int]]) -> "SceneSegmentation":
        if not scenes:
            raise TimelineError("no scenes given")
        for (lo, hi), (lo2, _) in zip(scenes, scenes[1:]):
            if hi != lo2:
                raise TimelineError(f"scenes do not tile the shots at {hi}")
        for lo, hi in scenes:
            if hi <= lo:
                raise TimelineError(f"empty scene [{lo}, {hi})")
        return cls(scenes[-1][1], tuple(lo for lo, _ in scenes))

    @property
    def boundaries(self) -> tuple[int, ...]:
        return self.starts[1:]

    @property
    def bounds(self) -> np.ndarray:
        """Scene starts followed by ``n_shots``, as kernels expect."""
        return np.array(self.starts + (self.n_shots,), dtype=np.int64)

    @property
    def scenes(self) -> list[tuple[int, int]]:
        ends = self.starts[1:] + (self.n_shots,)
        return list(zip(self.starts, ends))

    def __len__(self) -> int:
        return len(self.starts)

    def labels(self) -> np.ndarray:
        """Scene ordinal of every shot."""
        out = np.empty(self.n_shots, dtype=np.int64)
        for k, (lo, hi) in enumerate(self.scenes):
            out[lo:hi] = k
        return out


@dataclass(frozen=True)
class TranscriptWord:
    token: str
    time: float


def labels_to_segmentation(labels: Sequence) -> SceneSegmentation:
    """Open a new scene at every change of cluster label between neighbours.

    A cluster that reappears later in the video becomes a separate scene.
    """
    labels = list(labels)
    if not labels:
        raise TimelineError("no labels")
    bounds = [k for k in range(1, len(labels)) if labels[k] != labels[k - 1]]
    return SceneSegmentation(len(labels), (0, *bounds))


# -- file formats ------------------------------------------------------------

def _rows(path, header: tuple[str, ...]):
    """Yield ``(line_number, fields)`` for data rows of a headed CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise TimelineError(f"{path}: empty file")
        if tuple(c.strip() for c in first) != header:
            raise TimelineError(f"{path}:1: expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, [c.strip() for c in row]


def parse_shots(path, fps: float = DEFAULT_FPS, video_id: str | None = None) -> ShotTimeline:
    """Read an ``index,frame_start,frame_end`` file into a validated timeline."""
    if video_id is None:
        video_id = os.path.basename(os.path.dirname(os.path.abspath(path))) or "video"
    shots = []
    for line, row in _rows(path, ("index", "frame_start", "frame_end")):
        if len(row) != 3:
            raise TimelineError(f"{path}:{line}: expected 3 fields, got {len(row)}")
        try:
            index, start, end = (int(v) for v in row)
        except ValueError:
            raise TimelineError(f"{path}:{line}: malformed record {row!r}") from None
        if index != len(shots):
            raise TimelineError(f"{path}:{line}: expected shot index {len(shots)}, got {index}")
        if end <= start:
            raise TimelineError(f"{path}:{line}: empty shot at index {index}")
        if shots and start != shots[-1].frame_end:
            raise TimelineError(f"{path}:{line}: gap between shots at index {index}")
        shots.append(Shot(index, start, end))
    if not shots:
        raise TimelineError(f"{path}: no shots")
    return ShotTimeline(video_id, fps, tuple(shots))


def parse_scenes(path, timeline: ShotTimeline) -> SceneSegmentation:
    """Read ``boundary_shot_index`` rows; no rows means a single scene."""
    n = timeline.n_shots
    bounds = []
    for line, row in _rows(path, ("boundary_shot_index",)):
        try:
            (b,) = (int(v) for v in row)
        except ValueError:
            raise TimelineError(f"{path}:{line}: malformed record {row!r}") from None
        if not 0 < b < n:
            raise TimelineError(f"{path}:{line}: boundary {b} out of range 1..{n - 1}")
        if bounds and b <= bounds[-1]:
            raise TimelineError(f"{path}:{line}: boundaries must be strictly increasing")
        bounds.append(b)
    return SceneSegmentation(n, (0, *bounds))


def parse_transcript(path) -> list[TranscriptWord]:
    words = []
    for line, row in _rows(path, ("token", "time")):
        if len(row) != 2:
            raise TimelineError(f"{path}:{line}: expected 2 fields, got {len(row)}")
        try:
            time = float(row[1])
        except ValueError:
            raise TimelineError(f"{path}:{line}: bad time {row[1]!r}") from None
        if not time >= 0 or not np.isfinite(time):
            raise TimelineError(f"{path}:{line}: time must be finite and >= 0")
        words.append(TranscriptWord(row[0].lower(), time))
    words.sort(key=lambda w: w.time)
    return words


def format_time(t: float) -> str:
    """Shortest round-tripping decimal with at least three fractional digits."""
    return np.format_float_positional(float(t), unique=True, min_digits=3, trim="k")


def shots_csv(timeline: ShotTimeline) -> str:
    buf = io.StringIO()
    buf.write("index,frame_start,frame_end\n")
    for s in timeline.shots:
        buf.write(f"{s.index},{s.frame_start},{s.frame_end}\n")
    return buf.getvalue()


def scenes_csv(seg: SceneSegmentation) -> str:
    return "boundary_shot_index\n" + "".join(f"{b}\n" for b in seg.boundaries)


def transcript_csv(words: Iterable[TranscriptWord]) -> str:
    return "token,time\n" + "".join(f"{w.token},{format_time(w.time)}\n" for w in words)


def atomic_write(path, data: str | bytes) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
