"""Per-shot features: ingested visual descriptors and bag-of-embedded-words.

Transcript words are mapped to pretrained embeddings, the embeddings are
clustered with spherical k-means into a codebook, and each shot is described
by the l1-normalised histogram of codewords over a context window centred on
its middle frame.
"""
from __future__ import annotations

import csv
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .timeline import Shot, ShotTimeline, TranscriptWord

log = logging.getLogger(__name__)

DESCRIPTOR_MAGIC = b"SSDESC01"
_HEADER = struct.Struct("<8sII")  # magic, dim, count: 16 bytes


class FeatureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    """Token to unit-norm vector lookup."""

    tokens: tuple[str, ...]
    vectors: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.tokens):
            raise FeatureError("one vector per token required")
        if not np.all(np.isfinite(vectors)):
            raise FeatureError("embedding table contains NaN or Inf")
        norms = np.linalg.norm(vectors, axis=1)
        if np.any(norms == 0):
            bad = self.tokens[int(np.argmin(norms))]
            raise FeatureError(f"zero embedding for token {bad!r}")
        vectors = vectors / norms[:, None]
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", {t: k for k, t in enumerate(self.tokens)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[self._index[token]]

    def subset(self, tokens: Iterable[str]) -> np.ndarray:
        """Vectors of the in-vocabulary ``tokens`` (duplicates dropped, order kept)."""
        seen = dict.fromkeys(t for t in tokens if t in self._index)
        if not seen:
            return np.empty((0, self.dim))
        return self.vectors[[self._index[t] for t in seen]]


def load_embeddings(path) -> EmbeddingTable:
    """Read a ``token,v1,...,vE`` CSV; vectors are l2-normalised on load."""
    tokens, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if line == 1 and row[0].strip() == "token":
                continue
            try:
                vec = [float(v) for v in row[1:]]
            except ValueError:
                raise FeatureError(f"{path}:{line}: malformed vector") from None
            if rows and len(vec) != len(rows[0]):
                raise FeatureError(f"{path}:{line}: expected {len(rows[0])} values, got {len(vec)}")
            if not vec:
                raise FeatureError(f"{path}:{line}: token without a vector")
            tokens.append(row[0].strip().lower())
            rows.append(vec)
    if not rows:
        raise FeatureError(f"{path}: empty embedding table")
    return EmbeddingTable(tuple(tokens), np.array(rows))


def embeddings_csv(tokens: Sequence[str], vectors: np.ndarray) -> str:
    dim = vectors.shape[1]
    lines = ["token," + ",".join(f"v{k + 1}" for k in range(dim))]
    for tok, vec in zip(tokens, vectors):
        lines.append(tok + "," + ",".join(repr(float(v)) for v in vec))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class WordCodebook:
    """Unit-norm centroids; words go to the centroid of highest cosine."""

    centroids: np.ndarray
    objective_trace: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def assign(self, vectors: np.ndarray) -> np.ndarray:
        return np.argmax(vectors @ self.centroids.T, axis=1)


def _kmeanspp_cosine(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    best = x @ x[chosen[0]]
    for _ in range(1, k):
        weight = np.maximum(1.0 - best, 0.0)
        total = weight.sum()
        if total <= 0:
            # fewer distinct directions than k; caller has checked this cannot happen
            raise FeatureError("ran out of distinct vectors while seeding")
        pick = int(rng.choice(n, p=weight / total))
        chosen.append(pick)
        best = np.maximum(best, x @ x[pick])
    return x[chosen].copy()


def spherical_kmeans(embeddings: np.ndarray, k: int, seed: int = 0,
                     max_iter: int = 100) -> WordCodebook:
    """Cluster unit vectors by cosine similarity.

    Seeded k-means++ initialisation, then alternate assignment and centroid
    renormalisation until assignments stop changing or ``max_iter`` runs
    out. An emptied cluster is re-seeded with the point least similar to its
    own centroid. The objective (total cosine similarity to the assigned
    centroid) never decreases; its value after every assignment is kept in
    ``objective_trace``.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise FeatureError("no vectors to cluster")
    if k < 1:
        raise FeatureError("k must be positive")
    n_distinct = np.unique(x, axis=0).shape[0]
    if k > n_distinct:
        raise FeatureError(f"k={k} exceeds the {n_distinct} distinct vectors")
    rng = np.random.default_rng(seed)

    centroids = _kmeanspp_cosine(x, k, rng)
    sims = x @ centroids.T
    labels = np.argmax(sims, axis=1)
    trace = [float(sims[np.arange(len(x)), labels].sum())]

    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            own = sims[np.arange(len(x)), labels]
            movable = counts[labels] > 1
            far = int(np.argmin(np.where(movable, own, np.inf)))
            counts[labels[far]] -= 1
            labels[far] = c
            counts[c] = 1
        for c in range(k):
            total = x[labels == c].sum(axis=0)
            norm = np.linalg.norm(total)
            if norm > 0:
                centroids[c] = total / norm
        sims = x @ centroids.T
        new_labels = np.argmax(sims, axis=1)
        trace.append(float(sims[np.arange(len(x)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return WordCodebook(centroids, tuple(trace))


def context_window(shot: Shot, timeline: ShotTimeline, w_min: float) -> tuple[float, float]:
    """Seconds interval of length ``max(shot duration, w_min)`` around the middle frame.

    The interval is clipped to the video, not shifted, so a window near
    either end can be shorter than ``w_min``.
    """
    if not w_min > 0:
        raise ValueError("minimum window must be positive")
    center = shot.center_frame / timeline.fps
    half = max(shot.n_frames / timeline.fps, w_min) / 2.0
    return max(0.0, center - half), min(timeline.duration, center + half)


def bow_vector(window: tuple[float, float], transcript: Sequence[TranscriptWord],
               table: EmbeddingTable, codebook: WordCodebook,
               tally: Counter | None = None) -> np.ndarray:
    """l1-normalised codeword histogram of the words inside ``window`` (closed).

    Out-of-vocabulary tokens are skipped and counted in ``tally`` if given.
    """
    lo, hi = window
    vecs = []
    for w in transcript:
        if lo <= w.time <= hi:
            if w.token in table:
                vecs.append(table[w.token])
            elif tally is not None:
                tally[w.token] += 1
    hist = np.zeros(codebook.k)
    if not vecs:
        return hist
    np.add.at(hist, codebook.assign(np.array(vecs)), 1.0)
    return hist / hist.sum()


@dataclass(frozen=True, eq=False)
class ShotFeatures:
    visual: np.ndarray
    words: np.ndarray
    center_time: float
    center_index: int


def build_shot_features(timeline: ShotTimeline, visual: np.ndarray,
                        transcript: Sequence[TranscriptWord], table: EmbeddingTable,
                        codebook: WordCodebook, w_min: float) -> list[ShotFeatures]:
    if len(visual) != timeline.n_shots:
        raise FeatureError(f"{len(visual)} descriptors for {timeline.n_shots} shots")
    tally: Counter = Counter()
    out = []
    for shot, vis in zip(timeline.shots, visual):
        window = context_window(shot, timeline, w_min)
        words = bow_vector(window, transcript, table, codebook, tally)
        out.append(ShotFeatures(np.asarray(vis, dtype=np.float64), words,
                                shot.center_frame / timeline.fps, shot.center_frame))
    if tally:
        log.info("%s: %d out-of-vocabulary word occurrences (%d types)",
                 timeline.video_id, sum(tally.values()), len(tally))
    return out


def corpus_codebook(transcripts: Iterable[Sequence[TranscriptWord]], table: EmbeddingTable,
                    k: int, seed: int = 0) -> WordCodebook:
    """Codebook over the distinct in-vocabulary words of a training corpus."""
    tokens = sorted({w.token for tr in transcripts for w in tr})
    return spherical_kmeans(table.subset(tokens), k, seed)


# -- descriptor files ----------------------------------------------------------

def _check_descriptors(arr: np.ndarray, timeline: ShotTimeline | None, path) -> np.ndarray:
    if timeline is not None and arr.shape[0] != timeline.n_shots:
        raise FeatureError(f"{path}: {arr.shape[0]} rows for {timeline.n_shots} shots")
    bad = ~np.isfinite(arr)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise FeatureError(f"{path}: non-finite value in row {row}")
    return arr


def load_visual_descriptors(path, timeline: ShotTimeline | None = None,
                            fmt: str | None = None) -> np.ndarray:
    """Per-shot descriptor matrix ``(n_shots, D_in)`` from CSV or the binary format.

    ``fmt`` defaults to ``"bin"`` for ``.bin`` files and ``"csv"`` otherwise.
    """
    if fmt is None:
        fmt = "bin" if str(path).endswith(".bin") else "csv"
    if fmt == "bin":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) != _HEADER.size:
                raise FeatureError(f"{path}: truncated header")
            magic, dim, count = _HEADER.unpack(head)
            if magic != DESCRIPTOR_MAGIC:
                raise FeatureError(f"{path}: bad magic {magic!r}")
            body = fh.read()
        if len(body) != 8 * dim * count:
            raise FeatureError(f"{path}: expected {count}x{dim} float64 values")
        arr = np.frombuffer(body, dtype="<f8").reshape(count, dim).astype(np.float64)
        return _check_descriptors(arr, timeline, path)
    if fmt != "csv":
        raise FeatureError(f"unknown descriptor format {fmt!r}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                vec = [float(v) for v in row]
            except ValueError:
                raise FeatureError(f"{path}:{line}: malformed row") from None
            if rows and len(vec) != len(rows[0]):
                raise FeatureError(f"{path}:{line}: ragged row ({len(vec)} != {len(rows[0])})")
            rows.append(vec)
    if not rows:
        raise FeatureError(f"{path}: no descriptors")
    return _check_descriptors(np.array(rows), timeline, path)


def descriptors_csv(arr: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in arr)


def descriptors_bin(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return _HEADER.pack(DESCRIPTOR_MAGIC, arr.shape[1], arr.shape[0]) + arr.tobytes()

