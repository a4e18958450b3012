"""Twin-branch shot embedding trained with a contrastive loss.

One parameter set serves both branches. A branch maps a shot to

    r_vis = relu(w_vis @ visual + b_vis)
    z     = [r_vis, words, center_frame / total_frames]
    out   = relu(w_merge @ z + b_merge)

and the distance of a shot pair is the l2 norm between the two outputs.
Training minimises

    lam/2 * ||w||^2 + 1/(2N) * sum(y * d^2 + (1 - y) * max(1 - d^2, 0))

over balanced minibatches with momentum SGD. ``||w||^2`` covers every
parameter, biases included.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .features import ShotFeatures
from .timeline import SceneSegmentation

PARAM_NAMES = ("w_vis", "b_vis", "w_merge", "b_merge")
CHECKPOINT_FORMAT = "siamscene-checkpoint"
CHECKPOINT_VERSION = 1

# defaults from the original experiments; tests and desk runs use tiny sizes
DEFAULT_D_VIS = 1183
DEFAULT_D_WORDS = 200
DEFAULT_HIDDEN = 200


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SiameseModel:
    w_vis: np.ndarray
    b_vis: np.ndarray
    w_merge: np.ndarray
    b_merge: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            arr = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d_vis, d_in = self.w_vis.shape
        if self.b_vis.shape != (d_vis,):
            raise ValueError("b_vis does not match w_vis")
        h, d_z = self.w_merge.shape
        if d_z <= d_vis:
            raise ValueError("merge layer narrower than the visual projection")
        if self.b_merge.shape != (h,):
            raise ValueError("b_merge does not match w_merge")

    @classmethod
    def init(cls, d_in: int, d_vis: int = DEFAULT_D_VIS, d_words: int = DEFAULT_D_WORDS,
             hidden: int = DEFAULT_HIDDEN, seed: int = 0) -> "SiameseModel":
        """Glorot-uniform weights and zero biases."""
        rng = np.random.default_rng(seed)

        def glorot(fan_out, fan_in):
            a = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-a, a, size=(fan_out, fan_in))

        d_z = d_vis + d_words + 1
        return cls(glorot(d_vis, d_in), np.zeros(d_vis), glorot(hidden, d_z), np.zeros(hidden))

    @property
    def d_in(self) -> int:
        return self.w_vis.shape[1]

    @property
    def d_vis(self) -> int:
        return self.w_vis.shape[0]

    @property
    def d_words(self) -> int:
        return self.w_merge.shape[1] - self.d_vis - 1

    @property
    def hidden(self) -> int:
        return self.w_merge.shape[0]

    def hyper(self) -> dict:
        return {"d_in": self.d_in, "d_vis": self.d_vis, "d_words": self.d_words,
                "hidden": self.hidden}

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def replace(self, **params) -> "SiameseModel":
        return SiameseModel(**{**self.params(), **params})

    def sq_norm(self) -> float:
        return float(sum(np.sum(p * p) for p in self.params().values()))


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Stacked per-shot inputs: visual ``(n, D_in)``, words ``(n, d_words)``,
    and the centre frame as a fraction of the video's frame count."""

    visual: np.ndarray
    words: np.ndarray
    position: np.ndarray

    def __len__(self) -> int:
        return self.visual.shape[0]

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.visual[idx], self.words[idx], self.position[idx])

    @classmethod
    def concat(cls, parts: Sequence["FeatureMatrix"]) -> "FeatureMatrix":
        return cls(np.vstack([p.visual for p in parts]), np.vstack([p.words for p in parts]),
                   np.concatenate([p.position for p in parts]))


def stack_features(features: Sequence[ShotFeatures], total_frames: int) -> FeatureMatrix:
    return FeatureMatrix(
        np.array([f.visual for f in features], dtype=np.float64),
        np.array([f.words for f in features], dtype=np.float64),
        np.array([f.center_index / total_frames for f in features], dtype=np.float64),
    )


def _check_dims(model: SiameseModel, fm: FeatureMatrix) -> None:
    if fm.visual.shape[1] != model.d_in:
        raise ValueError(f"visual features have {fm.visual.shape[1]} dims, model expects {model.d_in}")
    if fm.words.shape[1] != model.d_words:
        raise ValueError(f"word features have {fm.words.shape[1]} dims, model expects {model.d_words}")


def _forward(model: SiameseModel, fm: FeatureMatrix):
    a1 = fm.visual @ model.w_vis.T + model.b_vis
    z = np.hstack([np.maximum(a1, 0.0), fm.words, fm.position[:, None]])
    a2 = z @ model.w_merge.T + model.b_merge
    return np.maximum(a2, 0.0), (a1, z, a2)


def embed(model: SiameseModel, fm: FeatureMatrix) -> np.ndarray:
    """Branch outputs ``(n, hidden)`` for every row of ``fm``."""
    _check_dims(model, fm)
    return _forward(model, fm)[0]


def branch_forward(model: SiameseModel, feat: ShotFeatures, total_frames: int) -> np.ndarray:
    return embed(model, stack_features([feat], total_frames))[0]


def pair_distance(model: SiameseModel, a: ShotFeatures, b: ShotFeatures,
                  total_frames: int) -> float:
    out = embed(model, stack_features([a, b], total_frames))
    return float(np.sqrt(np.sum((out[0] - out[1]) ** 2)))


def contrastive_loss(distances, labels, model: SiameseModel | None, lam: float) -> float:
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if d.shape != y.shape:
        raise ValueError("distances and labels differ in length")
    if d.size == 0:
        raise ValueError("empty batch")
    d2 = d * d
    data = np.sum(y * d2 + (1.0 - y) * np.maximum(1.0 - d2, 0.0)) / (2.0 * d.size)
    reg = 0.5 * lam * model.sq_norm() if model is not None and lam else 0.0
    return float(reg + data)


def _pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    return pairs[:, 0], pairs[:, 1], pairs[:, 2].astype(np.float64)


def batch_loss(model: SiameseModel, fm: FeatureMatrix, pairs, lam: float) -> float:
    """Objective on the ``(i, j, y)`` rows of ``pairs`` indexing into ``fm``."""
    i, j, y = _pair_arrays(pairs)
    out = embed(model, fm)
    d = np.sqrt(np.sum((out[i] - out[j]) ** 2, axis=1))
    return contrastive_loss(d, y, model, lam)


def _backward(model, cache, fm, d_out, grads):
    a1, z, a2 = cache
    d_a2 = d_out * (a2 > 0)
    grads["w_merge"] += d_a2.T @ z
    grads["b_merge"] += d_a2.sum(axis=0)
    d_r = (d_a2 @ model.w_merge)[:, :model.d_vis]
    d_a1 = d_r * (a1 > 0)
    grads["w_vis"] += d_a1.T @ fm.visual
    grads["b_vis"] += d_a1.sum(axis=0)


def gradients(model: SiameseModel, fm: FeatureMatrix, pairs,
              lam: float) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and its exact gradient for a batch of ``(i, j, y)`` pairs.

    Subgradient conventions: relu'(0) = 0 and the hinge is flat at d^2 = 1.
    """
    _check_dims(model, fm)
    i, j, y = _pair_arrays(pairs)
    if i.size == 0:
        raise ValueError("empty batch")
    left, right = fm.take(i), fm.take(j)
    out_l, cache_l = _forward(model, left)
    out_r, cache_r = _forward(model, right)
    diff = out_l - out_r
    d2 = np.sum(diff * diff, axis=1)
    n = i.size
    data = np.sum(y * d2 + (1.0 - y) * np.maximum(1.0 - d2, 0.0)) / (2.0 * n)
    loss = float(0.5 * lam * model.sq_norm() + data)

    g_d2 = (y - (1.0 - y) * (d2 < 1.0)) / (2.0 * n)
    d_out = 2.0 * diff * g_d2[:, None]
    grads = {name: lam * p for name, p in model.params().items()}
    _backward(model, cache_l, left, d_out, grads)
    _backward(model, cache_r, right, -d_out, grads)
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    lr_vis: float = 0.001
    lr_rest: float = 0.004
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr_vis < 0 or self.lr_rest < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch size must be even and at least 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def pair_labels(segmentation: SceneSegmentation, offset: int = 0) -> np.ndarray:
    """All within-video pairs ``(i, j, y)`` with ``i < j``; ``y = 1`` for the same scene."""
    labels = segmentation.labels()
    n = len(labels)
    i, j = np.triu_indices(n, 1)
    y = (labels[i] == labels[j]).astype(np.int64)
    return np.stack([i + offset, j + offset, y], axis=1)


def build_balanced_batches(labels, batch_size: int, seed: int,
                           epoch: int = 0) -> Iterator[np.ndarray]:
    """Yield one epoch of pair-index batches, half positive and half negative.

    The epoch walks a shuffled copy of the rarer class without replacement;
    the other class is drawn to match, with replacement only if it is too
    small. Each batch lists its positives first.
    """
    y = np.asarray(labels)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size == 0:
        raise ValueError("no positive pairs in the training set")
    if neg.size == 0:
        raise ValueError("no negative pairs in the training set")
    if batch_size < 2 or batch_size % 2:
        raise ValueError("batch size must be even and at least 2")
    half = batch_size // 2
    pos_is_minor = pos.size <= neg.size
    minor, major = (pos, neg) if pos_is_minor else (neg, pos)
    if minor.size < half:
        raise ValueError(f"need {half} pairs of each class per batch, only {minor.size} available")

    rng = np.random.default_rng([seed, epoch])
    n_batches = -(-minor.size // half)
    order = rng.permutation(minor)
    short = n_batches * half - order.size
    if short:
        order = np.concatenate([order, rng.permutation(minor)[:short]])
    needed = n_batches * half
    other = rng.choice(major, size=needed, replace=needed > major.size)
    for b in range(n_batches):
        part_minor = order[b * half:(b + 1) * half]
        part_major = other[b * half:(b + 1) * half]
        if pos_is_minor:
            yield np.concatenate([part_minor, part_major])
        else:
            yield np.concatenate([part_major, part_minor])


@dataclass
class TrainingCorpus:
    """Stacked features of several videos and their labelled shot pairs."""

    features: FeatureMatrix
    pairs: np.ndarray  # (n_pairs, 3): global i, global j, y
    video_ids: list[str] = field(default_factory=list)

    @classmethod
    def from_videos(cls, videos: Sequence[tuple[str, FeatureMatrix, SceneSegmentation]]):
        parts, pairs, ids = [], [], []
        offset = 0
        for vid, fm, seg in videos:
            if len(fm) != seg.n_shots:
                raise ValueError(f"{vid}: {len(fm)} feature rows for {seg.n_shots} shots")
            parts.append(fm)
            pairs.append(pair_labels(seg, offset))
            ids.append(vid)
            offset += len(fm)
        if not parts:
            raise ValueError("empty training corpus")
        return cls(FeatureMatrix.concat(parts), np.vstack(pairs), ids)


def train(model: SiameseModel, corpus: TrainingCorpus,
          cfg: TrainConfig) -> tuple[SiameseModel, list[float]]:
    """Momentum SGD on balanced batches; returns the new model and per-batch loss.

    Update per parameter: ``v <- momentum * v - lr * grad``, ``w <- w + v``;
    ``lr_vis`` drives the visual projection, ``lr_rest`` the merge layer.
    The recorded loss is the batch objective before its update.
    """
    _check_dims(model, corpus.features)
    params = {k: v.copy() for k, v in model.params().items()}
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    rates = {"w_vis": cfg.lr_vis, "b_vis": cfg.lr_vis,
             "w_merge": cfg.lr_rest, "b_merge": cfg.lr_rest}
    labels = corpus.pairs[:, 2]
    trace: list[float] = []
    current = model
    for epoch in range(cfg.epochs):
        for batch in build_balanced_batches(labels, cfg.batch_size, cfg.seed, epoch):
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = gradients(current, corpus.features, corpus.pairs[batch],
                                        cfg.weight_decay)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {len(trace)}")
            trace.append(loss)
            with np.errstate(over="ignore", invalid="ignore"):
                for name in PARAM_NAMES:
                    velocity[name] = cfg.momentum * velocity[name] - rates[name] * grads[name]
                    params[name] = params[name] + velocity[name]
            if not all(np.all(np.isfinite(p)) for p in params.values()):
                raise TrainingDiverged(f"non-finite parameters after step {len(trace)}")
            current = SiameseModel(**params)
    return current, trace


# -- checkpoints ---------------------------------------------------------------

def checkpoint_json(model: SiameseModel, extras: dict | None = None) -> str:
    """Versioned JSON: hyper-parameters plus every tensor, row-major."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "hyper": model.hyper(),
        "params": {name: {"shape": list(p.shape), "data": p.ravel().tolist()}
                   for name, p in model.params().items()},
        "extras": extras or {},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def load_checkpoint(path) -> tuple[SiameseModel, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    params = {}
    for name in PARAM_NAMES:
        entry = doc["params"][name]
        params[name] = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
    model = SiameseModel(**params)
    if model.hyper() != doc["hyper"]:
        raise ValueError(f"{path}: tensor shapes disagree with recorded hyper-parameters")
    return model, doc.get("extras", {})


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
