"""``siamscene`` command line: synth, train, segment, evaluate, baseline.

A dataset directory holds ``embeddings.csv`` and one sub-directory per
video with ``shots.csv``, ``scenes.csv``, ``transcript.csv``,
``visual.csv`` (or ``visual.bin``) and, for the baseline, ``hist.csv``.
Options can also come from a flat ``key = value`` file given with
``--config``; keys are the long option names with dashes or underscores,
and command-line flags win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __doc__ as _pkg_doc
from .baseline import baseline_segment
from .cluster import SpectralConfig, segment, similarity_csv, similarity_pgm
from .features import (
    EmbeddingTable, FeatureError, WordCodebook, build_shot_features, corpus_codebook,
    load_embeddings, load_visual_descriptors,
)
from .metrics import average_reports, evaluate
from .siamese import (
    DEFAULT_D_VIS, DEFAULT_D_WORDS, DEFAULT_HIDDEN, SiameseModel, TrainConfig, TrainingCorpus,
    TrainingDiverged, checkpoint_json, load_checkpoint, stack_features, train,
)
from .synth import SyntheticSpec, write_dataset
from .timeline import (
    DEFAULT_FPS, SceneSegmentation, ShotTimeline, TimelineError, atomic_write, parse_scenes,
    parse_shots, parse_transcript, scenes_csv,
)

log = logging.getLogger("siamscene")

DEFAULT_W_MIN = 20.0


class CommandError(Exception):
    pass


# -- configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved inputs and knobs for one command invocation."""

    data: str | None = None
    shots: str | None = None
    scenes: str | None = None
    transcript: str | None = None
    visual: str | None = None
    embeddings: str | None = None
    model: str | None = None
    visual_format: str | None = None
    fps: float = DEFAULT_FPS
    w_min: float = DEFAULT_W_MIN
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)

    def __post_init__(self):
        if not self.w_min > 0:
            raise CommandError("--w-min must be positive")
        for name in ("data", "shots", "scenes", "transcript", "visual", "embeddings", "model"):
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                raise CommandError(f"--{name.replace('_', '-')}: {path} does not exist")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        def opt(name, default=None):
            return getattr(args, name, default)

        train_cfg = TrainConfig(
            lr_vis=opt("lr_vis", 0.001), lr_rest=opt("lr_rest", 0.004),
            momentum=opt("momentum", 0.9), weight_decay=opt("weight_decay", 0.0005),
            batch_size=opt("batch_size", 128), epochs=opt("epochs", 10), seed=args.seed)
        spectral = SpectralConfig(k=opt("k"), k_max=opt("k_max"),
                                  kmeans_restarts=opt("restarts", 10), seed=args.seed)
        return cls(data=opt("data"), shots=opt("shots"), scenes=opt("scenes"),
                   transcript=opt("transcript"), visual=opt("visual"),
                   embeddings=opt("embeddings"), model=opt("model"),
                   visual_format=opt("visual_format"), fps=opt("fps", DEFAULT_FPS),
                   w_min=opt("w_min", DEFAULT_W_MIN), seed=args.seed,
                   train=train_cfg, spectral=spectral)

    # paths of one video, from the dataset layout unless given explicitly
    def video_file(self, video: str | None, name: str) -> str:
        explicit = {"shots.csv": self.shots, "scenes.csv": self.scenes,
                    "transcript.csv": self.transcript}.get(name)
        if explicit is not None:
            return explicit
        if self.data is None or video is None:
            raise CommandError(f"no path for {name}: give --data/--video or the file itself")
        return os.path.join(self.data, video, name)

    def visual_file(self, video: str | None, stem: str = "visual") -> str:
        if stem == "visual" and self.visual is not None:
            return self.visual
        if self.data is None or video is None:
            raise CommandError(f"no path for {stem} descriptors")
        fmt = self.visual_format if stem == "visual" else "csv"
        if fmt is None:
            fmt = "bin" if os.path.exists(os.path.join(self.data, video, f"{stem}.bin")) else "csv"
        return os.path.join(self.data, video, f"{stem}.{fmt}")

    def embeddings_file(self) -> str:
        if self.embeddings is not None:
            return self.embeddings
        if self.data is None:
            raise CommandError("no embedding table: give --embeddings or --data")
        return os.path.join(self.data, "embeddings.csv")


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CommandError(f"{path}:{lineno}: expected key = value")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    """Install file values as parser defaults, converted with each option's type."""
    defaults = {}
    for action in parser._actions:
        if action.dest not in values:
            continue
        raw = values[action.dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*") or isinstance(action.nargs, int):
            conv = action.type or str
            defaults[action.dest] = [conv(v) for v in raw.replace(",", " ").split()]
        else:
            defaults[action.dest] = (action.type or str)(raw)
    parser.set_defaults(**defaults)


# -- loading -------------------------------------------------------------------

@dataclass
class VideoData:
    video_id: str
    timeline: ShotTimeline
    scenes: SceneSegmentation | None
    transcript: list
    visual: np.ndarray


def load_video(cfg: RunConfig, video: str | None, need_scenes: bool) -> VideoData:
    shots_path = cfg.video_file(video, "shots.csv")
    timeline = parse_shots(shots_path, fps=cfg.fps, video_id=video)
    scenes = None
    scenes_path = cfg.video_file(video, "scenes.csv") if (need_scenes or cfg.scenes) else None
    if scenes_path is not None:
        if not os.path.exists(scenes_path):
            raise CommandError(f"{timeline.video_id}: missing ground truth {scenes_path}")
        scenes = parse_scenes(scenes_path, timeline)
    tr_path = cfg.video_file(video, "transcript.csv")
    transcript = parse_transcript(tr_path) if os.path.exists(tr_path) else []
    visual = load_visual_descriptors(cfg.visual_file(video), timeline, cfg.visual_format)
    return VideoData(timeline.video_id, timeline, scenes, transcript, visual)


def video_features(video: VideoData, table: EmbeddingTable, codebook: WordCodebook,
                   w_min: float):
    feats = build_shot_features(video.timeline, video.visual, video.transcript, table,
                                codebook, w_min)
    return stack_features(feats, video.timeline.end_frame)


def dataset_videos(data: str) -> list[str]:
    manifest = os.path.join(data, "dataset.json")
    if os.path.exists(manifest):
        with open(manifest, encoding="utf-8") as fh:
            return list(json.load(fh)["videos"])
    return sorted(d for d in os.listdir(data)
                  if os.path.isfile(os.path.join(data, d, "shots.csv")))


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, optionally over worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _float_lines(header: str, rows) -> str:
    return header + "\n" + "".join(",".join(repr(v) if isinstance(v, float) else str(v)
                                            for v in row) + "\n" for row in rows)


# -- commands --------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_videos=args.videos, n_scenes=args.scenes, shots_per_scene=tuple(args.shots_per_scene),
        shot_frames=tuple(args.shot_frames), fps=args.fps, visual_dim=args.visual_dim,
        signal_dims=args.signal_dims, separation=args.separation, noise=args.noise,
        clutter=args.clutter, n_topics=args.topics, vocab_per_topic=args.vocab_per_topic,
        embed_dim=args.embed_dim, word_rate=args.word_rate, n_palettes=args.palettes,
        hist_bins=args.hist_bins, seed=args.seed)
    ids = write_dataset(spec, args.out, args.visual_format or "csv")
    log.info("wrote %d videos to %s", len(ids), args.out)
    return 0


@dataclass
class _TrainJob:
    cfg: RunConfig
    train_ids: list
    out: str
    d_vis: int
    d_words: int
    hidden: int


def _train_one(job: _TrainJob) -> dict[str, str]:
    cfg = job.cfg
    table = load_embeddings(cfg.embeddings_file())
    videos = [load_video(cfg, vid, need_scenes=True) for vid in job.train_ids]
    codebook = corpus_codebook([v.transcript for v in videos], table, job.d_words, cfg.seed)
    parts = [(v.video_id, video_features(v, table, codebook, cfg.w_min), v.scenes)
             for v in videos]
    corpus = TrainingCorpus.from_videos(parts)
    d_in = corpus.features.visual.shape[1]
    model = SiameseModel.init(d_in, job.d_vis, job.d_words, job.hidden, seed=cfg.seed)
    try:
        model, trace = train(model, corpus, cfg.train)
    except TrainingDiverged as exc:
        raise CommandError(f"training diverged: {exc}") from None
    extras = {
        "codebook": codebook.centroids.tolist(),
        "w_min": cfg.w_min,
        "fps": cfg.fps,
        "train_config": cfg.train.__dict__,
        "train_videos": list(job.train_ids),
    }
    trace_path = os.path.splitext(job.out)[0] + ".loss.csv"
    return {job.out: checkpoint_json(model, extras),
            trace_path: _float_lines("step,loss", enumerate(trace))}


def cmd_train(args) -> int:
    cfg = RunConfig.from_args(args)
    if cfg.data is None:
        raise CommandError("train needs --data")
    ids = args.video or dataset_videos(cfg.data)
    ids = [v for v in ids if v not in (args.exclude or [])]
    if not ids:
        raise CommandError("no training videos")
    dims = dict(d_vis=args.d_vis, d_words=args.d_words, hidden=args.hidden)
    if args.leave_one_out:
        if len(ids) < 2:
            raise CommandError("leave-one-out needs at least two videos")
        out_dir = args.out_dir or args.out
        if out_dir is None:
            raise CommandError("leave-one-out needs --out-dir")
        jobs = [_TrainJob(cfg, [v for v in ids if v != held], os.path.join(out_dir, f"loo_{held}.json"),
                          **dims) for held in ids]
    else:
        if args.out is None:
            raise CommandError("train needs --out")
        jobs = [_TrainJob(cfg, ids, args.out, **dims)]
    outputs = _map(_train_one, jobs, args.jobs)
    for files in outputs:
        for path, text in files.items():
            atomic_write(path, text)
            log.info("wrote %s", path)
    return 0


@dataclass
class _SegmentJob:
    cfg: RunConfig
    video: str | None
    out_dir: str
    sigma: float | None
    matrix_format: str
    time_weight: float | None = None  # set for the baseline


def _segment_one(job: _SegmentJob) -> dict[str, str | bytes]:
    cfg = job.cfg
    if job.time_weight is None:
        model, extras = load_checkpoint(cfg.model)
        table = load_embeddings(cfg.embeddings_file())
        codebook = WordCodebook(np.array(extras["codebook"]))
        w_min = extras.get("w_min", cfg.w_min)
        video = load_video(cfg, job.video, need_scenes=False)
        fm = video_features(video, table, codebook, w_min)
        if fm.visual.shape[1] != model.d_in or fm.words.shape[1] != model.d_words:
            raise CommandError(
                f"{video.video_id}: features ({fm.visual.shape[1]}, {fm.words.shape[1]}) do not "
                f"match checkpoint ({model.d_in}, {model.d_words})")
        result = segment(fm, model, cfg.spectral, job.sigma)
        method = {"method": "siamese", "model": os.path.basename(cfg.model)}
    else:
        timeline = parse_shots(cfg.video_file(job.video, "shots.csv"), cfg.fps, job.video)
        hist = load_visual_descriptors(cfg.visual_file(job.video, "hist"), timeline)
        result = baseline_segment(hist, timeline, job.time_weight, cfg.spectral, job.sigma)
        video = VideoData(timeline.video_id, timeline, None, [], hist)
        method = {"method": "color+sc", "time_weight": job.time_weight}

    base = os.path.join(job.out_dir, video.video_id) if job.video else job.out_dir
    manifest = {"video": video.video_id, **method, "seed": cfg.seed,
                "spectral": {"k": cfg.spectral.k, "k_max": cfg.spectral.k_max,
                             "kmeans_restarts": cfg.spectral.kmeans_restarts,
                             "laplacian": "symmetric-normalized", "eigensolver": "jacobi"},
                **result.manifest()}
    files: dict[str, str | bytes] = {
        os.path.join(base, "scenes.csv"): scenes_csv(result.segmentation),
        os.path.join(base, "manifest.json"): json.dumps(manifest, indent=1, sort_keys=True) + "\n",
    }
    if job.matrix_format == "pgm":
        files[os.path.join(base, "similarity.pgm")] = similarity_pgm(result.similarity)
    elif job.matrix_format == "csv":
        files[os.path.join(base, "similarity.csv")] = similarity_csv(result.similarity)
    return files


def _run_segment_jobs(args, baseline: bool) -> int:
    cfg = RunConfig.from_args(args)
    if not baseline and cfg.model is None:
        raise CommandError("segment needs --model")
    videos = args.video or ([None] if cfg.data is None else dataset_videos(cfg.data))
    jobs = [_SegmentJob(cfg, v, args.out_dir, args.sigma, args.matrix_format,
                        args.time_weight if baseline else None) for v in videos]
    outputs = _map(_segment_one, jobs, args.jobs)
    for files in outputs:
        for path, data in files.items():
            atomic_write(path, data)
        log.info("wrote %s", os.path.dirname(next(iter(files))))
    return 0


def cmd_segment(args) -> int:
    return _run_segment_jobs(args, baseline=False)


def cmd_baseline(args) -> int:
    return _run_segment_jobs(args, baseline=True)


def _evaluate_one(item: tuple[str, str, str, float, str]) -> dict:
    gt_path, det_path, shots_path, fps, video = item
    timeline = parse_shots(shots_path, fps=fps, video_id=video)
    try:
        gt = parse_scenes(gt_path, timeline)
        det = parse_scenes(det_path, timeline)
    except TimelineError as exc:
        raise CommandError(f"{video}: timeline mismatch: {exc}") from None
    return {"video": video, **evaluate(gt, det, timeline).to_dict()}


def cmd_evaluate(args) -> int:
    items = []
    if args.gt or args.detected:
        if not (args.gt and args.detected and args.shots):
            raise CommandError("single-video mode needs --gt, --detected and --shots")
        video = os.path.basename(os.path.dirname(os.path.abspath(args.shots))) or "video"
        items.append((args.gt, args.detected, args.shots, args.fps, video))
    else:
        if not (args.data and args.pred):
            raise CommandError("dataset mode needs --data and --pred")
        for vid in args.video or dataset_videos(args.data):
            items.append((os.path.join(args.data, vid, "scenes.csv"),
                          os.path.join(args.pred, vid, "scenes.csv"),
                          os.path.join(args.data, vid, "shots.csv"), args.fps, vid))
    for paths in items:
        for p in paths[:3]:
            if not os.path.exists(p):
                raise CommandError(f"{p} does not exist")
    reports = _map(_evaluate_one, items, args.jobs)
    keys = ("coverage", "overflow", "f_co", "m_iou")
    doc = {"videos": reports,
           "average": average_reports([{k: r[k] for k in keys} for r in reports])}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# -- parser ----------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="seed for every random choice")
    p.add_argument("--config", help="flat key = value file with option defaults")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across videos")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _video_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--video", action="append", help="video id inside --data (repeatable)")
    p.add_argument("--shots", help="shots file (instead of --data/--video)")
    p.add_argument("--transcript", help="transcript file")
    p.add_argument("--visual", help="visual descriptor file")
    p.add_argument("--visual-format", choices=("csv", "bin"), default=None)
    p.add_argument("--embeddings", help="embedding table (default: DATA/embeddings.csv)")
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)


def _spectral_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k", type=int, default=None, help="cluster count (default: eigengap)")
    p.add_argument("--k-max", type=int, default=None, help="eigengap upper bound (default n/5)")
    p.add_argument("--restarts", type=int, default=10, help="k-means restarts")
    p.add_argument("--sigma", type=float, default=None, help="kernel bandwidth; skips KDE")
    p.add_argument("--matrix-format", choices=("csv", "pgm", "none"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="siamscene", description=_pkg_doc, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=5)
    p.add_argument("--scenes", type=int, default=8)
    p.add_argument("--shots-per-scene", type=int, nargs=2, default=[4, 7])
    p.add_argument("--shot-frames", type=int, nargs=2, default=[50, 400])
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    p.add_argument("--visual-dim", type=int, default=64)
    p.add_argument("--signal-dims", type=int, default=8)
    p.add_argument("--separation", type=float, default=8.0)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--clutter", type=float, default=0.06)
    p.add_argument("--topics", type=int, default=12)
    p.add_argument("--vocab-per-topic", type=int, default=10)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--word-rate", type=float, default=0.6)
    p.add_argument("--palettes", type=int, default=3)
    p.add_argument("--hist-bins", type=int, default=4)
    p.add_argument("--visual-format", choices=("csv", "bin"), default="csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the siamese model")
    _video_inputs(p)
    p.add_argument("--exclude", action="append", help="video id to hold out (repeatable)")
    p.add_argument("--leave-one-out", action="store_true",
                   help="one checkpoint per video, trained on all the others")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--out-dir", help="checkpoint directory for --leave-one-out")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr-vis", type=float, default=0.001)
    p.add_argument("--lr-rest", type=float, default=0.004)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0005)
    p.add_argument("--d-vis", type=int, default=DEFAULT_D_VIS)
    p.add_argument("--d-words", type=int, default=DEFAULT_D_WORDS)
    p.add_argument("--hidden", type=int, default=DEFAULT_HIDDEN)
    p.add_argument("--w-min", type=float, default=DEFAULT_W_MIN,
                   help="minimum transcript context window, seconds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", parents=[common], help="detect scenes with a checkpoint")
    _video_inputs(p)
    p.add_argument("--model", required=True)
    _spectral_options(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("baseline", parents=[common], help="colour histogram + spectral clustering")
    _video_inputs(p)
    _spectral_options(p)
    p.add_argument("--time-weight", type=float, default=1.0)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", parents=[common], help="Coverage/Overflow/F_co/M_iou report")
    p.add_argument("--gt")
    p.add_argument("--detected")
    p.add_argument("--shots")
    p.add_argument("--data", help="dataset mode: ground truth directory")
    p.add_argument("--pred", help="dataset mode: directory of <video>/scenes.csv")
    p.add_argument("--video", action="append")
    p.add_argument("--fps", type=float, default=DEFAULT_FPS)
    p.add_argument("--out", help="write the JSON here instead of stdout")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _config_path(argv: Sequence[str]) -> str | None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return known.config


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = _config_path(argv)
        if config:
            values = read_config_file(config)
            for sp in parser._subparsers._group_actions[0].choices.values():
                _apply_config(sp, values)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (CommandError, TimelineError, FeatureError, ValueError, OSError) as exc:
        print(f"siamscene: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
