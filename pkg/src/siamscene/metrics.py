"""Scene detection measures: Coverage, Overflow, F_co and M_iou.

Coverage and Overflow are weighted by shot counts; M_iou measures
intersections and unions in frames. Overflow of a scene is clamped to 1,
neighbours past either end of the video count as empty, and a single-scene
ground truth gets overflow 0 for a clean detection and 1 otherwise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Iterator, Sequence

from . import _kernels
from .timeline import SceneSegmentation, ShotTimeline, TimelineError

MAX_ENUMERATION_SHOTS = 12


@dataclass(frozen=True)
class SceneScore:
    scene: int
    coverage: float
    overflow: float
    best_iou: float


@dataclass(frozen=True)
class MetricReport:
    coverage: float
    overflow: float
    f_co: float
    m_iou: float
    per_scene: list[SceneScore] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def _check_same_shots(gt: SceneSegmentation, detected: SceneSegmentation) -> None:
    if gt.n_shots != detected.n_shots:
        raise TimelineError(
            f"segmentations cover {gt.n_shots} and {detected.n_shots} shots")


def coverage_of_scene(gt_scene: tuple[int, int], detected: SceneSegmentation) -> float:
    """Largest share of ``gt_scene``'s shots that one detected scene captures."""
    lo, hi = gt_scene
    if hi <= lo:
        raise ValueError("ground-truth scene is empty")
    best = max(_overlap(gt_scene, s) for s in detected.scenes)
    return best / (hi - lo)


def overflow_of_scene(t: int, gt: SceneSegmentation, detected: SceneSegmentation) -> float:
    """Spill of the detected scenes touching ground-truth scene ``t``.

    Shots outside scene ``t`` that belong to any detected scene overlapping
    it, over the shot count of its two neighbouring scenes.
    """
    scenes = gt.scenes
    if not 0 <= t < len(scenes):
        raise IndexError(f"scene {t} out of range 0..{len(scenes) - 1}")
    target = scenes[t]
    spill = 0
    for s in detected.scenes:
        inter = _overlap(s, target)
        if inter > 0:
            spill += (s[1] - s[0]) - inter
    den = 0
    if t > 0:
        den += scenes[t - 1][1] - scenes[t - 1][0]
    if t < len(scenes) - 1:
        den += scenes[t + 1][1] - scenes[t + 1][0]
    if den == 0:
        return 0.0 if spill == 0 else 1.0
    return min(1.0, spill / den)


def f_score(coverage: float, overflow: float) -> float:
    """Harmonic mean of coverage and 1 - overflow."""
    a, b = coverage, 1.0 - overflow
    if a + b == 0:
        return 0.0
    return 2.0 * a * b / (a + b)


def aggregate_cov_ovf(gt: SceneSegmentation,
                      detected: SceneSegmentation) -> tuple[float, float, float]:
    """Shot-weighted averages of per-scene coverage and overflow, plus F_co."""
    _check_same_shots(gt, detected)
    n = gt.n_shots
    cov_num = 0
    ovf = 0.0
    for t, scene in enumerate(gt.scenes):
        size = scene[1] - scene[0]
        # C_t * #scene is the best overlap itself; summing integers keeps it exact
        cov_num += max(_overlap(scene, s) for s in detected.scenes)
        ovf += overflow_of_scene(t, gt, detected) * size
    coverage = cov_num / n
    overflow = ovf / n
    return coverage, overflow, f_score(coverage, overflow)


def _frame_span(timeline: ShotTimeline, scene: tuple[int, int]) -> tuple[int, int]:
    offsets = timeline.frame_offsets
    return int(offsets[scene[0]]), int(offsets[scene[1]])


def _iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = _overlap(a, b)
    if inter == 0:
        return 0.0
    return inter / ((a[1] - a[0]) + (b[1] - b[0]) - inter)


def best_iou_per_scene(scenes: SceneSegmentation, others: SceneSegmentation,
                       timeline: ShotTimeline) -> list[float]:
    """For every scene of ``scenes``, its best frame-level IoU against ``others``."""
    spans = [_frame_span(timeline, s) for s in scenes.scenes]
    other_spans = [_frame_span(timeline, s) for s in others.scenes]
    return [max(_iou(a, b) for b in other_spans) for a in spans]


def m_iou(gt: SceneSegmentation, detected: SceneSegmentation,
          timeline: ShotTimeline) -> float:
    """Mean of the best-match IoU from both sides, measured in frames."""
    _check_same_shots(gt, detected)
    if gt.n_shots != timeline.n_shots:
        raise TimelineError("segmentation does not match the timeline")
    gt_term = 0.0
    for v in best_iou_per_scene(gt, detected, timeline):
        gt_term += v
    det_term = 0.0
    for v in best_iou_per_scene(detected, gt, timeline):
        det_term += v
    return 0.5 * (gt_term / len(gt) + det_term / len(detected))


def evaluate(gt: SceneSegmentation, detected: SceneSegmentation,
             timeline: ShotTimeline) -> MetricReport:
    coverage, overflow, f_co = aggregate_cov_ovf(gt, detected)
    ious = best_iou_per_scene(gt, detected, timeline)
    per_scene = [
        SceneScore(t, coverage_of_scene(scene, detected),
                   overflow_of_scene(t, gt, detected), ious[t])
        for t, scene in enumerate(gt.scenes)
    ]
    return MetricReport(coverage, overflow, f_co, m_iou(gt, detected, timeline), per_scene)


def fast_scores(gt: SceneSegmentation, detected: SceneSegmentation,
                timeline: ShotTimeline) -> tuple[float, float, float, float]:
    """``(coverage, overflow, f_co, m_iou)`` through the compiled kernel.

    Bit-identical to :func:`evaluate`; no per-scene diagnostics.
    """
    _check_same_shots(gt, detected)
    c, o, miou = _kernels.segmentation_scores(gt.bounds, detected.bounds,
                                              timeline.frame_offsets)
    return c, o, f_score(c, o), miou


def average_reports(values: Sequence[dict]) -> dict:
    """Unweighted mean over videos of every numeric field in ``values``."""
    if not values:
        raise ValueError("nothing to average")
    keys = [k for k, v in values[0].items() if isinstance(v, (int, float))]
    return {k: sum(v[k] for v in values) / len(values) for k in keys}


def enumerate_segmentations(n_shots: int) -> Iterator[SceneSegmentation]:
    """Every contiguous partition of ``n_shots`` shots, 2**(n-1) in total."""
    if n_shots < 1:
        raise ValueError("need at least one shot")
    if n_shots > MAX_ENUMERATION_SHOTS:
        raise ValueError(f"refusing to enumerate more than {MAX_ENUMERATION_SHOTS} shots")
    cuts = range(1, n_shots)
    for r in range(n_shots):
        for chosen in combinations(cuts, r):
            yield SceneSegmentation(n_shots, (0, *chosen))
