import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from siamscene import _purepy, metrics
from siamscene.metrics import (
    aggregate_cov_ovf, coverage_of_scene, enumerate_segmentations, evaluate, fast_scores,
    m_iou, overflow_of_scene,
)
from siamscene.timeline import SceneSegmentation as Seg, ShotTimeline, TimelineError


def seg(*scenes):
    return Seg.from_scenes(list(scenes))


EQUAL4 = ShotTimeline.from_lengths([100] * 4)


def test_coverage_examples():
    assert coverage_of_scene((0, 2), seg((0, 4))) == 1.0
    assert coverage_of_scene((1, 3), seg((0, 1), (1, 3), (3, 4))) == 1.0
    assert coverage_of_scene((0, 4), seg((0, 1), (1, 2), (2, 3), (3, 4))) == 0.25


def test_overflow_examples():
    gt = seg((0, 2), (2, 4))
    assert overflow_of_scene(0, gt, seg((0, 4))) == 1.0
    assert all(overflow_of_scene(t, gt, gt) == 0.0 for t in range(2))
    gt3 = seg((0, 2), (2, 4), (4, 6))
    assert overflow_of_scene(1, gt3, seg((0, 3), (3, 6))) == 1.0


def test_overflow_clamped():
    # spill of 5 shots over neighbours totalling 2
    gt = seg((0, 1), (1, 2), (2, 3), (3, 8))
    assert overflow_of_scene(1, gt, seg((0, 8))) == 1.0


def test_single_scene_overflow_rule():
    gt = seg((0, 4))
    assert overflow_of_scene(0, gt, gt) == 0.0
    assert overflow_of_scene(0, gt, seg((0, 2), (2, 4))) == 0.0


def test_aggregate_examples():
    gt = seg((0, 2), (2, 4))
    assert aggregate_cov_ovf(gt, gt) == (1.0, 0.0, 1.0)
    assert aggregate_cov_ovf(gt, seg((0, 4))) == (1.0, 1.0, 0.0)
    c, o, f = aggregate_cov_ovf(seg((0, 4)), gt)
    assert (c, o) == (0.5, 0.0)
    assert f == pytest.approx(2 * 0.5 / 1.5, abs=1e-15)


def test_mismatched_shot_counts():
    with pytest.raises(TimelineError):
        aggregate_cov_ovf(seg((0, 4)), seg((0, 5)))


def test_m_iou_examples():
    gt = seg((0, 2), (2, 4))
    assert m_iou(gt, gt, EQUAL4) == 1.0
    assert abs(m_iou(gt, seg((0, 4)), EQUAL4) - 0.5) < 1e-12


def test_m_iou_uses_frame_lengths():
    tl = ShotTimeline.from_lengths([10, 10, 80])
    gt = seg((0, 2), (2, 3))
    det = seg((0, 3))
    # gt: 20/100, 80/100 -> 0.5 ; det: 0.8
    assert m_iou(gt, det, tl) == pytest.approx(0.5 * (0.5 + 0.8), abs=1e-15)


@pytest.mark.parametrize("n, count", [(1, 1), (3, 4), (4, 8), (7, 64)])
def test_enumeration_counts(n, count):
    segs = list(enumerate_segmentations(n))
    assert len(segs) == count
    assert len(set(segs)) == count


def test_enumeration_refuses_large():
    with pytest.raises(ValueError):
        next(enumerate_segmentations(13))


@pytest.mark.parametrize("n", range(1, 7))
def test_against_set_oracle_exhaustive(n):
    rng = np.random.default_rng(n)
    lengths = [int(v) for v in rng.integers(1, 9, size=n)]
    tl = ShotTimeline.from_lengths(lengths)
    segs = list(enumerate_segmentations(n))
    for gt, det in itertools.product(segs, segs):
        rep = evaluate(gt, det, tl)
        c, o, f = oracles.coverage_overflow(gt.starts, det.starts, n)
        assert rep.coverage == pytest.approx(c, abs=1e-12)
        assert rep.overflow == pytest.approx(o, abs=1e-12)
        assert rep.f_co == pytest.approx(f, abs=1e-12)
        assert rep.m_iou == pytest.approx(oracles.m_iou(gt.starts, det.starts, lengths), abs=1e-12)
        assert fast_scores(gt, det, tl) == (rep.coverage, rep.overflow, rep.f_co, rep.m_iou)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=40), st.data())
def test_backends_agree_bitwise(lengths, data):
    n = len(lengths)
    tl = ShotTimeline.from_lengths(lengths)
    a = Seg.from_boundaries(n, data.draw(st.sets(st.integers(1, max(1, n - 1)))) if n > 1 else ())
    b = Seg.from_boundaries(n, data.draw(st.sets(st.integers(1, max(1, n - 1)))) if n > 1 else ())
    ref = _purepy.segmentation_scores(a.bounds, b.bounds, tl.frame_offsets)
    c, o, _, miou = fast_scores(a, b, tl)
    assert (c, o, miou) == ref


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=2, max_size=30), st.data())
def test_splitting_matched_scene_lowers_m_iou(lengths, data):
    n = len(lengths)
    tl = ShotTimeline.from_lengths(lengths)
    gt = Seg.from_boundaries(n, data.draw(st.sets(st.integers(1, n - 1))))
    det = Seg.from_boundaries(n, data.draw(st.sets(st.integers(1, n - 1))))
    matched = [s for s in det.scenes if s in gt.scenes and s[1] - s[0] >= 2]
    if not matched:
        det = gt
        matched = [s for s in gt.scenes if s[1] - s[0] >= 2]
    if not matched:
        return
    lo, hi = data.draw(st.sampled_from(matched))
    cut = data.draw(st.integers(lo + 1, hi - 1))
    split = Seg.from_boundaries(n, set(det.boundaries) | {cut})
    assert m_iou(gt, split, tl) < m_iou(gt, det, tl)


def test_per_scene_report():
    rep = evaluate(seg((0, 2), (2, 4)), seg((0, 4)), EQUAL4)
    assert [s.coverage for s in rep.per_scene] == [1.0, 1.0]
    assert [s.overflow for s in rep.per_scene] == [1.0, 1.0]
    assert [s.best_iou for s in rep.per_scene] == [0.5, 0.5]
    d = rep.to_dict()
    assert d["per_scene"][0] == {"scene": 0, "coverage": 1.0, "overflow": 1.0, "best_iou": 0.5}


def test_average_reports():
    avg = metrics.average_reports([{"m_iou": 0.5, "f_co": 1.0, "video": "a"},
                                   {"m_iou": 0.7, "f_co": 0.0, "video": "b"}])
    assert avg == pytest.approx({"m_iou": 0.6, "f_co": 0.5})
