"""Colour-histogram + spectral clustering baseline.

Shots are described by their l1-normalised colour histogram and their
centre time (as a fraction of the video), the time column scaled by
``time_weight``; Euclidean distances then go through the same kernel and
spectral pipeline as the learned model.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .cluster import SegmentResult, SpectralConfig, segment_distances
from .timeline import ShotTimeline


def histogram_features(hist: np.ndarray, timeline: ShotTimeline,
                       time_weight: float = 1.0) -> np.ndarray:
    hist = np.asarray(hist, dtype=np.float64)
    if hist.shape[0] != timeline.n_shots:
        raise ValueError(f"{hist.shape[0]} histograms for {timeline.n_shots} shots")
    if np.any(hist < 0):
        raise ValueError("histograms must be non-negative")
    totals = hist.sum(axis=1, keepdims=True)
    norm = np.divide(hist, totals, out=np.zeros_like(hist), where=totals > 0)
    centers = np.array([s.center_frame for s in timeline.shots]) / timeline.end_frame
    return np.hstack([norm, time_weight * centers[:, None]])


def baseline_segment(hist: np.ndarray, timeline: ShotTimeline, time_weight: float = 1.0,
                     cfg: SpectralConfig = SpectralConfig(),
                     sigma: float | None = None) -> SegmentResult:
    feats = histogram_features(hist, timeline, time_weight)
    return segment_distances(_kernels.pairwise_distances(feats), cfg, sigma)
