import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from siamscene.features import (
    EmbeddingTable, FeatureError, WordCodebook, bow_vector, build_shot_features,
    context_window, descriptors_bin, descriptors_csv, embeddings_csv, load_embeddings,
    load_visual_descriptors, spherical_kmeans,
)
from siamscene.timeline import Shot, ShotTimeline, TranscriptWord


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_kmeans_identical_vectors():
    x = np.tile(unit([1, 2, 2]), (5, 1))
    cb = spherical_kmeans(x, 1, seed=3)
    np.testing.assert_allclose(cb.centroids[0], x[0], atol=1e-15)


def test_kmeans_two_orthogonal_directions_brute_force():
    a, b = unit([1, 0, 0]), unit([0, 1, 0])
    x = np.array([a, a, a, b, b])
    # oracle: best centroids over every 2-labelling of the points
    best, best_cents = -np.inf, None
    for labels in itertools.product([0, 1], repeat=len(x)):
        labels = np.array(labels)
        if len(set(labels)) < 2:
            continue
        cents = [unit(x[labels == c].sum(0)) for c in (0, 1)]
        obj = sum(max(p @ c for c in cents) for p in x)
        if obj > best + 1e-12:
            best, best_cents = obj, cents
    cb = spherical_kmeans(x, 2, seed=0)
    got = sorted(map(tuple, np.round(cb.centroids, 12)))
    want = sorted(map(tuple, np.round(best_cents, 12)))
    assert got == want
    assert cb.objective_trace[-1] == pytest.approx(best)


def test_kmeans_k_equals_distinct_count():
    rng = np.random.default_rng(1)
    x = np.array([unit(v) for v in rng.normal(size=(7, 4))])
    x = np.vstack([x, x[:3]])
    cb = spherical_kmeans(x, 7, seed=5)
    assert cb.objective_trace[-1] == pytest.approx(len(x), abs=1e-12)


def test_kmeans_errors():
    with pytest.raises(FeatureError):
        spherical_kmeans(np.empty((0, 3)), 1)
    with pytest.raises(FeatureError, match="distinct"):
        spherical_kmeans(np.tile(unit([1, 1]), (4, 1)), 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_kmeans_objective_monotone_and_deterministic(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(40, 5))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    cb = spherical_kmeans(x, k, seed=seed)
    trace = np.array(cb.objective_trace)
    assert np.all(np.diff(trace) >= -1e-9)
    assert len(trace) <= 101
    np.testing.assert_allclose(np.linalg.norm(cb.centroids, axis=1), 1.0, atol=1e-9)
    again = spherical_kmeans(x, k, seed=seed)
    assert np.array_equal(again.centroids, cb.centroids)


def test_kmeans_reseeds_empty_cluster():
    # seeding picks two antipodal-ish points; the middle cluster empties out
    x = np.array([unit([1, 0.01]), unit([1, -0.01]), unit([-1, 0.0]), unit([0.0, 1.0])])
    cb = spherical_kmeans(x, 3, seed=0)
    assert len(set(cb.assign(x))) == 3


TL = ShotTimeline.from_lengths([25 * 30, 25 * 4, 25 * 200], fps=25.0)


def test_context_window_long_shot():
    shot = Shot(0, 0, 25 * 30)
    assert context_window(shot, TL, 20.0) == (0.0, 30.0)


def test_context_window_short_shot():
    tl = ShotTimeline.from_lengths([2450, 100, 2450], fps=25.0)  # centre of shot 1 at 100 s
    assert context_window(tl.shots[1], tl, 20.0) == (90.0, 110.0)


def test_context_window_clipped_at_start():
    tl = ShotTimeline.from_lengths([150, 5000], fps=25.0)  # centre at 3 s
    assert context_window(tl.shots[0], tl, 20.0) == (0.0, 13.0)


@given(st.lists(st.integers(1, 3000), min_size=1, max_size=15), st.floats(0.1, 200))
def test_context_window_properties(lengths, w_min):
    tl = ShotTimeline.from_lengths(lengths, fps=25.0)
    for shot in tl.shots:
        lo, hi = context_window(shot, tl, w_min)
        # the floored middle frame can sit half a frame left of the true centre
        assert 0.0 <= lo <= shot.frame_start / 25.0 + 1 / 25.0
        assert hi >= shot.frame_end / 25.0 - 1 / 25.0 and hi <= tl.duration
        # clipping removes at most one half of the window
        assert hi - lo >= min(w_min / 2.0, tl.duration) - 1e-9


def toy_table():
    toks = ("ice", "snow", "sand", "dune", "fox")
    vecs = np.array([[1, 0.1, 0], [1, -0.1, 0], [0, 1, 0.1], [0, 1, -0.1], [0, 0, 1]])
    return EmbeddingTable(toks, vecs)


def toy_codebook():
    return WordCodebook(np.array([unit([1, 0, 0]), unit([0, 1, 0]), unit([0, 0, 1])]))


def test_bow_vectors():
    table, cb = toy_table(), toy_codebook()
    words = [TranscriptWord("ice", 1.0), TranscriptWord("snow", 2.0),
             TranscriptWord("sand", 3.0), TranscriptWord("dune", 4.0),
             TranscriptWord("zebra", 4.5)]
    assert not bow_vector((10, 20), words, table, cb).any()
    np.testing.assert_array_equal(bow_vector((0.5, 1.5), words, table, cb), [1, 0, 0])
    tally = Counter()
    np.testing.assert_array_equal(bow_vector((0, 5), words, table, cb, tally), [0.5, 0.5, 0])
    assert tally == {"zebra": 1}


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(12))))
def test_bow_invariant_to_row_order(perm):
    table, cb = toy_table(), toy_codebook()
    toks = table.tokens
    words = [TranscriptWord(toks[k % 5], float(k)) for k in range(12)]
    shuffled = sorted((words[p] for p in perm), key=lambda w: w.time)
    for window in [(0, 3), (2.5, 9), (0, 11)]:
        v = bow_vector(window, shuffled, table, cb)
        assert np.array_equal(v, bow_vector(window, words, table, cb))
        assert v.sum() == pytest.approx(1.0) and (v >= 0).all()


def test_embeddings_round_trip(tmp_path):
    table = toy_table()
    p = tmp_path / "emb.csv"
    p.write_text(embeddings_csv(table.tokens, table.vectors))
    loaded = load_embeddings(p)
    assert loaded.tokens == table.tokens
    assert np.array_equal(loaded.vectors, table.vectors)
    np.testing.assert_allclose(np.linalg.norm(loaded.vectors, axis=1), 1.0)


def test_embedding_rejects_nan_and_zero():
    with pytest.raises(FeatureError):
        EmbeddingTable(("a",), np.array([[np.nan, 1.0]]))
    with pytest.raises(FeatureError):
        EmbeddingTable(("a",), np.array([[0.0, 0.0]]))


@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_descriptor_formats(tmp_path, fmt):
    tl = ShotTimeline.from_lengths([10, 10])
    arr = np.random.default_rng(0).normal(size=(2, 8))
    p = tmp_path / f"vis.{fmt}"
    if fmt == "csv":
        p.write_text(descriptors_csv(arr))
    else:
        p.write_bytes(descriptors_bin(arr))
    got = load_visual_descriptors(p, tl)
    assert got.shape == (2, 8) and np.array_equal(got, arr)
    if fmt == "bin":
        assert p.read_bytes()[:8] == b"SSDESC01"


def test_descriptor_errors(tmp_path):
    tl = ShotTimeline.from_lengths([10, 10])
    p = tmp_path / "v.csv"
    p.write_text("1,2\n3,4\n5,6\n")
    with pytest.raises(FeatureError, match="3 rows for 2 shots"):
        load_visual_descriptors(p, tl)
    p.write_text("1,2\n3,nan\n")
    with pytest.raises(FeatureError, match="row 1"):
        load_visual_descriptors(p, tl)
    p.write_text("1,2\n3\n")
    with pytest.raises(FeatureError, match="ragged"):
        load_visual_descriptors(p, tl)
    b = tmp_path / "v.bin"
    b.write_bytes(b"NOTMAGIC" + bytes(8))
    with pytest.raises(FeatureError, match="magic"):
        load_visual_descriptors(b, tl)


def test_build_shot_features():
    table, cb = toy_table(), toy_codebook()
    tl = ShotTimeline.from_lengths([250, 250], fps=25.0)
    words = [TranscriptWord("ice", 1.0), TranscriptWord("fox", 15.0)]
    feats = build_shot_features(tl, np.zeros((2, 3)), words, table, cb, w_min=4.0)
    np.testing.assert_array_equal(feats[0].words, [1, 0, 0])
    np.testing.assert_array_equal(feats[1].words, [0, 0, 1])
    assert feats[1].center_index == 375 and feats[1].center_time == 15.0
