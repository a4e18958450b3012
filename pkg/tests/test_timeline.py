import pytest
from hypothesis import given, strategies as st

from siamscene.timeline import (
    SceneSegmentation, ShotTimeline, TimelineError, TranscriptWord, labels_to_segmentation,
    parse_scenes, parse_shots, parse_transcript, scenes_csv, shots_csv, transcript_csv,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_two_shots(tmp_path):
    tl = parse_shots(write(tmp_path, "s.csv", "index,frame_start,frame_end\n0,0,120\n1,120,300\n"))
    assert tl.n_shots == 2
    assert [s.center_frame for s in tl.shots] == [60, 210]


def test_gap_reported_with_line(tmp_path):
    path = write(tmp_path, "s.csv", "index,frame_start,frame_end\n0,0,120\n1,150,300\n")
    with pytest.raises(TimelineError, match=r":3: gap between shots at index 1"):
        parse_shots(path)


def test_empty_shot(tmp_path):
    path = write(tmp_path, "s.csv", "index,frame_start,frame_end\n0,0,0\n")
    with pytest.raises(TimelineError, match="empty shot"):
        parse_shots(path)


@pytest.mark.parametrize("text, msg", [
    ("", "empty file"),
    ("index,frame_start,frame_end\n", "no shots"),
    ("index,frame_start,frame_end\n0,0,x\n", ":2: malformed"),
    ("index,frame_start,frame_end\n0,0,10,3\n", ":2: expected 3 fields"),
    ("index,frame_start,frame_end\n1,0,10\n", "expected shot index 0"),
    ("idx,a,b\n0,0,10\n", "expected header"),
])
def test_malformed_shot_files(tmp_path, text, msg):
    with pytest.raises(TimelineError, match=msg):
        parse_shots(write(tmp_path, "s.csv", text))


def test_parse_scenes(tmp_path):
    tl = ShotTimeline.from_lengths([10] * 4)
    seg = parse_scenes(write(tmp_path, "a.csv", "boundary_shot_index\n2\n"), tl)
    assert seg.scenes == [(0, 2), (2, 4)]
    seg = parse_scenes(write(tmp_path, "b.csv", "boundary_shot_index\n"), tl)
    assert seg.scenes == [(0, 4)]
    with pytest.raises(TimelineError, match="out of range"):
        parse_scenes(write(tmp_path, "c.csv", "boundary_shot_index\n5\n"), tl)
    with pytest.raises(TimelineError, match="out of range"):
        parse_scenes(write(tmp_path, "d.csv", "boundary_shot_index\n0\n"), tl)
    with pytest.raises(TimelineError, match="increasing"):
        parse_scenes(write(tmp_path, "e.csv", "boundary_shot_index\n2\n1\n"), tl)


@pytest.mark.parametrize("labels, scenes", [
    ([0, 0, 1, 1], [(0, 2), (2, 4)]),
    ([0, 1, 0], [(0, 1), (1, 2), (2, 3)]),
    ([2, 2, 2], [(0, 3)]),
])
def test_labels_to_segmentation(labels, scenes):
    assert labels_to_segmentation(labels).scenes == scenes


@given(st.lists(st.integers(0, 3), min_size=1, max_size=30))
def test_label_boundaries_round_trip(labels):
    seg = labels_to_segmentation(labels)
    expected = tuple(k for k in range(1, len(labels)) if labels[k] != labels[k - 1])
    assert seg.boundaries == expected


def test_segmentation_validation():
    with pytest.raises(TimelineError):
        SceneSegmentation(4, (0, 2, 2))
    with pytest.raises(TimelineError):
        SceneSegmentation(4, (1, 2))
    with pytest.raises(TimelineError):
        SceneSegmentation.from_scenes([(0, 2), (3, 4)])
    seg = SceneSegmentation.from_scenes([(0, 2), (2, 4)])
    assert seg == SceneSegmentation.from_boundaries(4, [2])
    assert list(seg.labels()) == [0, 0, 1, 1]


@given(st.lists(st.integers(1, 500), min_size=1, max_size=20), st.data())
def test_shots_and_scenes_round_trip(tmp_path_factory, lengths, data):
    tmp = tmp_path_factory.mktemp("rt")
    tl = ShotTimeline.from_lengths(lengths, start=data.draw(st.integers(0, 50)))
    n = len(lengths)
    bounds = data.draw(st.sets(st.integers(1, max(1, n - 1)))) if n > 1 else set()
    seg = SceneSegmentation.from_boundaries(n, bounds)

    p = tmp / "shots.csv"
    p.write_text(shots_csv(tl))
    tl2 = parse_shots(p, video_id=tl.video_id)
    p.write_text(shots_csv(tl2))
    assert parse_shots(p, video_id=tl.video_id) == tl2 == tl

    q = tmp / "scenes.csv"
    q.write_text(scenes_csv(seg))
    seg2 = parse_scenes(q, tl)
    q.write_text(scenes_csv(seg2))
    assert parse_scenes(q, tl) == seg2 == seg


@given(st.lists(st.tuples(st.sampled_from(["the", "Fox", "ice", "bear"]),
                          st.floats(0, 4000, allow_nan=False)), max_size=20))
def test_transcript_round_trip(tmp_path_factory, rows):
    tmp = tmp_path_factory.mktemp("tr")
    words = [TranscriptWord(tok, t) for tok, t in rows]
    p = tmp / "t.csv"
    p.write_text(transcript_csv(words))
    parsed = parse_transcript(p)
    assert sorted(w.token for w in parsed) == sorted(w.token.lower() for w in words)
    assert [w.time for w in parsed] == sorted(w.time for w in words)
    p.write_text(transcript_csv(parsed))
    assert parse_transcript(p) == parsed


def test_transcript_times_have_three_decimals(tmp_path):
    text = transcript_csv([TranscriptWord("a", 1.5), TranscriptWord("b", 2.0)])
    assert text == "token,time\na,1.500\nb,2.000\n"
