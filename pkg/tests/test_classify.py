import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from etrk.classify import (
    SlotSchedule, StubClassifier, TrackCrop, break_even_spikes, crop_track, encode_spikes,
    export_tracks, majority_vote, read_labels, read_pbm, resize_to_fixed, schedule,
    vote_accuracy, write_pbm, write_track_labels,
)
from etrk.events import BinaryFrame, BoundsError
from etrk.regions import Region
from etrk.tracker import TrackRecord


def test_crop_full_frame_is_frame():
    bits = np.random.default_rng(0).random((18, 24)) < 0.3
    assert np.array_equal(crop_track(BinaryFrame(bits), Region(0, 0, 24, 18)), bits)


def test_crop_single_pixel():
    bits = np.zeros((10, 10), bool)
    bits[4, 6] = True
    assert crop_track(bits, Region(6, 4, 1, 1)).tolist() == [[True]]


def test_crop_known_pattern():
    bits = np.zeros((10, 10), bool)
    pattern = np.arange(16).reshape(4, 4) % 3 == 0
    bits[2:6, 5:9] = pattern
    out = crop_track(bits, Region(5, 2, 4, 4))
    assert [[out[r, c] for c in range(4)] for r in range(4)] == [[bits[2 + r, 5 + c] for c in range(4)] for r in range(4)]


def test_crop_out_of_bounds():
    with pytest.raises(BoundsError):
        crop_track(np.zeros((10, 10), bool), Region(8, 0, 4, 4))


def test_resize_identity():
    img = np.random.default_rng(1).random((42, 42)) < 0.5
    assert np.array_equal(resize_to_fixed(img).bits, img)


def test_resize_checkerboard_blocks():
    board = np.array([[1, 0], [0, 1]], bool)
    out = resize_to_fixed(board, 4).bits
    expected = np.array([[board[r // 2, c // 2] for c in range(4)] for r in range(4)])
    assert np.array_equal(out, expected)
    assert out[:2, :2].all() and not out[:2, 2:].any()


@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 50))
def test_resize_all_ones(h, w, s):
    assert resize_to_fixed(np.ones((h, w), bool), s).bits.all()


@settings(max_examples=50)
@given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))), st.integers(1, 45))
def test_resize_nearest_index_oracle(img, s):
    out = resize_to_fixed(img, s).bits
    h, w = img.shape
    assert out.shape == (s, s)
    for r in range(s):
        for c in range(s):
            assert out[r, c] == img[(r * h) // s, (c * w) // s]


def test_resize_rejects_empty():
    with pytest.raises(ValueError):
        resize_to_fixed(np.zeros((0, 3), bool))


def test_encode_examples():
    assert encode_spikes(TrackCrop(0, 0, np.zeros((8, 8), bool))).spikes == []
    b = np.zeros((8, 8), bool)
    b[3, 5] = True
    assert encode_spikes(TrackCrop(0, 0, b)).spikes == [(3, 5)]


@given(arrays(bool, (12, 12)))
def test_spike_count_is_popcount(bits):
    sl = encode_spikes(TrackCrop(1, 2, bits))
    assert len(sl) == int(bits.sum())
    assert sl.spikes == sorted(set(sl.spikes))  # unique, row-major


def test_break_even_examples():
    assert break_even_spikes(32, 32, 24) == 43
    assert break_even_spikes(1, 24, 24) == 1
    assert break_even_spikes(42, 42, 24) == 74
    with pytest.raises(ValueError):
        break_even_spikes(0, 4, 24)


def test_schedule_ascending_ids():
    s = schedule([7, 2, 5])
    assert s.slots == {2: 0, 5: 1, 7: 2} and s.waiting == []


def test_schedule_nine_tracks():
    s = schedule(range(9))
    assert len(s.slots) == 8 and s.waiting == [8]


def test_schedule_reuses_freed_slot():
    s = schedule([0, 1, 2, 3])
    s = schedule([0, 1, 3, 9], s)
    assert s.slots == {0: 0, 1: 1, 3: 3, 9: 2}


@settings(max_examples=80)
@given(st.lists(st.sets(st.integers(0, 15), max_size=12), min_size=1, max_size=15))
def test_schedule_slots_stable(frames):
    s = SlotSchedule()
    for present in frames:
        prev = dict(s.slots)
        s = schedule(present, s)
        assert len(s.slots) <= 8
        assert len(set(s.slots.values())) == len(s.slots)
        for tid, slot in prev.items():
            if tid in present:
                assert s.slots[tid] == slot


def test_vote_examples():
    assert majority_vote(["A", "A", "B"]) == "A"
    assert majority_vote(["A"]) == "A"
    assert majority_vote(["A", "B", "B", "A"]) == "A"
    assert majority_vote(["B", "A", "A", "B"]) == "B"
    with pytest.raises(ValueError):
        majority_vote([])


def test_stub_classifier_lookup_and_seeded():
    crop = TrackCrop(3, 0, np.zeros((4, 4), bool))
    assert StubClassifier(table={3: "bus"}).classify(crop, encode_spikes(crop)) == "bus"
    a, b = StubClassifier(seed=5), StubClassifier(seed=5)
    sl = encode_spikes(crop)
    assert [a.classify(crop, sl) for _ in range(6)] == [b.classify(crop, sl) for _ in range(6)]


def test_pbm_roundtrip(tmp_path):
    bits = np.random.default_rng(2).random((42, 42)) < 0.4
    write_pbm(tmp_path / "a.pbm", bits)
    assert np.array_equal(read_pbm(tmp_path / "a.pbm"), bits)
    raw = (tmp_path / "a.pbm").read_bytes()
    assert raw.startswith(b"P4\n42 42\n") and len(raw) == len(b"P4\n42 42\n") + 42 * 6


def _records(ids, frames, box=Region(10, 10, 12, 8)):
    return [TrackRecord(33_000 * (j + 1), i, *box, 0.0, 0.0, "Locked") for j in frames for i in ids]


def _frames(n):
    bits = np.zeros((180, 240), bool)
    bits[10:18, 10:22] = True
    return {33_000 * (j + 1): BinaryFrame(bits, j, 33_000 * j, 33_000 * (j + 1)) for j in range(n)}


def test_export_one_track_ten_frames(tmp_path):
    res = export_tracks(_frames(10), _records([4], range(10)), tmp_path)
    assert len(res.crops) == 10
    names = sorted(p.name for p in tmp_path.glob("*.pbm"))
    assert names == sorted(f"track4_frame{j}.pbm" for j in range(10))
    manifest = (tmp_path / "manifest.csv").read_text().splitlines()
    assert manifest[0] == "id,frame,t_us,file" and manifest[1] == "4,0,33000,track4_frame0.pbm"
    assert len(manifest) == 11
    spikes = (tmp_path / "spikes.csv").read_text().splitlines()
    assert spikes[0] == "id,frame,row,col" and len(spikes) == 1 + 10 * 42 * 42


def test_export_nine_tracks_one_waits(tmp_path):
    res = export_tracks(_frames(2), _records(range(9), range(2)), tmp_path)
    assert all(w == [8] for _, _, w in res.schedule_log)
    log = (tmp_path / "schedule.log").read_text().splitlines()
    assert log[1].endswith(",8")
    assert len(res.crops) == 16


def test_labels_roundtrip(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("id,frame,label\n1,2,car\n1,0,bus\n1,1,bus\n0,0,person\n")
    labels = read_labels(p)
    assert labels == {0: ["person"], 1: ["bus", "bus", "car"]}
    write_track_labels(tmp_path / "out.csv", labels)
    assert (tmp_path / "out.csv").read_text() == "id,label,samples\n0,person,1\n1,bus,3\n"


@pytest.mark.parametrize("p", [0.6, 0.7, 0.8])
def test_vote_beats_per_sample(p):
    sample_acc, track_acc = vote_accuracy(p, 9, 1000, seed=1)
    assert abs(sample_acc - p) < 0.02
    assert track_acc > p
