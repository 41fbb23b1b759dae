import numpy as np
import pytest

from gazevol.errors import InputError
from gazevol.gaze_io import (
    GazeRecording, GazeSample, SliceTrace, parse_gaze_csv, parse_slice_trace, slice_at,
    write_gaze_csv, write_slice_trace,
)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_two_samples(tmp_path):
    s = parse_gaze_csv(_write(tmp_path, "g.csv", "t,x,y\n0.0,100,200\n0.01,101,201"))
    assert s == [GazeSample(0.0, 100.0, 200.0), GazeSample(0.01, 101.0, 201.0)]


def test_nan_reports_row(tmp_path):
    p = _write(tmp_path, "g.csv", "t,x,y\n0.0,100,200\n0.01,NaN,201\n")
    with pytest.raises(InputError, match="row 2"):
        parse_gaze_csv(p)


def test_missing_column(tmp_path):
    with pytest.raises(InputError, match="missing column"):
        parse_gaze_csv(_write(tmp_path, "g.csv", "t,x\n0,1\n"))


def test_non_numeric(tmp_path):
    with pytest.raises(InputError, match="row 1.*not numeric"):
        parse_gaze_csv(_write(tmp_path, "g.csv", "t,x,y\n0,abc,1\n"))


def test_decreasing_timestamps(tmp_path):
    with pytest.raises(InputError, match="row 3.*decreases"):
        parse_gaze_csv(_write(tmp_path, "g.csv", "t,x,y\n0,1,1\n1,1,1\n0.5,1,1\n"))


def test_duplicate_timestamps_kept_in_order(tmp_path):
    s = parse_gaze_csv(_write(tmp_path, "g.csv", "t,x,y,frame_id\n0,1,1,3\n0,2,2,\n"))
    assert [x.x for x in s] == [1.0, 2.0]
    assert [x.frame_id for x in s] == [3, None]


def test_round_trip_10000(tmp_path, rng):
    t = np.cumsum(rng.random(10_000) * 0.01)
    samples = [GazeSample(float(a), float(b), float(c)) for a, b, c in zip(t, rng.normal(900, 300, 10_000), rng.normal(500, 200, 10_000))]
    write_gaze_csv(tmp_path / "g.csv", samples)
    assert parse_gaze_csv(tmp_path / "g.csv") == samples


def test_trace_three_events(tmp_path):
    tr = parse_slice_trace(_write(tmp_path, "t.csv", "t,z\n0.0,0\n1.5,1\n2.0,0"), nz=2)
    assert tr.events == [(0.0, 0), (1.5, 1), (2.0, 0)]


@pytest.mark.parametrize("text,msg", [
    ("t,z\n0.5,0\n", r"no slice defined on \[0, 0.5\)"),
    ("t,z\n0,98\n", "out of range"),
    ("t,z\n0,1\n1,2\n1,3\n", "not after"),
    ("t,z\n", "no trace events"),
    ("t,z\n0,1.5\n", "not an integer"),
])
def test_trace_errors(tmp_path, text, msg):
    with pytest.raises(InputError, match=msg):
        parse_slice_trace(_write(tmp_path, "t.csv", text), nz=98)


def test_trace_empty_file(tmp_path):
    with pytest.raises(InputError, match="empty"):
        parse_slice_trace(_write(tmp_path, "t.csv", ""), nz=4)


def test_trace_round_trip(tmp_path):
    tr = SliceTrace(np.array([0.0, 0.1, 2.5]), np.array([3, 4, 1]))
    write_slice_trace(tmp_path / "t.csv", tr)
    assert parse_slice_trace(tmp_path / "t.csv", 5).events == tr.events


def test_slice_at_examples():
    assert slice_at(SliceTrace(np.array([0.0]), np.array([5])), 100.0) == 5
    tr = SliceTrace(np.array([0.0, 1.5]), np.array([0, 1]))
    assert slice_at(tr, 1.5) == 1
    assert slice_at(tr, np.nextafter(1.5, 0)) == 0


def _slice_oracle(events, t):
    z = None
    for et, ez in events:
        if et <= t:
            z = ez
        else:
            break
    return z


def test_slice_at_vs_linear_scan(rng):
    times = np.concatenate([[0.0], np.sort(rng.choice(np.arange(1, 5000), 60, replace=False)) / 100.0])
    tr = SliceTrace(times, rng.integers(0, 98, times.size))
    # include exact event times to exercise the boundary rule
    q = np.concatenate([rng.random(1000) * 55.0, times])
    got = slice_at(tr, q)
    assert [int(g) for g in got] == [_slice_oracle(tr.events, float(x)) for x in q]


def test_recording_rejects_unordered():
    tr = SliceTrace(np.array([0.0]), np.array([0]))
    with pytest.raises(InputError):
        GazeRecording([GazeSample(1, 0, 0), GazeSample(0.5, 0, 0)], tr)
