"""Gaze sample and slice-navigation CSV parsing."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class GazeSample:
    t: float
    x: float
    y: float
    frame_id: int | None = None


@dataclass(frozen=True)
class SliceTrace:
    """Step function of the displayed slice: from ``times[i]`` on, slice ``slices[i]`` is shown."""

    times: np.ndarray
    slices: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        slices = np.asarray(self.slices, dtype=np.int64)
        if times.ndim != 1 or times.shape != slices.shape or times.size == 0:
            raise InputError("slice trace needs at least one (t, z) event")
        if times[0] != 0.0:
            raise InputError(f"first trace event is at t={times[0]}; no slice defined on [0, {times[0]})")
        if np.any(np.diff(times) <= 0):
            raise InputError("trace event times must be strictly increasing")
        if np.any(slices < 0):
            raise InputError("negative slice index in trace")
        times.flags.writeable = False
        slices.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "slices", slices)

    @property
    def events(self) -> list[tuple[float, int]]:
        return [(float(t), int(z)) for t, z in zip(self.times, self.slices)]


def slice_at(trace: SliceTrace, t):
    """Slice displayed at time ``t`` (scalar or array). At an event time the new slice applies."""
    idx = np.searchsorted(trace.times, t, side="right") - 1
    if np.any(idx < 0):
        raise InputError("time before session start")
    out = trace.slices[idx]
    return int(out) if np.ndim(out) == 0 else out


@dataclass
class GazeRecording:
    samples: list[GazeSample]
    trace: SliceTrace
    reader: str = ""
    case: str = ""
    screen: tuple[int, int] = (1920, 1080)
    _arrays: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        t = self.times
        if t.size and np.any(np.diff(t) < 0):
            raise InputError("gaze samples must be time-ordered")

    def _cols(self) -> dict:
        if self._arrays is None:
            n = len(self.samples)
            self._arrays = {
                "t": np.fromiter((s.t for s in self.samples), float, n),
                "x": np.fromiter((s.x for s in self.samples), float, n),
                "y": np.fromiter((s.y for s in self.samples), float, n),
            }
        return self._arrays

    @property
    def times(self) -> np.ndarray:
        return self._cols()["t"]

    @property
    def xy(self) -> np.ndarray:
        c = self._cols()
        return np.column_stack([c["x"], c["y"]])


def _read_rows(path, required: tuple[str, ...]):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        fields = [f.strip() for f in reader.fieldnames]
        missing = [c for c in required if c not in fields]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = fields
        yield from enumerate(reader, start=1)


def _number(path, row: int, name: str, text) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise InputError(f"{path}: row {row}: column {name!r} is not numeric ({text!r})") from None
    if not math.isfinite(value):
        raise InputError(f"{path}: row {row}: column {name!r} is not finite ({text!r})")
    return value


def parse_gaze_csv(path) -> list[GazeSample]:
    """Parse a gaze CSV with columns ``t, x, y`` and optional ``frame_id``.

    Rows are numbered from 1 (first data row) in diagnostics.
    """
    samples: list[GazeSample] = []
    last_t = -math.inf
    for row, rec in _read_rows(path, ("t", "x", "y")):
        t = _number(path, row, "t", rec["t"])
        x = _number(path, row, "x", rec["x"])
        y = _number(path, row, "y", rec["y"])
        if t < 0:
            raise InputError(f"{path}: row {row}: negative timestamp {t}")
        if t < last_t:
            raise InputError(f"{path}: row {row}: timestamp {t} decreases (previous {last_t})")
        frame = rec.get("frame_id")
        frame_id = int(_number(path, row, "frame_id", frame)) if frame not in (None, "") else None
        samples.append(GazeSample(t, x, y, frame_id))
        last_t = t
    return samples


def parse_slice_trace(path, nz: int) -> SliceTrace:
    times, slices = [], []
    for row, rec in _read_rows(path, ("t", "z")):
        t = _number(path, row, "t", rec["t"])
        zf = _number(path, row, "z", rec["z"])
        if zf != int(zf):
            raise InputError(f"{path}: row {row}: slice index {rec['z']!r} is not an integer")
        z = int(zf)
        if not 0 <= z < nz:
            raise InputError(f"{path}: row {row}: slice {z} out of range [0, {nz})")
        if times and t <= times[-1]:
            raise InputError(f"{path}: row {row}: event time {t} is not after {times[-1]}")
        times.append(t)
        slices.append(z)
    if not times:
        raise InputError(f"{path}: no trace events")
    try:
        return SliceTrace(np.array(times), np.array(slices))
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_gaze_csv(path, samples: list[GazeSample]) -> None:
    with_frames = any(s.frame_id is not None for s in samples)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "frame_id"] if with_frames else ["t", "x", "y"])
        for s in samples:
            row = [repr(float(s.t)), repr(float(s.x)), repr(float(s.y))]
            if with_frames:
                row.append("" if s.frame_id is None else str(s.frame_id))
            w.writerow(row)


def write_slice_trace(path, trace: SliceTrace) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "z"])
        for t, z in trace.events:
            w.writerow([repr(t), z])
