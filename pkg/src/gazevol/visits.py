"""Scenario labelling, visit segmentation and per-session visit statistics.

Scenario 1 ("organ only") keeps samples whose gaze pixel lies on the mask.
Scenario 2 ("organ + peripheral") also keeps samples whose foveal disk
touches the mask on the displayed slice; it is always a superset of 1.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .alignment import Homography, map_points
from .errors import InputError
from .fovea import FovealModel, disk_offsets
from .gaze_io import GazeRecording, slice_at
from .volume_io import SegMask

SCENARIOS = (1, 2)
# Gaps must exceed tau by more than float rounding to split; regular sampling
# otherwise yields spurious 1-ulp splits.
GAP_EPS = 1e-9


@dataclass(frozen=True)
class Labeled:
    """Per-sample arrays: time, image point, displayed slice and scenario flags."""

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    on_organ: np.ndarray
    peripheral: np.ndarray
    in_image: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def take(self, idx) -> "Labeled":
        return Labeled(*(np.asarray(getattr(self, f))[idx] for f in self.__dataclass_fields__))

    def qualifying(self, scenario: int) -> np.ndarray:
        if scenario == 1:
            return self.on_organ
        if scenario == 2:
            return self.peripheral
        raise InputError(f"scenario must be 1 or 2, got {scenario}")

    def select(self, scenario: int) -> "Labeled":
        return self.take(np.flatnonzero(self.qualifying(scenario)))


@dataclass(frozen=True)
class JumpThreshold:
    mu: float
    sigma: float
    k: float

    @property
    def tau(self) -> float:
        return self.mu + self.k * self.sigma


@dataclass(frozen=True)
class Visit:
    start_t: float
    end_t: float
    start: int  # index range [start, stop) into the qualifying samples
    stop: int
    slices: frozenset = field(default_factory=frozenset)

    @property
    def duration(self) -> float:
        return self.end_t - self.start_t

    @property
    def n_samples(self) -> int:
        return self.stop - self.start


@dataclass
class SessionStats:
    mean_s: float | None
    median_s: float | None
    max_s: float | None
    std_s: float | None
    total_s: float
    n_switches: int
    n_revisits: int
    coverage_pct: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _disk_hits(mask_xyz: np.ndarray, u, v, z, r: float):
    """Pixel indices of each sample's foveal disk, with a validity flag per (sample, offset)."""
    nx, ny, _ = mask_xyz.shape
    off = disk_offsets(r)
    bu = np.floor(u).astype(np.int64)
    bv = np.floor(v).astype(np.int64)
    px = bu[:, None] + off[None, :, 0]
    py = bv[:, None] + off[None, :, 1]
    d2 = (px - u[:, None]) ** 2 + (py - v[:, None]) ** 2
    ok = (d2 <= r * r) & (px >= 0) & (px < nx) & (py >= 0) & (py < ny)
    zz = np.broadcast_to(z[:, None], px.shape)
    return np.where(ok, px, 0), np.where(ok, py, 0), zz, ok


def label_points(u, v, z, mask: SegMask, r: float, chunk: int = 4096):
    """Return (on_organ, peripheral, in_image) for image points on given slices."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    z = np.asarray(z, dtype=np.int64)
    lab = mask.labels
    nx, ny, nz = lab.shape
    if np.any((z < 0) | (z >= nz)):
        raise InputError(f"displayed slice outside mask range [0, {nz})")
    pu = np.floor(u + 0.5).astype(np.int64)
    pv = np.floor(v + 0.5).astype(np.int64)
    in_image = (pu >= 0) & (pu < nx) & (pv >= 0) & (pv < ny)
    on = np.zeros(len(u), dtype=bool)
    on[in_image] = lab[pu[in_image], pv[in_image], z[in_image]]
    per = on.copy()
    for s in range(0, len(u), chunk):
        sl = slice(s, s + chunk)
        px, py, zz, ok = _disk_hits(lab, u[sl], v[sl], z[sl], r)
        per[sl] |= (lab[px, py, zz] & ok).any(axis=1)
    # Off-image gaze is not organ-directed even if the disk grazes the image edge.
    on &= in_image
    per &= in_image
    return on, per, in_image


def label_samples(rec: GazeRecording, mask: SegMask, h: Homography, fov: FovealModel) -> Labeled:
    """Map every sample into the image, attach its displayed slice and scenario flags."""
    t = rec.times
    if len(t) == 0:
        e = np.zeros(0)
        return Labeled(e, e, e, e.astype(np.int64), e.astype(bool), e.astype(bool), e.astype(bool))
    uv = map_points(h, rec.xy)
    z = np.asarray(slice_at(rec.trace, t), dtype=np.int64).reshape(-1)
    on, per, inside = label_points(uv[:, 0], uv[:, 1], z, mask, fov.r_image)
    return Labeled(t, uv[:, 0], uv[:, 1], z, on, per, inside)


def compute_threshold(times, k: float = 1.0) -> JumpThreshold:
    """Jump threshold ``mean(dt) + k * std(dt)`` over consecutive gaps (population std)."""
    t = np.asarray(times, dtype=np.float64)
    if t.size < 2:
        raise InputError("need at least 2 timestamps to compute a jump threshold")
    gaps = np.diff(t)
    return JumpThreshold(float(gaps.mean()), float(gaps.std()), float(k))


def segment_visits(times, tau: float, slices=None) -> list[Visit]:
    """Split time-ordered samples into visits wherever the gap exceeds ``tau`` (strictly).

    Gaps within ``GAP_EPS`` seconds of ``tau`` count as equal and do not split.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.size == 0:
        return []
    z = np.zeros(t.size, dtype=np.int64) if slices is None else np.asarray(slices)
    cuts = np.flatnonzero(np.diff(t) > tau + GAP_EPS) + 1
    bounds = np.concatenate([[0], cuts, [t.size]])
    return [
        Visit(float(t[a]), float(t[b - 1]), int(a), int(b),
              frozenset(int(s) for s in np.unique(z[a:b])) if slices is not None else frozenset())
        for a, b in zip(bounds[:-1], bounds[1:])
    ]


def count_revisits(visits: list[Visit]) -> int:
    """Slices of each visit that were already seen in an earlier visit, summed over visits."""
    seen: set[int] = set()
    nr = 0
    for v in visits:
        nr += len(v.slices & seen)
        seen |= v.slices
    return nr


def visit_stats(visits: list[Visit]) -> SessionStats:
    if not visits:
        raise InputError("visit statistics need at least one visit")
    d = np.array([v.duration for v in visits], dtype=np.float64)
    return SessionStats(
        mean_s=float(d.mean()),
        median_s=float(np.median(d)),
        max_s=float(d.max()),
        std_s=float(d.std()),
        total_s=float(d.sum()),
        n_switches=len(visits),
        n_revisits=count_revisits(visits),
    )


def covered_voxels(labeled: Labeled, mask: SegMask, r: float, point_only: bool = False) -> np.ndarray:
    """Boolean (nx, ny, nz) array of mask voxels touched by the samples' disks."""
    lab = mask.labels
    covered = np.zeros(lab.shape, dtype=bool)
    if len(labeled) == 0:
        return covered
    keep = labeled.in_image
    u, v, z = labeled.u[keep], labeled.v[keep], labeled.z[keep]
    if point_only:
        covered[np.floor(u + 0.5).astype(np.int64), np.floor(v + 0.5).astype(np.int64), z] = True
    else:
        px, py, zz, ok = _disk_hits(lab, u, v, z, r)
        covered[px[ok], py[ok], zz[ok]] = True
    return covered & lab


def coverage(labeled: Labeled, mask: SegMask, fov: FovealModel, scenario: int, point_only: bool = False) -> float:
    """Percent of mask voxels covered by qualifying samples of ``scenario``.

    ``point_only`` (scenario 1 only) counts the gaze pixel alone instead of the disk.
    """
    total = mask.n_foreground
    if total == 0:
        raise InputError("coverage is undefined for an empty mask")
    q = labeled.select(scenario)
    hit = covered_voxels(q, mask, fov.r_image, point_only=point_only and scenario == 1)
    return 100.0 * int(hit.sum()) / total


def aggregate(rows: list) -> dict:
    """Mean of means, mean of medians and mean switch count across cases."""
    if not rows:
        raise InputError("aggregate needs at least one row")

    def field_of(row, name):
        value = row.get(name) if isinstance(row, dict) else getattr(row, name)
        return None if value is None else float(value)

    out = {}
    for key, name in (("mean_of_means", "mean_s"), ("mean_of_medians", "median_s"), ("mean_n_switches", "n_switches")):
        vals = [x for x in (field_of(r, name) for r in rows) if x is not None]
        out[key] = float(np.mean(vals)) if vals else None
    out["n_cases"] = len(rows)
    return out


@dataclass
class ScenarioResult:
    scenario: int
    n_qualifying: int
    threshold: JumpThreshold | None
    visits: list[Visit]
    stats: SessionStats
    qualifying: Labeled = field(repr=False)


def analyze_scenario(
    labeled: Labeled,
    mask: SegMask,
    fov: FovealModel,
    scenario: int,
    k: float = 1.0,
    point_only: bool = False,
) -> ScenarioResult:
    q = labeled.select(scenario)
    thr = compute_threshold(q.t, k) if len(q) >= 2 else None
    tau = thr.tau if thr is not None else math.inf
    visits = segment_visits(q.t, tau, q.z)
    if visits:
        stats = visit_stats(visits)
    else:
        stats = SessionStats(None, None, None, None, 0.0, 0, 0)
    stats.coverage_pct = coverage(labeled, mask, fov, scenario, point_only)
    return ScenarioResult(scenario, len(q), thr, visits, stats, q)
