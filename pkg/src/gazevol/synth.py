"""Synthetic reading sessions with exactly known ground truth.

A session is a CT-like volume with an ellipsoidal organ mask, a slice
navigation trace and scene-frame gaze samples. Every planted visit is a run
of peripheral lead-in samples, an organ-directed core and a peripheral
lead-out, separated by gaze elsewhere on the slice. Gaze points are placed on
pixels chosen with distance margins so that truncated scene noise cannot
change their scenario label; the ground truth is then recomputed from the
final noisy points with a KD-tree, independently of the analysis code.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import SCHEMA_VERSION
from .alignment import Homography, to_uint8
from .errors import InputError, InvariantError
from .fovea import FovealModel
from .gaze_io import GazeRecording, GazeSample, SliceTrace, write_gaze_csv, write_slice_trace
from .volume_io import SegMask, Volume, save_volume

ARCHETYPES = ("driller", "scanner", "hybrid")
ON, PERIPHERAL, AWAY = 0, 1, 2


@dataclass(frozen=True)
class VisitPlan:
    kind: str  # "drill" or "scan"
    duration: float  # core duration in seconds (scan: per-slice dwell is derived)
    slices: tuple[int, ...] | None = None  # scan: slices to raster; drill: (first, last) sweep range
    gap_before: float = 2.0  # away time preceding the visit, seconds
    lead_samples: int = 8


@dataclass
class SynthSpec:
    archetype: str = "driller"
    seed: int = 0
    dims: tuple[int, int, int] = (256, 256, 40)
    organ_center: tuple[float, float, float] | None = None
    organ_radii: tuple[float, float, float] | None = None
    visit_plan: list[VisitPlan] | None = None
    n_visits: int | None = None
    noise_sigma: float = 1.0  # scene px, truncated at 3 sigma
    display_scale: float = 1.5
    display_offset: tuple[float, float] = (700.0, 200.0)
    screen: tuple[int, int] = (1920, 1080)
    fov: FovealModel = field(default_factory=FovealModel)
    dt: float = 1.0 / 128.0
    drill_rate: float = 10.0  # slices / s
    drill_jitter: float = 5.0  # image px
    scan_rate: float = 0.5  # slices / s
    full_coverage: bool = False
    reader: str = "synthetic"
    case: str = "case"

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise InputError(f"archetype must be one of {ARCHETYPES}, got {self.archetype!r}")
        nx, ny, nz = self.dims
        if self.organ_center is None:
            self.organ_center = (nx / 2 - 0.5, ny / 2 + 0.25, nz / 2 - 0.5)
        if self.organ_radii is None:
            self.organ_radii = (0.28 * nx, 0.2 * ny, 0.4 * nz)
        c, r = self.organ_center, self.organ_radii
        if any(c[i] - r[i] <= 0 or c[i] + r[i] >= self.dims[i] - 1 for i in range(3)):
            raise InputError("organ ellipsoid must lie strictly inside the volume")


@dataclass
class ScenarioTruth:
    visits: list[tuple[float, float, frozenset]]  # (start_t, end_t, slices)
    covered: np.ndarray  # (k, 3) unique (x, y, z) voxels, lexicographically sorted
    n_qualifying: int

    @property
    def covered_set(self) -> frozenset:
        return frozenset(map(tuple, self.covered.tolist()))

    @property
    def durations(self) -> list[float]:
        return [b - a for a, b, _ in self.visits]

    @property
    def n_revisits(self) -> int:
        total = 0
        for i, (_, _, sl) in enumerate(self.visits):
            earlier = set()
            for _, _, prev in self.visits[:i]:
                earlier.update(prev)
            total += sum(1 for z in sl if z in earlier)
        return total


@dataclass
class GroundTruth:
    archetype: str
    scenarios: dict[int, ScenarioTruth]
    n_mask_voxels: int

    def coverage_pct(self, scenario: int) -> float:
        return 100.0 * len(self.scenarios[scenario].covered) / self.n_mask_voxels

    def to_json(self, dims) -> dict:
        nx, ny, _ = dims
        out = {"archetype": self.archetype, "n_mask_voxels": self.n_mask_voxels, "scenarios": {}}
        for s, st in self.scenarios.items():
            out["scenarios"][str(s)] = {
                "n_qualifying": st.n_qualifying,
                "visits": [
                    {"start_t": a, "end_t": b, "duration": b - a, "slices": sorted(sl)} for a, b, sl in st.visits
                ],
                "n_switches": len(st.visits),
                "n_revisits": st.n_revisits,
                "coverage_pct": self.coverage_pct(s),
                "covered_voxels": np.sort(st.covered[:, 0] + nx * (st.covered[:, 1] + ny * st.covered[:, 2])).tolist(),
            }
        return out


@dataclass
class SynthCase:
    spec: SynthSpec
    volume: Volume
    mask: SegMask
    recording: GazeRecording
    homography: Homography
    truth: GroundTruth
    image_points: np.ndarray = field(repr=False)  # generator's own image-space gaze
    categories: np.ndarray = field(repr=False)


def _ellipsoid(dims, center, radii) -> np.ndarray:
    X, Y, Z = np.ogrid[: dims[0], : dims[1], : dims[2]]
    return ((X - center[0]) / radii[0]) ** 2 + ((Y - center[1]) / radii[1]) ** 2 + (
        (Z - center[2]) / radii[2]
    ) ** 2 <= 1.0


def _intensities(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Smooth noise plus hard-edged boxes spanning random slice ranges, so slices carry corners."""
    nx, ny, nz = mask.shape
    noise = rng.standard_normal(size=(nz, nx, ny), dtype=np.float32)
    for z in range(nz):
        noise[z] = cv2.GaussianBlur(noise[z], (0, 0), 2.0, borderType=cv2.BORDER_REFLECT)
    vol = np.moveaxis(ndimage.gaussian_filter1d(noise, 1.0, axis=0), 0, 2) * 300.0
    for _ in range(80):
        x0, y0 = int(rng.integers(0, nx - 8)), int(rng.integers(0, ny - 8))
        w, h = int(rng.integers(5, max(6, nx // 5))), int(rng.integers(5, max(6, ny // 5)))
        z0 = int(rng.integers(0, nz))
        z1 = min(nz, z0 + int(rng.integers(3, max(4, nz // 3))))
        vol[x0 : x0 + w, y0 : y0 + h, z0:z1] += rng.uniform(-250, 250)
    return (vol + 120.0 * mask).astype(np.float32)


class _Placer:
    """Snap proposed image points to pixels whose category survives the noise bound."""

    def __init__(self, mask: np.ndarray, r: float, bound: float):
        self.mask = mask
        self.nx, self.ny, self.nz = mask.shape
        self.r = r
        self.bound = bound
        self.m_in = bound + math.sqrt(0.5) + 0.25
        self.m_per_hi = r - bound - 0.25
        self.m_away = r + bound + 0.5
        if self.m_per_hi < self.m_in:
            raise InputError(f"foveal radius {r:.2f} px too small for noise bound {bound:.2f} px")
        self._inside: dict[int, np.ndarray] = {}
        self._outside: dict[int, np.ndarray] = {}
        self._near: dict[tuple[int, int], tuple[np.ndarray, bool]] = {}

    def _box(self, z: int):
        """Organ bounding box on slice ``z``, padded past every placement margin."""
        fg = self.mask[:, :, z]
        xs, ys = np.flatnonzero(fg.any(axis=1)), np.flatnonzero(fg.any(axis=0))
        pad = int(math.ceil(self.m_away)) + 2
        return (slice(max(xs[0] - pad, 0), min(xs[-1] + pad + 1, self.nx)),
                slice(max(ys[0] - pad, 0), min(ys[-1] + pad + 1, self.ny)))

    def inside(self, z: int) -> np.ndarray:
        if z not in self._inside:
            fg = self.mask[:, :, z]
            d = np.zeros(fg.shape)
            if fg.any():
                box = self._box(z)
                d[box] = ndimage.distance_transform_edt(fg[box])
            self._inside[z] = d
        return self._inside[z]

    def outside(self, z: int) -> np.ndarray:
        # Exact within the padded box; beyond it every pixel is farther than any margin.
        if z not in self._outside:
            fg = self.mask[:, :, z]
            d = np.full(fg.shape, np.inf)
            if fg.any():
                box = self._box(z)
                d[box] = ndimage.distance_transform_edt(~fg[box])
            self._outside[z] = d
        return self._outside[z]

    def candidates(self, z: int, cat: int) -> np.ndarray:
        fg = self.mask[:, :, z]
        if cat == ON:
            return fg & (self.inside(z) >= self.m_in)
        if cat == PERIPHERAL:
            return ~fg & (self.outside(z) >= self.m_in) & (self.outside(z) <= self.m_per_hi)
        return ~fg & (self.outside(z) >= self.m_away)

    def has(self, z: int, cat: int) -> bool:
        if (z, cat) in self._near:
            return self._near[(z, cat)][1]
        if cat == ON and not self.mask[:, :, z].any():
            return False
        return bool(self.candidates(z, cat).any())

    def _nearest(self, z: int, cat: int):
        key = (z, cat)
        if key not in self._near:
            cand = self.candidates(z, cat)
            if not cand.any():
                self._near[key] = (None, False)
            else:
                _, idx = ndimage.distance_transform_edt(~cand, return_indices=True)
                self._near[key] = (idx, True)
        return self._near[key]

    def snap(self, z: int, cat: int, proposal) -> tuple[int, int]:
        idx, ok = self._nearest(z, cat)
        if not ok:
            raise InputError(f"no valid gaze position of category {cat} on slice {z}")
        p = min(max(int(round(float(proposal[0]))), 0), self.nx - 1)
        q = min(max(int(round(float(proposal[1]))), 0), self.ny - 1)
        return int(idx[0, p, q]), int(idx[1, p, q])

    def raster_cover(self, z: int, radius: float) -> list[tuple[int, int]]:
        """Serpentine-ordered ON pixels whose radius-``radius`` disks cover the slice's mask."""
        fg = self.mask[:, :, z]
        cand = self.candidates(z, ON)
        if not cand.any():
            return []
        cx, cy = np.nonzero(cand)
        tree = cKDTree(np.column_stack([cx, cy]))
        uncovered = fg.copy()
        chosen = []
        for y in range(self.ny):
            xs = np.flatnonzero(uncovered[:, y])
            for x in xs:
                if not uncovered[x, y]:
                    continue
                d, i = tree.query([x, y])
                if d > radius:
                    raise InputError(f"mask pixel ({x}, {y}, {z}) cannot be covered by an organ-directed gaze")
                px, py = int(cx[i]), int(cy[i])
                chosen.append((px, py))
                k = int(math.ceil(radius))
                x0, x1 = max(px - k, 0), min(px + k + 1, self.nx)
                y0, y1 = max(py - k, 0), min(py + k + 1, self.ny)
                X, Y = np.ogrid[x0:x1, y0:y1]
                uncovered[x0:x1, y0:y1] &= (X - px) ** 2 + (Y - py) ** 2 > radius**2
        # serpentine by rows of 8 px
        rows: dict[int, list] = {}
        for p in chosen:
            rows.setdefault(p[1] // 8, []).append(p)
        ordered = []
        for k, r in enumerate(sorted(rows)):
            ordered.extend(sorted(rows[r], reverse=bool(k % 2)))
        return ordered


def _truncated_noise(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    out = rng.normal(0.0, sigma, size=(n, 2))
    if sigma <= 0:
        return np.zeros((n, 2))
    bad = np.hypot(out[:, 0], out[:, 1]) > 3 * sigma
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, size=(int(bad.sum()), 2))
        bad = np.hypot(out[:, 0], out[:, 1]) > 3 * sigma
    return out


def _organ_slices(placer: _Placer) -> list[int]:
    return [z for z in range(placer.nz) if placer.has(z, ON)]


def _default_plan(spec: SynthSpec, placer: _Placer, rng: np.random.Generator) -> list[VisitPlan]:
    organ = _organ_slices(placer)
    if not organ:
        raise InputError("organ has no slice with organ-directed gaze positions")
    if spec.full_coverage:
        fg_slices = [z for z in range(placer.nz) if placer.mask[:, :, z].any()]
        if fg_slices != organ:
            raise InputError("full coverage impossible: some organ slices are too thin")
        chunks = [tuple(organ[i : i + 3]) for i in range(0, len(organ), 3)]
        return [
            VisitPlan("scan", len(c) / spec.scan_rate, c, float(rng.uniform(2.0, 3.5)), int(rng.integers(6, 16)))
            for c in chunks
        ]
    n = spec.n_visits if spec.n_visits is not None else int(rng.integers(3, 6))
    lo = organ[0] + len(organ) // 5
    hi = organ[-1] - len(organ) // 5
    kinds = {
        "driller": ["drill"] * n,
        "scanner": ["scan"] * n,
        "hybrid": [("drill", "scan")[(i + int(rng.integers(2))) % 2] for i in range(n)],
    }[spec.archetype]
    plan = []
    for kind in kinds:
        gap = float(rng.uniform(2.0, 4.0))
        lead = int(rng.integers(6, 20))
        if kind == "drill":
            plan.append(VisitPlan("drill", float(rng.uniform(1.0, 2.5)), (lo, hi), gap, lead))
        else:
            m = int(rng.integers(1, 3))
            z0 = int(rng.integers(lo, hi - m + 2))
            sl = tuple(range(z0, z0 + m))
            plan.append(VisitPlan("scan", m / spec.scan_rate, sl, gap, lead))
    return plan


def _drill_slices(n: int, dt: float, rate: float, lo: int, hi: int, start: int, direction: int) -> list[int]:
    span = hi - lo
    out = []
    for i in range(n):
        steps = int(math.floor(rate * i * dt))
        if span == 0:
            out.append(lo)
            continue
        pos = (start - lo) + direction * steps
        pos %= 2 * span
        out.append(lo + (pos if pos <= span else 2 * span - pos))
    return out


def generate(spec: SynthSpec) -> SynthCase:
    """Build a synthetic session and its ground truth; deterministic given ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    dims = tuple(int(d) for d in spec.dims)
    mask_arr = _ellipsoid(dims, spec.organ_center, spec.organ_radii)
    voxels = _intensities(mask_arr, rng)
    volume = Volume(voxels, (1.0, 1.0, 1.0))
    mask = SegMask(mask_arr)
    r = spec.fov.r_image
    s = spec.display_scale
    bound = 3.0 * spec.noise_sigma / s
    placer = _Placer(mask_arr, r, bound)
    plan = spec.visit_plan if spec.visit_plan is not None else _default_plan(spec, placer, rng)

    h = np.array([[s, 0.0, spec.display_offset[0]], [0.0, s, spec.display_offset[1]], [0.0, 0.0, 1.0]])
    homography = Homography(h)
    organ = _organ_slices(placer)
    center_xy = (spec.organ_center[0], spec.organ_center[1])

    pix: list[tuple[int, int]] = []
    zs: list[int] = []
    cats: list[int] = []
    visit_of: list[int] = []

    def emit(z, cat, pts, vid):
        for p in pts:
            pix.append(p)
            zs.append(z)
            cats.append(cat)
            visit_of.append(vid)

    def away(n, z):
        if n <= 0:
            return
        anchor = np.array([rng.uniform(0, dims[0]), rng.uniform(0, dims[1])])
        anchor = np.array(placer.snap(z, AWAY, anchor), dtype=float)
        emit(z, AWAY, [placer.snap(z, AWAY, anchor + rng.normal(0, 4, 2)) for _ in range(n)], -1)

    dt = spec.dt
    current_z = organ[len(organ) // 2] if organ else 0
    for vid, vp in enumerate(plan):
        # visit slice path
        n_core = max(int(round(vp.duration / dt)), 2)
        if vp.kind == "drill":
            lo, hi = vp.slices if vp.slices is not None else (organ[0], organ[-1])
            start = int(rng.integers(lo, hi + 1))
            direction = 1 if rng.integers(2) else -1
            core_z = _drill_slices(n_core, dt, spec.drill_rate, lo, hi, start, direction)
        elif vp.kind == "scan":
            sl = list(vp.slices) if vp.slices is not None else [organ[len(organ) // 2]]
            per_slice = max(n_core // len(sl), 1)
            covers = {z: placer.raster_cover(z, r - bound - 0.25) for z in sl}
            core_z = []
            for z in sl:
                core_z.extend([z] * max(per_slice, 2 * len(covers[z])))
        else:
            raise InputError(f"unknown visit kind {vp.kind!r}")
        first_z, last_z = core_z[0], core_z[-1]
        away(int(round(vp.gap_before / dt)), current_z if vid else first_z)

        if vp.kind == "drill":
            anchor = np.array(placer.snap(core_z[len(core_z) // 2], ON, center_xy), dtype=float)
            anchor = anchor + rng.normal(0, 6, 2)
            core_pts = [placer.snap(z, ON, anchor + rng.normal(0, spec.drill_jitter, 2)) for z in core_z]
        else:
            core_pts = []
            for z in dict.fromkeys(core_z):
                n_z = core_z.count(z)
                cov = covers[z]
                core_pts.extend(cov[(i * len(cov)) // n_z] for i in range(n_z))
        lead_in = [placer.snap(first_z, PERIPHERAL, np.array(core_pts[0]) + rng.normal(0, 2, 2))
                   for _ in range(vp.lead_samples)]
        lead_out = [placer.snap(last_z, PERIPHERAL, np.array(core_pts[-1]) + rng.normal(0, 2, 2))
                    for _ in range(vp.lead_samples)]
        emit(first_z, PERIPHERAL, lead_in, vid)
        for z, p in zip(core_z, core_pts):
            emit(z, ON, [p], vid)
        emit(last_z, PERIPHERAL, lead_out, vid)
        current_z = last_z
    if plan:
        away(int(round(1.0 / dt)), current_z)

    n = len(pix)
    times = np.arange(n, dtype=np.float64) * dt
    pix_a = np.array(pix, dtype=np.float64).reshape(-1, 2)
    noise = _truncated_noise(rng, n, spec.noise_sigma)
    scene = pix_a * s + np.array(spec.display_offset) + noise
    image_pts = pix_a + noise / s
    w, hgt = spec.screen
    if n and (scene.min() < 0 or scene[:, 0].max() >= w or scene[:, 1].max() >= hgt):
        raise InputError("planned gaze path leaves the screen")
    zs_a = np.array(zs, dtype=np.int64)
    cats_a = np.array(cats, dtype=np.int64)

    if n:
        change = np.flatnonzero(np.diff(zs_a) != 0) + 1
        ev_t = np.concatenate([[0.0], times[change] - dt / 2])
        ev_z = np.concatenate([[zs_a[0]], zs_a[change]])
    else:
        ev_t, ev_z = np.array([0.0]), np.array([current_z])
    trace = SliceTrace(ev_t, ev_z)
    samples = [GazeSample(float(t), float(x), float(y)) for t, (x, y) in zip(times, scene)]
    rec = GazeRecording(samples, trace, reader=spec.reader, case=spec.case, screen=tuple(spec.screen))

    truth = _ground_truth(spec, mask_arr, image_pts, zs_a, cats_a, np.array(visit_of), times, r)
    return SynthCase(spec, volume, mask, rec, homography, truth, image_pts, cats_a)


def _ground_truth(spec, mask, pts, zs, cats, visit_of, times, r) -> GroundTruth:
    nx, ny, nz = mask.shape
    # independent label check: nearest foreground pixel by KD-tree per slice
    on = np.zeros(len(pts), dtype=bool)
    near = np.full(len(pts), np.inf)
    ub = r * (1 + 1e-9) + 1e-9  # only distances up to r matter; the bound prunes the search
    for z in np.unique(zs):
        sel = np.flatnonzero(zs == z)
        fx, fy = np.nonzero(mask[:, :, z])
        if fx.size:
            near[sel] = cKDTree(np.column_stack([fx, fy])).query(pts[sel], distance_upper_bound=ub)[0]
        px = np.floor(pts[sel] + 0.5).astype(int)
        inb = (px[:, 0] >= 0) & (px[:, 0] < nx) & (px[:, 1] >= 0) & (px[:, 1] < ny)
        on[sel[inb]] = mask[px[inb, 0], px[inb, 1], z]
    per = on | (near <= r)
    expected_on = cats == ON
    expected_per = cats != AWAY
    if not (np.array_equal(on, expected_on) and np.array_equal(per, expected_per)):
        raise InvariantError("planted gaze categories do not match their geometric labels")

    scenarios = {}
    for scen, qual in ((1, expected_on), (2, expected_per)):
        idx = np.flatnonzero(qual)
        visits = []
        for vid in dict.fromkeys(visit_of[idx].tolist()):
            vi = idx[visit_of[idx] == vid]
            visits.append((float(times[vi[0]]), float(times[vi[-1]]), frozenset(int(z) for z in zs[vi])))
        covered = []
        for z in np.unique(zs[idx]):
            q = pts[idx[zs[idx] == z]]
            fx, fy = np.nonzero(mask[:, :, z])
            if not fx.size:
                continue
            d = cKDTree(q).query(np.column_stack([fx, fy]), distance_upper_bound=ub)[0]
            hit = d <= r
            covered.append(np.column_stack([fx[hit], fy[hit], np.full(int(hit.sum()), z)]))
        if covered:
            c = np.concatenate(covered).astype(np.int64)
            flat = np.unique(np.ravel_multi_index((c[:, 0], c[:, 1], c[:, 2]), mask.shape))
            cov = np.column_stack(np.unravel_index(flat, mask.shape)).astype(np.int64)
        else:
            cov = np.zeros((0, 3), np.int64)
        cov.flags.writeable = False
        scenarios[scen] = ScenarioTruth(visits, cov, int(idx.size))
        _check_recoverable(times[idx], visits, scen)
    return GroundTruth(spec.archetype, scenarios, int(mask.sum()))


def _check_recoverable(t: np.ndarray, visits, scenario: int) -> None:
    """Planted grouping must be what the jump threshold recovers for every k in [0, 3]."""
    if t.size < 2 or len(visits) < 2:
        return
    gaps = np.diff(t)
    mu, sd = gaps.mean(), gaps.std()
    starts = {v[0] for v in visits}
    inter = np.array([t[i + 1] in starts for i in range(t.size - 1)])
    if gaps[~inter].max(initial=0.0) > mu or gaps[inter].min() <= mu + 3 * sd:
        raise InputError(f"visit plan is not recoverable in scenario {scenario}: gaps too close to the threshold")


def scene_image(case: SynthCase, z: int | None = None) -> np.ndarray:
    """Render slice ``z`` (default: mid-organ) into the scene frame as an 8-bit image."""
    if z is None:
        zz = np.flatnonzero(case.mask.labels.any(axis=(0, 1)))
        z = int(zz[len(zz) // 2])
    img = to_uint8(case.volume.slice_image(z))
    w, h = case.spec.screen
    return cv2.warpPerspective(img, case.homography.h, (w, h), flags=cv2.INTER_LINEAR)


def write_session(out_dir, case: SynthCase, scene: bool = True) -> dict[str, str]:
    """Write the case in the on-disk formats the analysis reads. Returns file paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = case.spec.case
    paths = {
        "gaze": out / f"{name}_gaze.csv",
        "trace": out / f"{name}_trace.csv",
        "volume": out / f"{name}_volume.json",
        "mask": out / f"{name}_mask.json",
        "homography": out / f"{name}_homography.json",
        "truth": out / f"{name}_truth.json",
    }
    write_gaze_csv(paths["gaze"], case.recording.samples)
    write_slice_trace(paths["trace"], case.recording.trace)
    save_volume(paths["volume"], case.volume.voxels, case.volume.spacing, "f32")
    save_volume(paths["mask"], case.mask.labels.astype(np.uint8), case.volume.spacing, "u8")
    paths["homography"].write_text(json.dumps(case.homography.to_json(), indent=2) + "\n")
    paths["truth"].write_text(json.dumps(case.truth.to_json(case.volume.dims)) + "\n")
    if scene:
        paths["scene"] = out / f"{name}_scene.png"
        cv2.imwrite(str(paths["scene"]), scene_image(case))
    return {k: str(v) for k, v in paths.items()}


def case_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def generate_batch(out_dir, archetype: str, seed: int, n_cases: int, reader: str = "synthetic", **kw) -> dict:
    """Generate ``n_cases`` sessions, write them, and write ``manifest.json``."""
    out = Path(out_dir)
    cases = []
    for i, cs in enumerate(case_seeds(seed, n_cases)):
        arch = archetype if archetype != "mixed" else ARCHETYPES[i % 3]
        spec = SynthSpec(archetype=arch, seed=cs, case=f"case{i + 1:02d}", reader=reader, **kw)
        case = generate(spec)
        files = write_session(out, case)
        cases.append({
            "case": spec.case,
            "reader": reader,
            "archetype": arch,
            "seed": cs,
            "files": {k: Path(v).name for k, v in files.items()},
            "truth": {
                str(s): {
                    "n_switches": len(t.visits),
                    "n_revisits": t.n_revisits,
                    "total_s": float(sum(t.durations)),
                    "coverage_pct": case.truth.coverage_pct(s),
                }
                for s, t in case.truth.scenarios.items()
            },
        })
    manifest = {"schema_version": SCHEMA_VERSION, "seed": seed, "cases": cases}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
