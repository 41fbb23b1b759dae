"""End-to-end analysis: align, label, segment, summarise, write reports."""
from __future__ import annotations

import csv
import io
import json
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from . import SCHEMA_VERSION
from .alignment import DEFAULT_RANSAC_PX, Homography, align_images, infer_slice
from .density import classify, density_profile, strategy_metrics, windows_from_visits
from .errors import InputError
from .fovea import FovealModel
from .gaze_io import GazeRecording, parse_gaze_csv, parse_slice_trace
from .plot import density_svg
from .visits import aggregate, analyze_scenario, label_samples
from .volume_io import load_mask, load_volume

TABLE_COLUMNS = [
    "case", "reader", "scenario", "mean_s", "median_s", "max_s", "std_s", "total_s",
    "n_switches", "n_revisits", "coverage_pct", "schema_version",
]
DENSITY_COLUMNS = ["case", "scenario", "window_id", "slice", "density", "degenerate"]


@dataclass
class CaseInput:
    case: str
    gaze: str
    trace: str
    volume: str
    mask: str
    reader: str = ""
    homography: str | None = None
    scene: str | None = None
    scene_slice: int | None = None  # None: infer from the volume


@dataclass
class RunConfig:
    cases: list[CaseInput]
    out_dir: str = "out"
    theta: float = 1.5
    distance_cm: float = 60.0
    ppc: float = 38.4
    scale: float = 0.2667
    jump_k: float = 1.0
    ransac_px: float = DEFAULT_RANSAC_PX
    seed: int = 0
    scenarios: tuple[int, ...] = (1, 2)
    bandwidth: float | None = None
    windows: list[tuple[float, float]] | None = None
    coverage_point_only: bool = False
    classify_threshold: float | None = None
    jobs: int = 1
    svg: bool = True

    @property
    def fov(self) -> FovealModel:
        return FovealModel(self.theta, self.distance_cm, self.ppc, self.scale)

    def validate(self) -> None:
        self.fov  # range checks
        if self.jump_k < 0:
            raise InputError(f"jump-k must be non-negative, got {self.jump_k}")
        if not self.ransac_px > 0:
            raise InputError(f"ransac threshold must be positive, got {self.ransac_px}")
        if not self.scenarios or any(s not in (1, 2) for s in self.scenarios):
            raise InputError(f"scenarios must be drawn from (1, 2), got {self.scenarios}")
        if not self.cases:
            raise InputError("no cases to analyze")
        for c in self.cases:
            for role in ("gaze", "trace", "volume", "mask", "homography", "scene"):
                p = getattr(c, role)
                if p is not None and not Path(p).exists():
                    raise InputError(f"case {c.case}: {role} file not found: {p}")
            if c.homography is None and c.scene is None:
                raise InputError(f"case {c.case}: need a homography file or a scene image")


def cases_from_manifest(path) -> list[CaseInput]:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
        out = []
        for entry in manifest["cases"]:
            f = entry["files"]
            out.append(CaseInput(
                case=entry["case"],
                reader=entry.get("reader", ""),
                gaze=str(path.parent / f["gaze"]),
                trace=str(path.parent / f["trace"]),
                volume=str(path.parent / f["volume"]),
                mask=str(path.parent / f["mask"]),
                homography=str(path.parent / f["homography"]) if f.get("homography") else None,
                scene=str(path.parent / f["scene"]) if f.get("scene") else None,
            ))
        return out
    except FileNotFoundError:
        raise InputError(f"{path}: manifest not found") from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed manifest ({exc})") from None


def read_gray(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise InputError(f"{path}: cannot read image (expected 8-bit PGM/PNG)")
    return img


def _homography_for(c: CaseInput, vol, cfg: RunConfig) -> tuple[Homography, int | None]:
    if c.homography is not None:
        try:
            data = json.loads(Path(c.homography).read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"{c.homography}: invalid JSON ({exc})") from None
        return Homography.from_json(data), None
    scene = read_gray(c.scene)
    if c.scene_slice is None:
        z, _, h = infer_slice(scene, vol, ransac_threshold=cfg.ransac_px, seed=cfg.seed)
        return h, z
    return align_images(vol.slice_image(c.scene_slice), scene, cfg.ransac_px, cfg.seed), c.scene_slice


def analyze_case(c: CaseInput, cfg: RunConfig) -> dict:
    """Run one case; returns a JSON-able result plus rendered density artefacts."""
    vol = load_volume(c.volume)
    mask = load_mask(c.mask, vol)
    samples = parse_gaze_csv(c.gaze)
    trace = parse_slice_trace(c.trace, vol.nz)
    rec = GazeRecording(samples, trace, reader=c.reader, case=c.case)
    h, aligned_slice = _homography_for(c, vol, cfg)
    fov = cfg.fov
    labeled = label_samples(rec, mask, h, fov)

    result = {
        "schema_version": SCHEMA_VERSION,
        "case": c.case,
        "reader": c.reader,
        "n_samples": len(labeled),
        "n_in_image": int(labeled.in_image.sum()),
        "homography": h.to_json() | ({"slice": aligned_slice} if aligned_slice is not None else {}),
        "parameters": {
            "theta_deg": fov.theta,
            "distance_cm": fov.dist,
            "ppc": fov.ppc,
            "scale": fov.scale,
            "r_screen_px": fov.r_screen,
            "r_image_px": fov.r_image,
            "jump_k": cfg.jump_k,
            "coverage_point_only": cfg.coverage_point_only,
        },
        "scenarios": {},
    }
    density_rows = []
    svgs = {}
    nx = vol.dims[0]
    for s in cfg.scenarios:
        res = analyze_scenario(labeled, mask, fov, s, cfg.jump_k, cfg.coverage_point_only)
        thr = res.threshold
        entry = {
            "n_qualifying": res.n_qualifying,
            "threshold": None if thr is None else {"mu": thr.mu, "sigma": thr.sigma, "k": thr.k, "tau": thr.tau},
            "stats": res.stats.to_dict(),
            "visits": [
                {"start_t": v.start_t, "end_t": v.end_t, "duration": v.duration,
                 "n_samples": v.n_samples, "slices": sorted(v.slices)}
                for v in res.visits
            ],
            "strategy": None,
        }
        try:
            sm = strategy_metrics(res.visits, res.qualifying, nx, vol.nz)
            entry["strategy"] = sm.to_dict()
            if cfg.classify_threshold is not None:
                entry["strategy"]["label"] = classify(sm, cfg.classify_threshold)
        except InputError:
            pass
        windows = cfg.windows if cfg.windows is not None else windows_from_visits(res.visits)
        profiles = density_profile(res.qualifying, windows, cfg.bandwidth, vol.nz)
        entry["density_windows"] = [
            {"window_id": i, "t_start": p.window[0], "t_end": p.window[1], "duration": p.duration,
             "n_samples": p.n_samples, "degenerate": p.degenerate, "empty": p.empty, "bandwidth": p.bandwidth}
            for i, p in enumerate(profiles)
        ]
        for i, p in enumerate(profiles):
            for z, d in zip(p.slice_axis, p.density):
                density_rows.append([c.case, s, i, int(z), float(d), int(p.degenerate)])
        if cfg.svg:
            svgs[s] = density_svg(profiles, f"{c.case} ({c.reader or 'reader'}) scenario {s}", vol.nz)
        result["scenarios"][str(s)] = entry
    return {"result": result, "density_rows": density_rows, "svgs": svgs}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_rows(results: list[dict]) -> list[list[str]]:
    rows = []
    for r in results:
        for s, entry in r["scenarios"].items():
            st = entry["stats"]
            rows.append([_cell(x) for x in (
                r["case"], r["reader"], int(s), st["mean_s"], st["median_s"], st["max_s"], st["std_s"],
                st["total_s"], st["n_switches"], st["n_revisits"], st["coverage_pct"], SCHEMA_VERSION,
            )])
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[_cell(x) for x in row] for row in rows])
    return buf.getvalue()


def _run_one(args):
    c, cfg = args
    return analyze_case(c, cfg)


def run_analyze(cfg: RunConfig) -> dict:
    """Analyze every case and write per-case JSON, ``table.csv``, density CSVs and SVGs.

    Outputs appear only if every case succeeds.
    """
    cfg.validate()
    names = [c.case for c in cfg.cases]
    if len(set(names)) != len(names):
        raise InputError("case names must be unique")
    if cfg.jobs > 1 and len(cfg.cases) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outs = list(pool.map(_run_one, [(c, cfg) for c in cfg.cases]))
    else:
        outs = [analyze_case(c, cfg) for c in cfg.cases]

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    written = []
    try:
        for o in outs:
            r = o["result"]
            name = r["case"]
            (stage / f"{name}.json").write_text(json.dumps(r, indent=2) + "\n")
            (stage / f"{name}_density.csv").write_text(_csv_text(DENSITY_COLUMNS, o["density_rows"]))
            for s, svg in o["svgs"].items():
                (stage / f"{name}_s{s}.svg").write_text(svg)
        (stage / "table.csv").write_text(_csv_text(TABLE_COLUMNS, table_rows([o["result"] for o in outs])))
        for p in sorted(stage.iterdir()):
            dest = out_dir / p.name
            p.replace(dest)
            written.append(str(dest))
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return {"results": [o["result"] for o in outs], "files": written}


def _load_stats(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"{path}: stats file not found") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed stats file ({exc})") from None
    if not isinstance(data, dict) or not isinstance(data.get("scenarios"), dict):
        raise InputError(f"{path}: malformed stats file (missing 'scenarios')")
    for s, entry in data["scenarios"].items():
        stats = entry.get("stats") if isinstance(entry, dict) else None
        if not isinstance(stats, dict) or "n_switches" not in stats:
            raise InputError(f"{path}: scenario {s} lacks a stats block with n_switches")
        for key in ("mean_s", "median_s", "n_switches"):
            v = stats.get(key)
            if v is not None and not isinstance(v, (int, float)):
                raise InputError(f"{path}: scenario {s} field {key} is not numeric")
    return data


def run_report(paths) -> dict:
    """Aggregate per-case stats files into mean-of-means / mean-of-medians / mean N per reader and scenario."""
    paths = list(paths)
    if not paths:
        raise InputError("report needs at least one stats file")
    groups: dict[str, dict[str, list]] = {}
    for p in paths:
        data = _load_stats(p)
        reader = str(data.get("reader", ""))
        for s, entry in data["scenarios"].items():
            groups.setdefault(reader, {}).setdefault(str(s), []).append((data.get("case"), entry["stats"]))
    out = {"schema_version": SCHEMA_VERSION, "readers": {}}
    for reader in sorted(groups):
        out["readers"][reader] = {}
        for s in sorted(groups[reader]):
            rows = groups[reader][s]
            agg = aggregate([st for _, st in rows])
            agg["cases"] = [c for c, _ in rows]
            out["readers"][reader][s] = agg
    return out
