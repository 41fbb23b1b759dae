"""Shared fixtures: textured test images and bounded random projective warps."""
import cv2
import numpy as np

CORNERS_512 = np.array([[0, 0], [511, 0], [511, 511], [0, 511]], dtype=np.float64)


def textured_image(rng, n=512, boxes=300):
    """Overlapping flat boxes with slightly softened edges, uint8."""
    img = np.full((n, n), 128, np.float32)
    for _ in range(boxes):
        x, y = rng.integers(0, n, 2)
        w, h = rng.integers(max(3, n // 85), max(6, n // 8), 2)
        img[y:y + h, x:x + w] = rng.integers(0, 256)
    img = cv2.GaussianBlur(img, (0, 0), 1.0)
    return np.clip(img, 0, 255).astype(np.uint8)


def random_warp(rng, n=512, jitter=40.0):
    """Homography moving each image corner by up to ``jitter`` px."""
    c = np.array([[0, 0], [n - 1, 0], [n - 1, n - 1], [0, n - 1]], np.float32)
    d = (c + rng.uniform(-jitter, jitter, c.shape)).astype(np.float32)
    return cv2.getPerspectiveTransform(c, d).astype(np.float64)


def apply_h(h, pts):
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.T
    return q[:, :2] / q[:, 2:3]


def closure_mismatches(files, truth, result):
    """Compare an analysis result (and the voxel set it implies) with a synth ground truth.

    ``files`` are the written session paths; returns a list of human-readable mismatches.
    """
    from gazevol.alignment import Homography
    from gazevol.fovea import FovealModel
    from gazevol.gaze_io import GazeRecording, parse_gaze_csv, parse_slice_trace
    from gazevol.visits import covered_voxels, label_samples
    from gazevol.volume_io import load_mask, load_volume
    import json

    bad = []
    for s, st in truth.scenarios.items():
        got = result["scenarios"][str(s)]
        visits = got["visits"]
        if len(visits) != len(st.visits):
            bad.append(f"s{s}: N {len(visits)} != {len(st.visits)}")
            continue
        for i, (v, (a, b, sl)) in enumerate(zip(visits, st.visits)):
            if v["start_t"] != a or v["end_t"] != b or v["duration"] != b - a:
                bad.append(f"s{s} visit {i}: times ({v['start_t']}, {v['end_t']}) != ({a}, {b})")
            if set(v["slices"]) != set(sl):
                bad.append(f"s{s} visit {i}: slices differ")
        if got["stats"]["n_revisits"] != st.n_revisits:
            bad.append(f"s{s}: Nr {got['stats']['n_revisits']} != {st.n_revisits}")
        if got["stats"]["coverage_pct"] != truth.coverage_pct(s):
            bad.append(f"s{s}: coverage {got['stats']['coverage_pct']} != {truth.coverage_pct(s)}")

    vol = load_volume(files["volume"])
    mask = load_mask(files["mask"], vol)
    rec = GazeRecording(parse_gaze_csv(files["gaze"]), parse_slice_trace(files["trace"], vol.nz))
    h = Homography.from_json(json.loads(open(files["homography"]).read()))
    fov = FovealModel()
    lab = label_samples(rec, mask, h, fov)
    for s, st in truth.scenarios.items():
        cov = covered_voxels(lab.select(s), mask, fov.r_image)
        got = {tuple(int(c) for c in p) for p in np.argwhere(cov)}
        if got != st.covered_set:
            bad.append(f"s{s}: covered voxel set differs ({len(got)} vs {len(st.covered)})")
    return bad


# Published per-case rows: (mean, median, max, std, total, N, Nr) for scenario 1 / scenario 2.
PUBLISHED_ROWS = {
    "Rad A": [
        ((1.96, 1.40, 5.56, 1.99, 13.69, 40, 8), (3.35, 1.59, 13.69, 4.35, 26.83, 71, 39)),
        ((4.73, 3.34, 15.18, 4.44, 37.87, 59, 29), (3.06, 0.80, 15.29, 4.19, 39.76, 87, 137)),
        ((4.25, 2.43, 13.63, 4.35, 25.48, 76, 14), (1.35, 0.50, 11.34, 2.45, 32.39, 175, 58)),
    ],
    "Rad B": [
        ((4.05, 0.18, 12.37, 5.60, 24.29, 29, 17), (1.85, 0.03, 12.01, 3.59, 24.02, 48, 63)),
        ((1.24, 0.99, 2.73, 1.20, 7.43, 25, 15), (2.03, 1.17, 6.98, 2.27, 20.32, 43, 60)),
        ((2.05, 0.59, 5.84, 2.37, 14.32, 30, 12), (3.56, 3.39, 6.48, 1.99, 32.04, 70, 55)),
        ((2.97, 2.48, 6.92, 2.43, 14.86, 18, 18), (1.81, 1.08, 5.16, 1.81, 18.13, 42, 84)),
        ((1.17, 0.69, 2.48, 0.94, 3.51, 12, 1), (2.84, 2.95, 4.70, 1.79, 11.35, 14, 8)),
        ((4.31, 1.68, 14.05, 5.22, 25.85, 26, 42), (3.62, 2.04, 16.51, 5.13, 28.98, 38, 69)),
    ],
}


def write_published_stats(out_dir, reader, n_cases=None):
    """Write the published per-case reader rows as stats JSON files; returns their paths."""
    import json
    from pathlib import Path

    keys = ("mean_s", "median_s", "max_s", "std_s", "total_s", "n_switches", "n_revisits")
    paths = []
    rows = PUBLISHED_ROWS[reader][:n_cases]
    for i, (s1, s2) in enumerate(rows, start=1):
        doc = {
            "schema_version": "1",
            "case": f"#{i}",
            "reader": reader,
            "scenarios": {s: {"stats": dict(zip(keys, vals))} for s, vals in (("1", s1), ("2", s2))},
        }
        p = Path(out_dir) / f"{reader.replace(' ', '_')}_{i}.json"
        p.write_text(json.dumps(doc))
        paths.append(str(p))
    return paths
