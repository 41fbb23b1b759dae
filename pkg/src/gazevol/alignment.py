"""Scene-to-image alignment: ORB features, cross-checked matching, RANSAC homography.

The stored homography maps reference image coordinates to scene coordinates;
:func:`map_gaze` applies its inverse to bring gaze samples into the image.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy.optimize import least_squares

from .errors import AlignmentError, DegenerateConfigurationError, InputError

ORB_PARAMS = dict(
    scaleFactor=1.2,
    nlevels=8,
    edgeThreshold=31,
    firstLevel=0,
    WTA_K=2,
    scoreType=cv2.ORB_HARRIS_SCORE,
    patchSize=31,
    fastThreshold=20,
)
RANSAC_MAX_ITERS = 2000
RANSAC_CONFIDENCE = 0.99
DEFAULT_RANSAC_PX = 3.0
# Any 4 random matches fit a homography exactly; image alignment demands more support.
MIN_ALIGN_INLIERS = 15


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    response: float
    angle: float  # radians
    octave: int


@dataclass(frozen=True)
class Match:
    query_idx: int
    train_idx: int
    distance: int


@dataclass(frozen=True)
class Homography:
    h: np.ndarray  # 3x3, image -> scene, h[2, 2] == 1
    inlier_count: int = 0
    reprojection_rmse: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(h)) or abs(h[2, 2]) < 1e-12:
            raise AlignmentError("homography must be finite with non-zero h[2, 2]")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) < 1e-12:
            raise AlignmentError("homography is singular")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.h)

    def to_json(self) -> dict:
        return {
            "h": [[float(v) for v in row] for row in self.h],
            "inliers": int(self.inlier_count),
            "rmse": float(self.reprojection_rmse),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Homography":
        try:
            return cls(np.array(data["h"], dtype=float), int(data.get("inliers", 0)), float(data.get("rmse", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed homography record: {exc}") from exc


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Min-max normalise to 8-bit; constant images become all zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return np.round((img - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def detect_orb(img: np.ndarray, max_features: int = 500) -> tuple[list[Keypoint], np.ndarray]:
    """Detect up to ``max_features`` ORB keypoints.

    Returns the keypoints (best Harris response first) and an (n, 32) uint8
    array of packed 256-bit descriptors, row-aligned with the keypoints.
    """
    img = np.asarray(img)
    if img.ndim != 2 or min(img.shape) < 32:
        raise InputError(f"image must be 2-D and at least 32x32, got shape {img.shape}")
    gray = img if img.dtype == np.uint8 else to_uint8(img)
    orb = cv2.ORB_create(nfeatures=int(max_features), **ORB_PARAMS)
    kps, desc = orb.detectAndCompute(np.ascontiguousarray(gray), None)
    if not kps or desc is None:
        return [], np.zeros((0, 32), dtype=np.uint8)
    order = sorted(range(len(kps)), key=lambda i: -kps[i].response)[:max_features]
    keypoints = [
        Keypoint(kps[i].pt[0], kps[i].pt[1], kps[i].response, math.radians(kps[i].angle), kps[i].octave)
        for i in order
    ]
    return keypoints, desc[order]


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.uint8).view(np.uint64)
    b = np.ascontiguousarray(b, dtype=np.uint8).view(np.uint64)
    return np.bitwise_count(a[:, None, :] ^ b[None, :, :]).sum(axis=2, dtype=np.int32)


def match_crosscheck(a: np.ndarray, b: np.ndarray) -> list[Match]:
    """Mutual nearest neighbours under Hamming distance, sorted by distance.

    Ties in the nearest neighbour resolve to the lowest index.
    """
    if len(a) == 0 or len(b) == 0:
        raise InputError("cannot match an empty descriptor list")
    d = hamming_matrix(a, b)
    best_b = d.argmin(axis=1)
    best_a = d.argmin(axis=0)
    out = [Match(i, int(j), int(d[i, j])) for i, j in enumerate(best_b) if best_a[j] == i]
    out.sort(key=lambda m: (m.distance, m.query_idx))
    return out


def _normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    n = len(src)
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    zeros, ones = np.zeros(n), np.ones(n)
    A = np.empty((2 * n, 9))
    A[0::2] = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    A[1::2] = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    _, s, vt = np.linalg.svd(A)
    if s[7] < 1e-10 * s[0]:
        return None
    return vt[-1].reshape(3, 3)


def _fit(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """Normalised DLT; returns the denormalised matrix with h[2, 2] = 1, or None."""
    sn, Ts = _normalize(src)
    dn, Td = _normalize(dst)
    hn = _dlt(sn, dn)
    if hn is None:
        return None
    h = np.linalg.inv(Td) @ hn @ Ts
    if abs(h[2, 2]) < 1e-12 or not np.all(np.isfinite(h)):
        return None
    return h / h[2, 2]


def _refine(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Levenberg-Marquardt polish of the reprojection error, in normalised coordinates."""
    if len(src) < 5:
        return h
    sn, Ts = _normalize(src)
    dn, Td = _normalize(dst)
    h0 = Td @ h @ np.linalg.inv(Ts)
    h0 = h0 / h0[2, 2]

    def resid(p):
        q = project(np.append(p, 1.0).reshape(3, 3), sn)
        return (q - dn).ravel()

    sol = least_squares(resid, h0.ravel()[:8], method="lm")
    hr = np.linalg.inv(Td) @ np.append(sol.x, 1.0).reshape(3, 3) @ Ts
    if not np.all(np.isfinite(hr)) or abs(hr[2, 2]) < 1e-12:
        return h
    hr = hr / hr[2, 2]
    if np.sum(_errors(hr, src, dst) ** 2) < np.sum(_errors(h, src, dst) ** 2):
        return hr
    return h


def project(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    q = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(h).T
    with np.errstate(divide="ignore", invalid="ignore"):
        return q[:, :2] / q[:, 2:3]


def _tri_areas(p: np.ndarray) -> np.ndarray:
    """Twice the areas of the four triangles of each 4-point set, shape (B, 4)."""
    out = []
    for i, j, k in itertools.combinations(range(4), 3):
        a, b, c = p[:, i], p[:, j], p[:, k]
        out.append(np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])))
    return np.stack(out, axis=1)


def _degenerate(p: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """True for 4-point sets where some three points are (nearly) collinear."""
    span = np.maximum(np.ptp(p[:, :, 0], axis=1), np.ptp(p[:, :, 1], axis=1))
    scale = np.maximum(span, 1e-12) ** 2
    return (_tri_areas(p) <= tol * scale[:, None]).any(axis=1)


def _fit_batch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalised DLT for a stack of 4-point sets (B, 4, 2). Returns (B, 3, 3) and a validity mask."""
    def norm(p):
        c = p.mean(axis=1, keepdims=True)
        d = np.sqrt(((p - c) ** 2).sum(axis=2)).mean(axis=1)
        sc = np.where(d > 0, math.sqrt(2.0) / np.where(d > 0, d, 1.0), 1.0)
        return (p - c) * sc[:, None, None], c[:, 0, :], sc

    sn, cs, ss = norm(src)
    dn, cd, sd = norm(dst)
    b = len(src)
    x, y = sn[:, :, 0], sn[:, :, 1]
    u, v = dn[:, :, 0], dn[:, :, 1]
    z, o = np.zeros_like(x), np.ones_like(x)
    A = np.empty((b, 8, 9))
    A[:, 0::2] = np.stack([x, y, o, z, z, z, -u * x, -u * y, -u], axis=2)
    A[:, 1::2] = np.stack([z, z, z, x, y, o, -v * x, -v * y, -v], axis=2)
    _, sv, vt = np.linalg.svd(A)
    hn = vt[:, -1].reshape(b, 3, 3)
    ok = sv[:, 7] >= 1e-10 * sv[:, 0]
    Ts = np.zeros((b, 3, 3))
    Ts[:, 0, 0] = Ts[:, 1, 1] = ss
    Ts[:, 0, 2], Ts[:, 1, 2], Ts[:, 2, 2] = -ss * cs[:, 0], -ss * cs[:, 1], 1.0
    Tdi = np.zeros((b, 3, 3))
    Tdi[:, 0, 0] = Tdi[:, 1, 1] = 1.0 / sd
    Tdi[:, 0, 2], Tdi[:, 1, 2], Tdi[:, 2, 2] = cd[:, 0], cd[:, 1], 1.0
    h = Tdi @ hn @ Ts
    h22 = h[:, 2, 2]
    ok &= np.abs(h22) > 1e-12
    h = h / np.where(ok, h22, 1.0)[:, None, None]
    ok &= np.isfinite(h).all(axis=(1, 2))
    return h, ok


def _errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    err = np.linalg.norm(project(h, src) - dst, axis=1)
    return np.where(np.isfinite(err), err, np.inf)


def _sample_sets(rng: np.random.Generator, n: int, b: int) -> np.ndarray:
    idx = rng.integers(0, n, size=(b, 4))
    while True:
        s = np.sort(idx, axis=1)
        dup = (s[:, 1:] == s[:, :-1]).any(axis=1)
        if not dup.any():
            return idx
        idx[dup] = rng.integers(0, n, size=(int(dup.sum()), 4))


def estimate_homography(
    src,
    dst,
    ransac_threshold: float = DEFAULT_RANSAC_PX,
    seed: int = 0,
    max_iters: int = RANSAC_MAX_ITERS,
    confidence: float = RANSAC_CONFIDENCE,
    batch: int = 64,
) -> Homography:
    """Robustly fit ``dst ~ H @ src`` from point pairs.

    RANSAC over 4-point normalised-DLT fits (scored ``batch`` hypotheses at a
    time) with adaptive termination at ``confidence``, then a least-squares
    refit on the consensus set, polished by minimising reprojection error. Inlier count and RMSE are reported over the
    final inliers.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    n = len(src)
    if n != len(dst):
        raise InputError("source and destination point counts differ")
    if n < 4:
        raise AlignmentError(f"need at least 4 point pairs, got {n}")
    rng = np.random.default_rng(seed)
    src_h = np.column_stack([src, np.ones(n)])

    best_inl: np.ndarray | None = None
    best_key = (-1, -math.inf)
    needed = max_iters
    degenerate = 0
    it = 0
    while it < min(max_iters, needed):
        b = min(batch, max_iters - it) if n > 4 else 1
        idx = np.arange(4)[None, :] if n == 4 else _sample_sets(rng, n, b)
        it += b
        ps, pd = src[idx], dst[idx]
        good = ~(_degenerate(ps) | _degenerate(pd))
        hs, ok = _fit_batch(ps[good], pd[good]) if good.any() else (np.zeros((0, 3, 3)), np.zeros(0, bool))
        degenerate += int(b - ok.sum())
        hs = hs[ok]
        if len(hs):
            q = src_h @ hs.transpose(0, 2, 1)  # (B, n, 3)
            with np.errstate(divide="ignore", invalid="ignore"):
                err = np.linalg.norm(q[:, :, :2] / q[:, :, 2:3] - dst[None], axis=2)
            err = np.where(np.isfinite(err), err, np.inf)
            inl = err < ransac_threshold
            counts = inl.sum(axis=1)
            score = -np.minimum(err, ransac_threshold).sum(axis=1)
            j = int(np.lexsort((score, counts))[-1])
            key = (int(counts[j]), float(score[j]))
            if key > best_key:
                best_key, best_inl = key, inl[j]
                w = key[0] / n
                if w >= 1.0:
                    needed = 0
                elif w > 0:
                    needed = math.ceil(math.log(1 - confidence) / math.log(1 - w**4))
        if n == 4:
            break

    if best_inl is None:
        raise DegenerateConfigurationError(f"all {degenerate} sampled configurations were degenerate")
    if best_key[0] < 4:
        raise AlignmentError(f"only {best_key[0]} inliers after {it} iterations")

    inl = best_inl
    h = None
    for _ in range(3):
        refit = _fit(src[inl], dst[inl])
        if refit is None:
            break
        h = refit
        new_inl = _errors(h, src, dst) < ransac_threshold
        if new_inl.sum() < 4 or np.array_equal(new_inl, inl):
            break
        inl = new_inl
    if h is None:
        raise DegenerateConfigurationError("least-squares refit on inliers is degenerate")
    h = _refine(h, src[inl], dst[inl])
    err = _errors(h, src[inl], dst[inl])
    rmse = float(np.sqrt(np.mean(err**2))) if np.all(np.isfinite(err)) else math.inf
    return Homography(h, int(inl.sum()), rmse)


def map_points(h: Homography, pts) -> np.ndarray:
    """Scene points -> image points via the inverse homography."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    q = np.column_stack([pts, np.ones(len(pts))]) @ h.inverse.T
    if np.any(np.abs(q[:, 2]) < 1e-12):
        raise AlignmentError("gaze point maps to the plane at infinity")
    return q[:, :2] / q[:, 2:3]


def map_gaze(h: Homography, sample) -> tuple[float, float]:
    u, v = map_points(h, [[sample.x, sample.y]])[0]
    return float(u), float(v)


def align_images(
    image: np.ndarray,
    scene: np.ndarray,
    ransac_threshold: float = DEFAULT_RANSAC_PX,
    seed: int = 0,
    max_features: int = 1000,
) -> Homography:
    """Estimate the image -> scene homography from ORB matches."""
    kp_i, d_i = detect_orb(image, max_features)
    kp_s, d_s = detect_orb(scene, max_features)
    if len(kp_i) < 4 or len(kp_s) < 4:
        raise AlignmentError(f"too few keypoints (image {len(kp_i)}, scene {len(kp_s)})")
    matches = match_crosscheck(d_i, d_s)
    if len(matches) < MIN_ALIGN_INLIERS:
        raise AlignmentError(f"only {len(matches)} cross-checked matches")
    src = np.array([[kp_i[m.query_idx].x, kp_i[m.query_idx].y] for m in matches])
    dst = np.array([[kp_s[m.train_idx].x, kp_s[m.train_idx].y] for m in matches])
    h = estimate_homography(src, dst, ransac_threshold, seed)
    if h.inlier_count < MIN_ALIGN_INLIERS:
        raise AlignmentError(f"alignment found only {h.inlier_count} inliers (< {MIN_ALIGN_INLIERS})")
    return h


def infer_slice(scene_img, vol, candidates=None, ransac_threshold: float = DEFAULT_RANSAC_PX, seed: int = 0):
    """Pick the slice whose alignment to ``scene_img`` has the most inliers.

    Ties go to lower RMSE, then lower index. Slices with fewer than
    ``MIN_ALIGN_INLIERS`` inliers do not qualify. Returns
    ``(z, inlier_count, homography)``.
    """
    candidates = list(range(vol.nz) if candidates is None else candidates)
    if not candidates:
        raise InputError("no candidate slices")
    kp_s, d_s = detect_orb(scene_img, 1000)
    best = None
    for z in candidates:
        if len(kp_s) < 4:
            break
        kp_i, d_i = detect_orb(vol.slice_image(z), 1000)
        if len(kp_i) < 4:
            continue
        matches = match_crosscheck(d_i, d_s)
        if len(matches) < 4:
            continue
        src = np.array([[kp_i[m.query_idx].x, kp_i[m.query_idx].y] for m in matches])
        dst = np.array([[kp_s[m.train_idx].x, kp_s[m.train_idx].y] for m in matches])
        try:
            h = estimate_homography(src, dst, ransac_threshold, seed)
        except AlignmentError:
            continue
        if h.inlier_count < MIN_ALIGN_INLIERS:
            continue
        key = (-h.inlier_count, h.reprojection_rmse, z)
        if best is None or key < best[0]:
            best = (key, z, h)
    if best is None:
        raise AlignmentError(f"no candidate slice reached {MIN_ALIGN_INLIERS} inliers")
    return best[1], best[2].inlier_count, best[2]
