"""Foveal footprint of a gaze point, on screen and in image pixels."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

DEFAULT_THETA_DEG = 1.5
DEFAULT_DISTANCE_CM = 60.0
DEFAULT_PPC = 38.4
DEFAULT_SCALE = 0.2667


def _check(theta: float, dist: float, ppc: float, scale: float = 1.0) -> None:
    if not 0 < theta < 30:
        raise InputError(f"visual angle must be in (0, 30) degrees, got {theta}")
    if not dist > 0:
        raise InputError(f"viewing distance must be positive, got {dist}")
    if not ppc > 0:
        raise InputError(f"screen resolution must be positive, got {ppc}")
    if not 0 < scale <= 1:
        raise InputError(f"image scale must be in (0, 1], got {scale}")


def foveal_radius(theta: float, dist: float, ppc: float) -> float:
    """On-screen foveal radius in px: ``tan(theta / 2) * dist * ppc`` (theta in degrees)."""
    _check(theta, dist, ppc)
    return math.tan(math.radians(theta) / 2.0) * dist * ppc


@dataclass(frozen=True)
class FovealModel:
    theta: float = DEFAULT_THETA_DEG
    dist: float = DEFAULT_DISTANCE_CM
    ppc: float = DEFAULT_PPC
    scale: float = DEFAULT_SCALE

    def __post_init__(self):
        _check(self.theta, self.dist, self.ppc, self.scale)

    @property
    def r_screen(self) -> float:
        return foveal_radius(self.theta, self.dist, self.ppc)

    @property
    def r_image(self) -> float:
        return self.r_screen * self.scale


def scaled_radius(model: FovealModel, round: bool = False) -> float:
    r = model.r_image
    return float(math.floor(r + 0.5)) if round else r


def disk_offsets(r: float) -> np.ndarray:
    """Integer offsets (dp, dq) of the bounding square of a radius-``r`` disk, shape (K, 2)."""
    k = int(math.ceil(r)) + 1
    ax = np.arange(-k, k + 1)
    dp, dq = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([dp.ravel(), dq.ravel()])


def foveal_disk(center, r: float, bounds) -> set[tuple[int, int]]:
    """Integer pixels (p, q) inside ``bounds = (w, h)`` with squared distance to ``center`` <= r**2."""
    if r < 0:
        raise InputError(f"radius must be non-negative, got {r}")
    u, v = float(center[0]), float(center[1])
    w, h = bounds
    pix = np.floor([u, v]).astype(np.int64) + disk_offsets(r)
    d2 = (pix[:, 0] - u) ** 2 + (pix[:, 1] - v) ** 2
    keep = (d2 <= r * r) & (pix[:, 0] >= 0) & (pix[:, 0] < w) & (pix[:, 1] >= 0) & (pix[:, 1] < h)
    return {(int(p), int(q)) for p, q in pix[keep]}
