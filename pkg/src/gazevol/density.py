"""Per-slice gaze density over time windows, and drill/scan strategy metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .visits import Labeled, Visit

MIN_BANDWIDTH = 0.5
DRILL_EPS = 1e-9


@dataclass(frozen=True)
class DensityProfile:
    window: tuple[float, float]
    slice_axis: np.ndarray
    density: np.ndarray
    degenerate: bool
    n_samples: int
    bandwidth: float | None = None

    @property
    def empty(self) -> bool:
        return self.n_samples == 0

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]


def silverman_bandwidth(x) -> float:
    """Silverman's rule of thumb, ``0.9 * min(std, IQR / 1.34) * n ** -0.2``."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return 0.0
    std = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = std
    return 0.9 * spread * x.size ** -0.2


def kde_on_grid(values, grid, bandwidth: float) -> np.ndarray:
    """Gaussian kernel sum on ``grid``, rescaled to unit trapezoidal mass."""
    values = np.asarray(values, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    z = (grid[:, None] - values[None, :]) / bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (values.size * bandwidth * math.sqrt(2 * math.pi))
    mass = np.trapezoid(dens, grid) if grid.size > 1 else dens.sum()
    return dens / mass


def density_profile(
    labeled: Labeled,
    windows,
    bandwidth: float | None = None,
    nz: int | None = None,
) -> list[DensityProfile]:
    """Kernel density of displayed-slice index for the samples in each window.

    ``labeled`` should already be filtered to the qualifying samples. Windows
    are closed intervals ``(t_start, t_end)``, non-overlapping and ordered.
    Density is evaluated on integer slice indices spanning the data +/- 4
    bandwidths (clipped to ``[0, nz)`` when ``nz`` is given).
    """
    windows = [(float(a), float(b)) for a, b in windows]
    for (a, b), (c, _) in zip(windows, windows[1:]):
        if c <= b:
            raise InputError("density windows must be ordered and non-overlapping")
    if any(b < a for a, b in windows):
        raise InputError("density window ends before it starts")
    out = []
    for a, b in windows:
        sel = (labeled.t >= a) & (labeled.t <= b)
        zs = labeled.z[sel].astype(np.float64)
        if zs.size == 0:
            out.append(DensityProfile((a, b), np.zeros(0, np.int64), np.zeros(0), False, 0))
            continue
        if np.all(zs == zs[0]):
            out.append(DensityProfile((a, b), np.array([int(zs[0])]), np.array([1.0]), True, int(zs.size)))
            continue
        bw = bandwidth if bandwidth is not None else max(silverman_bandwidth(zs), MIN_BANDWIDTH)
        lo = math.floor(zs.min() - 4 * bw)
        hi = math.ceil(zs.max() + 4 * bw)
        if nz is not None:
            lo, hi = max(lo, 0), min(hi, nz - 1)
        grid = np.arange(lo, hi + 1)
        out.append(DensityProfile((a, b), grid, kde_on_grid(zs, grid, bw), False, int(zs.size), bw))
    return out


@dataclass(frozen=True)
class StrategyMetrics:
    scroll_rate: float  # slices / s
    dispersion: float  # image px
    drill_index: float  # math.inf when dispersion is exactly zero

    def to_dict(self) -> dict:
        finite = math.isfinite(self.drill_index)
        return {
            "scroll_rate": self.scroll_rate,
            "dispersion": self.dispersion,
            "drill_index": self.drill_index if finite else None,
            "drill_index_infinite": not finite,
        }


def strategy_metrics(visits: list[Visit], qualifying: Labeled, image_w: float, nz: int) -> StrategyMetrics:
    """Duration-weighted scroll rate and gaze dispersion over visits, and their ratio.

    ``drill_index = (scroll_rate / nz) / max(dispersion / image_w, eps)``; a
    dispersion of exactly zero with scrolling yields ``inf``.
    """
    rates, disps, weights = [], [], []
    for v in visits:
        if v.n_samples < 2 or v.duration <= 0:
            continue
        sl = slice(v.start, v.stop)
        z = qualifying.z[sl].astype(np.float64)
        u, w_ = qualifying.u[sl], qualifying.v[sl]
        rates.append(np.abs(np.diff(z)).sum() / v.duration)
        if np.all(u == u[0]) and np.all(w_ == w_[0]):
            disps.append(0.0)  # exact zero; the mean of equal floats may not round-trip
        else:
            disps.append(math.sqrt(np.mean((u - u.mean()) ** 2 + (w_ - w_.mean()) ** 2)))
        weights.append(v.duration)
    if not weights:
        raise InputError("strategy metrics need at least one visit with 2+ samples and positive duration")
    wts = np.asarray(weights)
    scroll = float(np.average(rates, weights=wts))
    disp = float(np.average(disps, weights=wts))
    if disp == 0.0:
        drill = math.inf if scroll > 0 else 0.0
    else:
        drill = (scroll / nz) / max(disp / image_w, DRILL_EPS)
    return StrategyMetrics(scroll, disp, drill)


def classify(metrics: StrategyMetrics, threshold: float) -> str:
    return "driller" if metrics.drill_index > threshold else "scanner"


def windows_from_visits(visits: list[Visit]) -> list[tuple[float, float]]:
    return [(v.start_t, v.end_t) for v in visits]
