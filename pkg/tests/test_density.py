import math
import re

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazevol.density import (
    MIN_BANDWIDTH, StrategyMetrics, classify, density_profile, kde_on_grid, silverman_bandwidth,
    strategy_metrics,
)
from gazevol.errors import InputError
from gazevol.plot import density_svg
from gazevol.visits import Labeled, Visit


def _lab(t, z, u=None, v=None):
    n = len(t)
    u = np.zeros(n) if u is None else np.asarray(u, float)
    v = np.zeros(n) if v is None else np.asarray(v, float)
    ones = np.ones(n, bool)
    return Labeled(np.asarray(t, float), u, v, np.asarray(z, np.int64), ones, ones, ones)


def _kernel_sum(values, grid, bw):
    out = []
    for g in grid:
        s = 0.0
        for x in values:
            s += math.exp(-0.5 * ((g - x) / bw) ** 2) / (bw * math.sqrt(2 * math.pi))
        out.append(s / len(values))
    return np.array(out)


def _trap(y, x):
    return sum((x[i + 1] - x[i]) * (y[i] + y[i + 1]) / 2 for i in range(len(x) - 1))


def test_degenerate_window():
    (p,) = density_profile(_lab([0, 1, 2], [40, 40, 40]), [(0, 2)])
    assert p.degenerate and list(p.slice_axis) == [40] and list(p.density) == [1.0]


def test_empty_window():
    (p,) = density_profile(_lab([0, 1], [4, 5]), [(10, 20)])
    assert p.empty and not p.degenerate and p.density.size == 0


def test_uniform_unimodal_centered():
    z = np.repeat(np.arange(10, 21), 5)
    (p,) = density_profile(_lab(np.arange(z.size), z), [(0, z.size)], bandwidth=4.0)
    assert p.slice_axis[np.argmax(p.density)] == 15
    peak = int(np.argmax(p.density))
    assert np.all(np.diff(p.density[: peak + 1]) >= 0) and np.all(np.diff(p.density[peak:]) <= 0)


def test_density_vs_kernel_sum(rng):
    z = rng.integers(20, 60, 200)
    (p,) = density_profile(_lab(np.arange(200), z), [(0, 200)], bandwidth=1.5)
    raw = _kernel_sum(z.tolist(), p.slice_axis.tolist(), 1.5)
    oracle = raw / _trap(raw.tolist(), p.slice_axis.tolist())
    np.testing.assert_allclose(p.density, oracle, rtol=0, atol=1e-9)


def test_silverman_and_floor():
    x = np.array([1.0, 2, 3, 4, 5, 6, 7, 8])
    iqr = np.percentile(x, 75) - np.percentile(x, 25)
    assert silverman_bandwidth(x) == pytest.approx(0.9 * min(x.std(ddof=1), iqr / 1.34) * 8 ** -0.2)
    (p,) = density_profile(_lab(range(100), [5] * 99 + [6]), [(0, 100)])
    assert p.bandwidth == MIN_BANDWIDTH


def test_window_validation():
    lab = _lab([0, 1], [1, 2])
    with pytest.raises(InputError):
        density_profile(lab, [(0, 5), (3, 8)])
    with pytest.raises(InputError):
        density_profile(lab, [(5, 1)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 97), min_size=2, max_size=80), st.none() | st.floats(0.5, 6))
def test_unit_mass_nonnegative(z, bw):
    (p,) = density_profile(_lab(range(len(z)), z), [(0, len(z))], bandwidth=bw, nz=98)
    if p.degenerate:
        return
    assert np.all(p.density >= 0)
    assert abs(np.trapezoid(p.density, p.slice_axis) - 1) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=3, max_size=60), st.integers(1, 30))
def test_translation_equivariance(z, c):
    if len(set(z)) == 1:
        return
    z = np.asarray(z)
    (a,) = density_profile(_lab(range(z.size), z), [(0, z.size)])
    (b,) = density_profile(_lab(range(z.size), z + c), [(0, z.size)])
    np.testing.assert_allclose(b.density, a.density, atol=1e-12)
    assert b.slice_axis[np.argmax(b.density)] == a.slice_axis[np.argmax(a.density)] + c


def test_kde_grid_single_point():
    assert kde_on_grid([3.0], [3.0], 1.0).tolist() == [1.0]


# ---- strategy metrics ----

def _one_visit(t, z, u, v):
    return [Visit(float(t[0]), float(t[-1]), 0, len(t))], _lab(t, z, u, v)


def test_zero_scroll():
    visits, lab = _one_visit([0, 1, 2], [5, 5, 5], [10, 20, 30], [10, 10, 10])
    m = strategy_metrics(visits, lab, 512, 98)
    assert m.scroll_rate == 0 and m.dispersion > 0 and m.drill_index == 0


def test_fixed_point_scrolling_is_infinite():
    visits, lab = _one_visit([0, 1, 2], [5, 6, 7], [10, 10, 10], [10, 10, 10])
    m = strategy_metrics(visits, lab, 512, 98)
    assert m.dispersion == 0 and math.isinf(m.drill_index)
    d = m.to_dict()
    assert d["drill_index"] is None and d["drill_index_infinite"] is True


def test_metric_values():
    visits, lab = _one_visit([0, 1, 2], [5, 7, 6], [0, 2, 4], [0, 0, 0])
    m = strategy_metrics(visits, lab, 100, 10)
    assert m.scroll_rate == pytest.approx(3 / 2)
    assert m.dispersion == pytest.approx(math.sqrt(8 / 3))
    assert m.drill_index == pytest.approx((1.5 / 10) / (math.sqrt(8 / 3) / 100))


def test_duration_weighting():
    lab = _lab([0, 1, 10, 13], [0, 1, 0, 0], [0, 0, 0, 6], [0, 0, 0, 0])
    visits = [Visit(0, 1, 0, 2), Visit(10, 13, 2, 4)]
    m = strategy_metrics(visits, lab, 100, 10)
    assert m.scroll_rate == pytest.approx((1 * 1 + 0 * 3) / 4)
    assert m.dispersion == pytest.approx((0 * 1 + 3 * 3) / 4)


def test_needs_usable_visit():
    lab = _lab([0], [1])
    with pytest.raises(InputError):
        strategy_metrics([Visit(0, 0, 0, 1)], lab, 100, 10)


@given(st.floats(0.1, 10))
def test_scale_invariance(s):
    t = [0, 0.5, 1.0, 1.5]
    visits, lab = _one_visit(t, [1, 3, 2, 5], [10, 14, 11, 19], [3, 7, 2, 4])
    _, lab2 = _one_visit(t, [1, 3, 2, 5], np.array([10, 14, 11, 19]) * s, np.array([3, 7, 2, 4]) * s)
    a = strategy_metrics(visits, lab, 512, 98).drill_index
    b = strategy_metrics(visits, lab2, 512 * s, 98).drill_index
    assert b == pytest.approx(a, rel=1e-9)


def test_classify():
    assert classify(StrategyMetrics(1, 1, 5.0), 1.0) == "driller"
    assert classify(StrategyMetrics(1, 1, 0.5), 1.0) == "scanner"


# ---- SVG ----

def test_svg_structure():
    lab = _lab(range(12), [3, 3, 3, 3, 10, 11, 12, 11, 10, 9, 11, 10])
    profiles = density_profile(lab, [(0, 3), (4, 11), (20, 30)])
    svg = density_svg(profiles, "case & reader", 98)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert len(re.findall(r'class="degenerate" data-window="0"', svg)) == 1
    assert len(re.findall(r'class="density" data-window="1"', svg)) == 1
    assert 'data-window="2"' not in svg  # empty window not drawn
    assert "w0: 3.00 s" in svg and "w1: 7.00 s" in svg
    assert "case &amp; reader" in svg
    assert density_svg(profiles, "case & reader", 98) == svg
