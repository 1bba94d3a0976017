import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psqkd.errors import ConvergenceError, ModelDomainError
from psqkd.eve_model import ALICE, BOB, COLLECTIVE, INDIVIDUAL
from psqkd.info_theory import AnnouncedPair, Channel, Modulation
from psqkd.keyrate import (
    RegionMap,
    asymptote_slopes,
    contour_grid,
    contour_levels,
    delta_i_array,
    delta_i_point,
    noise_threshold,
    optimize_modulation,
    postselect_keep,
    region_boundary,
    region_map,
    secure_rate,
    separability_bound,
    sweep_noise,
    threshold_polynomial,
)


def bisect_threshold(eta, lo=1e-9, hi=None, iters=200):
    """Plain bisection on eta(1+x)^2 - x(x+2)(x+1-eta), written out independently."""
    hi = 2.0 * eta if hi is None else hi

    def g(x):
        return eta * (1.0 + x) ** 2 - x * (x + 2.0) * (x + 1.0 - eta)

    assert g(lo) > 0 > g(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---- pointwise rate


def test_delta_i_point_identity_and_zero_product():
    ch = Channel(0.5, 0.2)
    for pt in (AnnouncedPair(0.0, 2.0), AnnouncedPair(3.0, 0.0)):
        for attack in (INDIVIDUAL, COLLECTIVE):
            rb = delta_i_point(ch, pt, attack)
            assert rb.i_ab == 0.0 and rb.i_e >= 0.0 and rb.delta_i <= 0.0
            assert not postselect_keep(ch, pt, attack)
    rb = delta_i_point(ch, AnnouncedPair(2.0, 2.5), COLLECTIVE)
    assert rb.delta_i == pytest.approx(rb.i_ab - rb.i_e, abs=1e-15)
    assert 0.0 <= rb.i_ab <= 1.0 and 0.0 <= rb.i_e <= 1.0


def test_target_follows_critical_line():
    ch = Channel(0.5, 0.2)
    assert delta_i_point(ch, AnnouncedPair(1.0, 3.0), INDIVIDUAL).target_used == BOB
    assert delta_i_point(ch, AnnouncedPair(1.0, 0.5), INDIVIDUAL).target_used == ALICE
    assert delta_i_point(ch, AnnouncedPair(1.0, 3.0), COLLECTIVE).target_used == BOB
    assert delta_i_point(Channel(0.5, 0.0), AnnouncedPair(1.0, 30.0), INDIVIDUAL).target_used == ALICE


def test_zero_noise_has_kept_points():
    rm = region_map(Channel(0.5, 0.0), INDIVIDUAL, 6, 6, 60, 60)
    assert rm.kept.any()


def test_outside_upper_ray_is_discarded():
    ch = Channel(0.5, 0.2)
    for s in (5.0, 8.0):
        assert delta_i_point(ch, AnnouncedPair(s, 5.0 * s), INDIVIDUAL).delta_i < 0.0


def test_between_rays_is_kept_far_out():
    ch = Channel(0.5, 0.2)
    lo, hi = asymptote_slopes(ch)
    mid = math.sqrt(lo * hi)
    for s in (4.0, 8.0, 15.0):
        assert postselect_keep(ch, AnnouncedPair(s, mid * s), INDIVIDUAL)


def test_collective_subset_of_individual():
    ch = Channel(0.5, 0.2)
    ind = region_map(ch, INDIVIDUAL, 8, 8, 200, 200)
    col = region_map(ch, COLLECTIVE, 8, 8, 200, 200)
    assert col.kept.any()
    assert not np.any(col.kept & ~ind.kept)


@pytest.mark.parametrize("xi_of_eta", [lambda e: 2.0 * e, lambda e: noise_threshold(e) + 1e-3])
def test_region_empty_above_threshold(xi_of_eta):
    eta = 0.45
    ch = Channel(eta, xi_of_eta(eta))
    for attack in (INDIVIDUAL, COLLECTIVE):
        assert not region_map(ch, attack, 30, 60, 150, 300).kept.any()


def test_region_map_validation():
    with pytest.raises(ValueError):
        region_map(Channel(0.5, 0.2), INDIVIDUAL, 0.0, 1.0, 10, 10)
    with pytest.raises(ValueError):
        RegionMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.zeros((3, 2)), np.zeros((3, 2), bool))
    with pytest.raises(ValueError):
        RegionMap(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.zeros((2, 2)), np.zeros((2, 2), bool))


# ---- asymptotes and thresholds


def test_asymptote_slopes_match_polynomial_roots():
    ch = Channel(0.5, 0.2)
    eta, xi = ch.eta, ch.xi
    roots = np.sort(np.roots([xi * (xi + 2), -2 * math.sqrt(eta) * (1 + xi), 1 + xi - eta]).real)
    lo, hi = asymptote_slopes(ch)
    assert (lo, hi) == pytest.approx(tuple(roots), rel=1e-12)
    # frozen from the root computation above
    assert lo == pytest.approx(0.4696724454286557, rel=1e-12)
    assert hi == pytest.approx(3.3872736337706937, rel=1e-12)


def test_asymptotes_from_region_edge():
    # oracle: the kept-region edge located by log-space root finding far out on S
    ch = Channel(0.5, 0.2)
    lo, hi = asymptote_slopes(ch)
    s = 300.0
    edges = region_boundary(ch, s, INDIVIDUAL, m_max=5.0 * s, n_scan=6000)
    assert len(edges) == 2
    assert edges[0] / s == pytest.approx(lo, rel=2e-3)
    assert edges[1] / s == pytest.approx(hi, rel=2e-3)


def test_asymptote_cases():
    lo, hi = asymptote_slopes(Channel(0.47, 0.1))
    assert 0 < lo < hi
    x0 = noise_threshold(0.5)
    lo, hi = asymptote_slopes(Channel(0.5, x0))
    assert lo == pytest.approx(hi, rel=1e-5)
    with pytest.raises(ModelDomainError):
        asymptote_slopes(Channel(0.5, 0.6))
    lo, hi = asymptote_slopes(Channel(0.5, 0.0))
    assert lo == pytest.approx(0.5 / (2 * math.sqrt(0.5))) and hi == math.inf


def test_threshold_examples():
    assert noise_threshold(0.5) == pytest.approx(bisect_threshold(0.5), abs=1e-10)
    assert noise_threshold(0.5) == pytest.approx(0.4516, abs=1e-4)
    assert noise_threshold(0.47) == pytest.approx(0.413, abs=1e-3)
    cubic = np.roots([1.0, 2.0, 0.0, -0.5])
    real = cubic[np.abs(cubic.imag) < 1e-12].real
    assert noise_threshold(0.5) == pytest.approx(real[real > 0][0], abs=1e-12)


@given(st.floats(0.01, 1.0))
def test_threshold_properties(eta):
    x0 = noise_threshold(eta)
    assert 0.0 < x0 < 2.0 * eta
    assert abs(threshold_polynomial(eta, x0)) < 1e-10
    assert x0 == pytest.approx(bisect_threshold(eta), abs=1e-10)


def test_threshold_rejects():
    with pytest.raises(ValueError):
        noise_threshold(0.0)
    with pytest.raises(ValueError):
        noise_threshold(1.2)


def test_separability_bound():
    assert separability_bound(0.5) == 1.0
    assert separability_bound(0.0) == 0.0
    assert separability_bound(1.0) == 2.0


# ---- integrated rate


def test_secure_rate_zero_above_threshold():
    for xi in (noise_threshold(0.5), 0.6, 1.0):
        for attack in (INDIVIDUAL, COLLECTIVE):
            assert secure_rate(Channel(0.5, xi), Modulation(3.0), attack).delta_i_total == 0.0


def test_secure_rate_positive_without_noise():
    va, res = optimize_modulation(Channel(0.47, 0.0), INDIVIDUAL)
    assert res.delta_i_total > 0.0
    assert res.integration_estimate_error >= 0.0


def test_secure_rate_converges_under_refinement():
    ch, mod = Channel(0.47, 0.1), Modulation(3.2)
    for attack in (INDIVIDUAL, COLLECTIVE):
        a = secure_rate(ch, mod, attack, tol=1e-7)
        b = secure_rate(ch, mod, attack, tol=1e-7, initial=32)
        assert a.delta_i_total == pytest.approx(b.delta_i_total, abs=2e-7)


def test_secure_rate_monte_carlo_oracle():
    ch, mod = Channel(0.47, 0.1), Modulation(3.2)
    rng = np.random.Generator(np.random.PCG64(2024))
    n = 10_000_000
    s = rng.normal(0.0, math.sqrt(mod.v_a), n)
    m = math.sqrt(ch.eta) * s + rng.normal(0.0, math.sqrt(1 + ch.xi), n)
    g = np.clip(delta_i_array(ch.eta, ch.xi, np.abs(s), np.abs(m), INDIVIDUAL), 0.0, None)
    mean, se = g.mean(), g.std(ddof=1) / math.sqrt(n)
    assert abs(mean - secure_rate(ch, mod, INDIVIDUAL).delta_i_total) < 3 * se


def test_zero_noise_continuity():
    mod = Modulation(2.0)
    s = np.linspace(0, 6, 61)[:, None]
    m = np.linspace(0, 6, 61)[None, :]
    for attack in (INDIVIDUAL, COLLECTIVE):
        a = delta_i_array(0.5, 0.0, s, m, attack)
        b = delta_i_array(0.5, 1e-9, s, m, attack)
        assert np.max(np.abs(a - b)) < 1e-6
        r0 = secure_rate(Channel(0.5, 0.0), mod, attack, tol=1e-8).delta_i_total
        r1 = secure_rate(Channel(0.5, 1e-9), mod, attack, tol=1e-8).delta_i_total
        assert abs(r0 - r1) < 1e-6


@pytest.mark.parametrize("eta,xi", [(0.3, 0.05), (0.6, 0.3), (0.9, 0.0)])
def test_secure_rate_bounded(eta, xi):
    res = secure_rate(Channel(eta, xi), Modulation(2.5), COLLECTIVE)
    assert 0.0 <= res.delta_i_total <= 1.0


def test_secure_rate_nonconvergence_reported():
    with pytest.raises(ConvergenceError) as info:
        secure_rate(Channel(0.47, 0.1), Modulation(3.2), INDIVIDUAL, tol=1e-15, rtol=1e-15)
    assert info.value.partial is not None


# ---- modulation


def test_optimize_modulation_local_max_and_grid_oracle():
    ch = Channel(0.47, 0.1)
    va, res = optimize_modulation(ch, INDIVIDUAL)
    assert 0.1 < va < 100 and not res.at_search_boundary
    rate = lambda v: secure_rate(ch, Modulation(v), INDIVIDUAL).delta_i_total  # noqa: E731
    assert res.delta_i_total >= rate(0.5 * va) and res.delta_i_total >= rate(2 * va)
    grid = {v: rate(v) for v in (0.5, 1, 2, 4, 8, 16, 32)}
    best = max(grid, key=grid.get)
    assert best / 2 <= va <= best * 2
    assert res.delta_i_total >= max(grid.values()) - 1e-6


def test_optimize_modulation_rejects_insecure():
    with pytest.raises(ModelDomainError):
        optimize_modulation(Channel(0.5, 0.5), INDIVIDUAL)


def test_rate_vanishes_at_threshold():
    x0 = noise_threshold(0.47)
    rates = [optimize_modulation(Channel(0.47, x), INDIVIDUAL)[1].delta_i_total for x in (x0 - 0.05, x0 - 0.01)]
    assert rates[1] < rates[0] < 1e-3


# ---- sweeps and contours


def test_sweep_shape_and_ordering():
    xi = [0.0, 0.1, 0.2, 0.3, 0.4, 0.42, 0.45]
    ind = sweep_noise(0.47, xi, INDIVIDUAL)
    col = sweep_noise(0.47, xi, COLLECTIVE)
    di = [p.delta_i for p in ind]
    dc = [p.delta_i for p in col]
    assert all(a >= b for a, b in zip(di, di[1:]))
    assert all(a >= b for a, b in zip(dc, dc[1:]))
    assert all(c <= i + 1e-9 for c, i in zip(dc, di))
    assert [p.v_a for p in ind][:5] == [p.v_a for p in col][:5]
    assert di[-2] == 0.0 and dc[-1] == 0.0 and ind[-1].insecure


def test_sweep_independent_of_threads():
    xi = [0.0, 0.15, 0.3]
    a = sweep_noise(0.47, xi, COLLECTIVE, va="reoptimize", threads=1)
    b = sweep_noise(0.47, xi, COLLECTIVE, va="reoptimize", threads=4)
    assert a == b


def test_sweep_fixed_va():
    pts = sweep_noise(0.47, [0.1], INDIVIDUAL, va=3.0)
    assert pts[0].v_a == 3.0
    assert pts[0].delta_i == secure_rate(Channel(0.47, 0.1), Modulation(3.0), INDIVIDUAL).delta_i_total


def test_contour_flags_and_levels():
    cells = contour_grid([0.2, 0.5], [0.0, 0.1, 0.5, 1.0], INDIVIDUAL, threads=2)
    by = {(c.eta, c.xi): c for c in cells}
    assert by[(0.2, 0.1)].delta_i > 0.0
    assert by[(0.2, 0.5)].separable and by[(0.2, 0.5)].insecure
    assert by[(0.5, 1.0)].separable
    assert not by[(0.5, 0.1)].separable
    for c in cells:
        assert c.separable == (c.xi >= 2 * c.eta)
        assert 0.0 <= c.delta_i <= 1.0
    levels = contour_levels(cells, (1e-1, 1e-2, 1e-7, 1e-11))
    # at eta=0.2 the xi=0.1 rate is about 1e-10: above 1e-11, below 1e-7
    assert levels[1e-7][0.2] == 0.0
    assert levels[1e-11][0.2] == 0.1
    assert levels[1e-2][0.5] >= 0.0
