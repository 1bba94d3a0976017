"""Post-selection regions, secure key rates, modulation optimisation and thresholds."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, ModelDomainError
from .eve_model import (
    ALICE,
    BOB,
    COLLECTIVE,
    INDIVIDUAL,
    check_attack,
    check_model,
    critical_line,
    eve_deficit,
    holevo_deficits,
    log_levitin_deficit,
)
from .info_theory import (
    AnnouncedPair,
    Channel,
    Modulation,
    ab_deficit,
    folded_density,
    log_binary_entropy,
    log_error_probability,
)
from .numerics import adaptive_cubature, golden_section_max

log = logging.getLogger(__name__)

# Both conventions count one sifted symbol per channel use; only the label differs.
RATE_CONVENTIONS = {"sifted": 1.0, "channel-use": 1.0}

VA_SEARCH = (0.1, 100.0)
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class RateBreakdown:
    i_ab: float
    i_e: float
    delta_i: float
    attack: str
    target_used: str


@dataclass(frozen=True)
class RegionMap:
    s_grid: np.ndarray
    m_grid: np.ndarray
    values: np.ndarray
    kept: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.s_grid.size, self.m_grid.size):
            raise ValueError("values shape does not match grids")
        if np.any(np.diff(self.s_grid) <= 0) or np.any(np.diff(self.m_grid) <= 0):
            raise ValueError("grids must be strictly increasing")


@dataclass(frozen=True)
class SecureRateResult:
    delta_i_total: float
    v_a_used: float
    attack: str
    integration_estimate_error: float
    at_search_boundary: bool = False


def delta_i_array(eta, xi, s, m, attack):
    """I_AB - I_E over arrays of announced magnitudes (difference of deficits)."""
    check_model(eta, xi)
    d_eve, _ = eve_deficit(eta, xi, s, m, attack)
    d_ab = ab_deficit(eta, xi, s, m)
    # once both deficits are subnormal their difference is rounding noise
    resolved = np.maximum(d_eve, d_ab) >= _TINY
    return np.where(resolved, d_eve - d_ab, 0.0)


def delta_i_point(ch: Channel, pt: AnnouncedPair, attack: str = INDIVIDUAL) -> RateBreakdown:
    check_attack(attack)
    check_model(ch.eta, ch.xi)
    d_ab = float(ab_deficit(ch.eta, ch.xi, pt.abs_s, pt.abs_m))
    d_eve, bob = eve_deficit(ch.eta, ch.xi, pt.abs_s, pt.abs_m, attack)
    d_eve = float(d_eve)
    if attack == INDIVIDUAL or ch.xi == 0.0:
        # the individual bound is target independent; report the side of the critical line
        bob = ch.xi > 0.0 and pt.abs_m > critical_line(ch, pt.abs_s)
    return RateBreakdown(
        i_ab=1.0 - d_ab,
        i_e=1.0 - d_eve,
        delta_i=d_eve - d_ab,
        attack=attack,
        target_used=BOB if bool(bob) else ALICE,
    )


def postselect_keep(ch: Channel, pt: AnnouncedPair, attack: str = INDIVIDUAL) -> bool:
    return delta_i_point(ch, pt, attack).delta_i > 0.0


def region_map(ch: Channel, attack: str, s_max: float, m_max: float, n_s: int, n_m: int) -> RegionMap:
    """Dense Delta-I grid over [0, s_max] x [0, m_max]."""
    if s_max <= 0 or m_max <= 0 or n_s < 2 or n_m < 2:
        raise ValueError("extents must be positive and counts at least 2")
    s = np.linspace(0.0, s_max, n_s)
    m = np.linspace(0.0, m_max, n_m)
    values = delta_i_array(ch.eta, ch.xi, s[:, None], m[None, :], attack)
    return RegionMap(s, m, values, values > 0.0)


def _log_gap(ch, s, m, attack):
    """log(1 - I_E) - log(1 - I_AB); positive exactly where the point is kept."""
    log_ab = log_binary_entropy(log_error_probability(ch.eta, ch.xi, s, m))
    if attack == INDIVIDUAL:
        log_eve = log_levitin_deficit(ch.eta, ch.xi, s, m)
    else:
        d_alice, d_bob = holevo_deficits(ch.eta, ch.xi, s, m)
        with np.errstate(divide="ignore"):
            log_eve = np.log(np.minimum(d_alice, d_bob))
    return log_eve - log_ab


def region_boundary(ch: Channel, abs_s: float, attack: str = INDIVIDUAL, m_max=None, n_scan=4000):
    """Values of |m_B| where the kept region starts or ends at fixed |S_A|.

    Works in log space, so it stays accurate far out where both rates differ
    from 1 by less than machine precision.
    """
    check_attack(attack)
    check_model(ch.eta, ch.xi)
    if m_max is None:
        m_max = 8.0 * abs_s + 8.0
    grid = np.linspace(m_max / n_scan, m_max, n_scan)
    gap = _log_gap(ch, abs_s, grid, attack)
    sign = np.sign(np.where(np.isfinite(gap), gap, -1.0))
    roots = []
    for k in np.nonzero(np.diff(sign) != 0)[0]:
        roots.append(brentq(lambda m: float(_log_gap(ch, abs_s, m, attack)), grid[k], grid[k + 1], xtol=1e-12))
    return roots


def asymptote_slopes(ch: Channel):
    """Slopes of the two lines |m_B| = slope * |S_A| bounding the region at large |S_A|.

    Obtained by matching the exponential decay of 1 - I_AB with that of
    1 - phi(sqrt(1 - f1^2)) along rays, which gives the quadratic
    xi(xi+2) r^2 - 2 sqrt(eta)(1+xi) r + (1+xi-eta) = 0.
    For xi = 0 the upper line is at infinity.
    """
    eta, xi = ch.eta, ch.xi
    if xi == 0.0:
        return (1.0 - eta) / (2.0 * math.sqrt(eta)), math.inf
    disc = eta * (1.0 + xi) ** 2 - xi * (xi + 2.0) * (xi + 1.0 - eta)
    if disc < -1e-12:
        raise ModelDomainError(f"no secure asymptotes: xi={xi} exceeds the noise threshold for eta={eta}")
    lead = math.sqrt(eta) * (1.0 + xi)
    root = math.sqrt(max(disc, 0.0))
    denom = xi * (xi + 2.0)
    # smaller root via the product of roots to avoid cancellation
    upper = (lead + root) / denom
    lower = (1.0 + xi - eta) / (denom * upper)
    return lower, upper


def threshold_polynomial(eta, xi):
    """Zero at the noise threshold; negative below it (secure side)."""
    return xi * (xi + 2.0) * (xi + 1.0 - eta) - eta * (1.0 + xi) ** 2


def noise_threshold(eta: float) -> float:
    """Excess noise above which no post-selection region survives."""
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    lo, hi = 1e-6, 2.0 * eta - 1e-6
    if threshold_polynomial(eta, lo) * threshold_polynomial(eta, hi) > 0:
        raise ConvergenceError(f"threshold not bracketed in ({lo}, {hi}) for eta={eta}")
    return brentq(lambda x: threshold_polynomial(eta, x), lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200)


def separability_bound(eta: float) -> float:
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    return 2.0 * eta


def integration_box(ch: Channel, mod: Modulation, width=8.0):
    return width * math.sqrt(mod.v_a), width * math.sqrt(ch.eta * mod.v_a + 1.0 + ch.xi)


def secure_rate(ch: Channel, mod: Modulation, attack: str = INDIVIDUAL, tol=1e-6, rtol=1e-4,
                initial=16) -> SecureRateResult:
    """Weighted integral of the positive part of Delta-I over announced magnitudes."""
    check_attack(attack)
    check_model(ch.eta, ch.xi)
    if ch.xi > 0.0 and ch.xi >= noise_threshold(ch.eta):
        return SecureRateResult(0.0, mod.v_a, attack, 0.0)
    s_hi, m_hi = integration_box(ch, mod)

    def integrand(s, m):
        gain = delta_i_array(ch.eta, ch.xi, s, m, attack)
        return folded_density(ch, mod, s, m) * np.clip(gain, 0.0, None)

    res = adaptive_cubature(integrand, 0.0, s_hi, 0.0, m_hi, tol=tol, rtol=rtol, initial=initial)
    return SecureRateResult(max(res.value, 0.0), mod.v_a, attack, res.error)


def optimize_modulation(ch: Channel, attack: str = INDIVIDUAL, bounds=VA_SEARCH, rel_tol=1e-3, tol=1e-6):
    """Maximise secure_rate over V_A by golden-section search on log V_A."""
    check_attack(attack)
    check_model(ch.eta, ch.xi)
    if ch.xi > 0.0 and ch.xi >= noise_threshold(ch.eta):
        raise ModelDomainError(f"xi={ch.xi} is at or above the noise threshold for eta={ch.eta}")
    cache = {}

    def rate(log_va):
        if log_va not in cache:
            cache[log_va] = secure_rate(ch, Modulation(math.exp(log_va)), attack, tol=tol)
        return cache[log_va].delta_i_total

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    found = golden_section_max(rate, lo, hi, tol=math.log1p(rel_tol))
    best = cache[found.x]
    if found.at_boundary:
        log.warning("V_A optimum pinned to search edge %.3g (eta=%g, xi=%g)", math.exp(found.x), ch.eta, ch.xi)
    best = SecureRateResult(best.delta_i_total, best.v_a_used, attack, best.integration_estimate_error,
                            at_search_boundary=found.at_boundary)
    return best.v_a_used, best


def _pool_map(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SweepPoint:
    xi: float
    v_a: float
    delta_i: float
    attack: str
    insecure: bool


def _rate_with_va(eta, xi, attack, va, tol):
    """Rate at one (eta, xi) for va = 'reoptimize', 'individual' or a number."""
    ch = Channel(eta, xi)
    if xi > 0.0 and xi >= noise_threshold(eta):
        return math.nan, 0.0, True
    if va == "reoptimize":
        v, res = optimize_modulation(ch, attack, tol=tol)
        return v, res.delta_i_total, False
    if va == "individual":
        v, res = optimize_modulation(ch, INDIVIDUAL, tol=tol)
        if attack == INDIVIDUAL:
            return v, res.delta_i_total, False
    else:
        v = float(va)
    return v, secure_rate(ch, Modulation(v), attack, tol=tol).delta_i_total, False


def sweep_noise(eta, xi_list, attack=INDIVIDUAL, va="individual", threads=None, tol=1e-6):
    """Delta-I against excess noise at fixed transmission.

    ``va='individual'`` holds V_A at the individual-attack optimum for each xi
    (the convention used when comparing attacks on one data set);
    ``'reoptimize'`` optimises per attack; a number fixes V_A.
    """
    check_attack(attack)

    def one(xi):
        v, d, insecure = _rate_with_va(eta, xi, attack, va, tol)
        return SweepPoint(float(xi), v, d, attack, insecure)

    return _pool_map(one, xi_list, threads)


@dataclass(frozen=True)
class ContourCell:
    eta: float
    xi: float
    v_a: float
    delta_i: float
    insecure: bool
    separable: bool


def contour_grid(eta_grid, xi_grid, attack=INDIVIDUAL, threads=None, tol=1e-6):
    """Optimised Delta-I over an (eta, xi) grid with insecure/separable flags."""
    check_attack(attack)
    cells = [(float(e), float(x)) for e in eta_grid for x in xi_grid]

    def one(cell):
        eta, xi = cell
        separable = xi >= separability_bound(eta)
        insecure = xi > 0.0 and xi >= noise_threshold(eta)
        if insecure or (eta >= 1.0 and xi > 0.0):
            return ContourCell(eta, xi, math.nan, 0.0, True, separable)
        v, res = optimize_modulation(Channel(eta, xi), attack, tol=tol)
        return ContourCell(eta, xi, v, res.delta_i_total, False, separable)

    return _pool_map(one, cells, threads)


def contour_levels(cells, levels=(1e-1, 1e-2, 1e-3, 1e-4, 1e-7)):
    """For each transmission, the largest grid xi whose rate still reaches each level."""
    out = {}
    for level in levels:
        per_eta = {}
        for c in cells:
            if c.delta_i >= level:
                per_eta[c.eta] = max(per_eta.get(c.eta, -math.inf), c.xi)
        out[level] = dict(sorted(per_eta.items()))
    return out
