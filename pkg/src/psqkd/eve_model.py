"""Entangling-cloner eavesdropper: conditional states, overlaps and information bounds.

Eve replaces the lossy line by a beam splitter of transmission ``eta`` whose
second port is fed by one arm of an EPR pair with squeezing ``V_s``.  After
Bob announces |m_B| her two modes (E2 = tapped beam, E1 = kept EPR arm) are
in one of four unnormalised pure states ``|psi_b^a>`` labelled by Alice's bit
``a`` and Bob's bit ``b`` (bit 0 = positive sign).

Every overlap between these states is a two-dimensional Gaussian integral.
Carrying it out gives, for sign vectors ``(sa_i, sb_i)`` and ``(sa_j, sb_j)``::

    <i|j> = exp(-(sbar_b M - sqrt(eta) sbar_a S)^2 / (2(1+xi))
                - (db sqrt(eta) M - da S)^2 / 8
                - (1-eta+xi) db^2 M^2 / 8) / sqrt(2 pi (1+xi))

with ``sbar`` the mean and ``d`` the difference of the two signs.  From this
the normalised overlaps that enter the bounds are

    f1 (00 vs 11):  -log f1 = [xi(xi+2) M^2 + (1+xi-eta) S^2 - 2 sqrt(eta) xi M S] / (2(1+xi))
    f2 (01 vs 10):  same with +2 sqrt(eta) xi M S
    gx (same a):    -log gx = xi(xi+2) M^2 / (2(1+xi))
    gy (same b):    -log gy = (1+xi-eta) S^2 / (2(1+xi))

``gx`` pairs states Eve must merge when attacking Alice, ``gy`` when attacking
Bob.  They coincide on the critical line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, ModelDomainError
from .info_theory import (
    LN2,
    AnnouncedPair,
    Channel,
    binary_entropy,
    log_binary_entropy,
    log_error_probability,
    phi,
)

ALICE = "alice"
BOB = "bob"
TARGETS = (ALICE, BOB)
INDIVIDUAL = "individual"
COLLECTIVE = "collective"
ATTACKS = (INDIVIDUAL, COLLECTIVE)


@dataclass(frozen=True)
class BitPair:
    a: int
    b: int

    def __post_init__(self):
        if self.a not in (0, 1) or self.b not in (0, 1):
            raise ValueError("bits must be 0 or 1")

    @property
    def signs(self):
        return (1 - 2 * self.a, 1 - 2 * self.b)

    def flipped(self) -> "BitPair":
        return BitPair(1 - self.a, 1 - self.b)


BIT_ORDER = (BitPair(0, 0), BitPair(0, 1), BitPair(1, 0), BitPair(1, 1))


def check_model(eta, xi):
    if eta >= 1.0 and xi > 0.0:
        raise ModelDomainError(
            "entangling cloner needs eta < 1 when xi > 0 (no beam-splitter tap to inject noise)"
        )


def check_attack(attack):
    if attack not in ATTACKS:
        raise ValueError(f"attack must be one of {ATTACKS}, got {attack!r}")


def check_target(target):
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")


def epr_squeezing(eta: float, xi: float) -> float:
    """Root V_s >= 1 of (V_s + 1/V_s)/2 = (1 - eta + xi)/(1 - eta)."""
    if eta >= 1.0:
        if xi > 0.0:
            raise ModelDomainError("EPR variance diverges at eta = 1 with xi > 0")
        return 1.0
    k = (1.0 - eta + xi) / (1.0 - eta)
    return k + math.sqrt(max(k * k - 1.0, 0.0))


@dataclass(frozen=True)
class EveWavefunctionParams:
    channel: Channel
    point: AnnouncedPair
    v_s: float = field(init=False)

    def __post_init__(self):
        check_model(self.channel.eta, self.channel.xi)
        object.__setattr__(self, "v_s", epr_squeezing(self.channel.eta, self.channel.xi))


def log_overlap_signed(eta, xi, s, m, sa_i, sb_i, sa_j, sb_j):
    """log <psi_i|psi_j> for sign vectors (sa, sb); broadcasts over s and m."""
    s = np.asarray(s, float)
    m = np.asarray(m, float)
    mean_a = 0.5 * (sa_i + sa_j)
    mean_b = 0.5 * (sb_i + sb_j)
    da = sa_i - sa_j
    db = sb_i - sb_j
    centre = mean_b * m - math.sqrt(eta) * mean_a * s
    dt = db * math.sqrt(eta) * m - da * s
    # K * (1 - eta) with K = (V_s + 1/V_s)/2; finite even as eta -> 1
    epr = (1.0 - eta + xi) * db * db * m * m
    return (
        -centre * centre / (2.0 * (1.0 + xi))
        - dt * dt / 8.0
        - epr / 8.0
        - 0.5 * math.log(2.0 * math.pi * (1.0 + xi))
    )


def overlap(params: EveWavefunctionParams, i: BitPair, j: BitPair) -> float:
    """Unnormalised overlap <psi_i|psi_j> in closed form."""
    ch, pt = params.channel, params.point
    return float(np.exp(log_overlap_signed(ch.eta, ch.xi, pt.abs_s, pt.abs_m, *i.signs, *j.signs)))


def log_psi(e2, e1, params: EveWavefunctionParams, k: BitPair):
    """Log-amplitude of |psi_b^a> at position (e2, e1) of Eve's two modes.

    The two delta functions in the defining double integral are resolved by
    inverting (x2, x3) -> (e1, e2); the Jacobian sqrt(eta) cancels the 1/sqrt(eta)
    prefactor.
    """
    eta = params.channel.eta
    s, m = params.point.abs_s, params.point.abs_m
    sa, sb = k.signs
    vs = params.v_s
    shift = -sb * math.sqrt((1.0 - eta) / eta) * m
    plus = math.sqrt(2.0) * e1
    minus = -math.sqrt(2.0 * eta) * (e2 - shift)
    x2 = 0.5 * (plus + minus)
    x3 = 0.5 * (plus - minus)
    first = sb * m / math.sqrt(eta) - sa * s - math.sqrt((1.0 - eta) / (2.0 * eta)) * (x3 - x2)
    quad = first * first + x2 * x2 * vs + x3 * x3 / vs
    return -0.25 * quad - 0.75 * math.log(2.0 * math.pi)


def _quadratic_fit(fn):
    """Exact centre and covariance of exp(fn) when fn is a concave quadratic in 2-D."""
    f00 = fn(0.0, 0.0)
    fx, fmx = fn(1.0, 0.0), fn(-1.0, 0.0)
    fy, fmy = fn(0.0, 1.0), fn(0.0, -1.0)
    fxy = fn(1.0, 1.0)
    hxx = fx + fmx - 2.0 * f00
    hyy = fy + fmy - 2.0 * f00
    gx = 0.5 * (fx - fmx)
    gy = 0.5 * (fy - fmy)
    hxy = fxy - f00 - gx - gy - 0.5 * hxx - 0.5 * hyy
    hess = np.array([[hxx, hxy], [hxy, hyy]])
    grad = np.array([gx, gy])
    centre = np.linalg.solve(-hess, grad)
    cov = np.linalg.inv(-hess)
    return centre, cov


def oracle_overlap(params: EveWavefunctionParams, i: BitPair, j: BitPair, tol: float = 1e-10) -> float:
    """Overlap by adaptive 2-D quadrature of the position wavefunctions.

    Independent of the closed form: the integrand is built directly from the
    wavefunction definition, and the only analytic input is the location and
    width of its Gaussian mass, used to truncate the domain.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    def log_integrand(e2, e1):
        return log_psi(e2, e1, params, i) + log_psi(e2, e1, params, j)

    centre, cov = _quadratic_fit(log_integrand)
    n_sigma = max(8.0, math.sqrt(2.0 * math.log(1.0 / tol)) + 2.0)
    half = n_sigma * np.sqrt(np.diag(cov))
    lo, hi = centre - half, centre + half
    value, err = integrate.dblquad(
        lambda e1, e2: math.exp(log_integrand(e2, e1)),
        lo[0], hi[0], lo[1], hi[1],
        epsabs=0.1 * tol, epsrel=0.0,
    )
    if not err <= tol:
        raise ConvergenceError(f"overlap quadrature stalled with error estimate {err:.3g}", partial=value)
    return value


@dataclass(frozen=True)
class GramMatrix4:
    """Overlaps among the four conditional states in BIT_ORDER."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    def __getitem__(self, key):
        i, j = key
        return float(self.entries[BIT_ORDER.index(i), BIT_ORDER.index(j)])

    def normalized(self) -> np.ndarray:
        d = np.sqrt(np.diag(self.entries))
        return self.entries / np.outer(d, d)


def gram_matrix(ch: Channel, pt: AnnouncedPair) -> GramMatrix4:
    params = EveWavefunctionParams(ch, pt)
    g = np.empty((4, 4))
    for r, i in enumerate(BIT_ORDER):
        for c, j in enumerate(BIT_ORDER):
            g[r, c] = overlap(params, i, j)
    return GramMatrix4(g)


def critical_line(ch: Channel, abs_s: float) -> float:
    """|m_B| at which attacking Alice and attacking Bob are equivalent.

    Returns ``math.inf`` for xi = 0, where no finite crossing exists.
    """
    if abs_s < 0.0:
        raise ValueError("abs_s must be non-negative")
    if ch.xi == 0.0:
        return math.inf
    return math.sqrt((1.0 + ch.xi - ch.eta) / ((1.0 + ch.xi) ** 2 - 1.0)) * abs_s


class LogOverlaps(NamedTuple):
    log_f1: np.ndarray
    log_f2: np.ndarray
    log_gx: np.ndarray
    log_gy: np.ndarray
    log_pe: np.ndarray


def log_normalized_overlaps(eta, xi, s, m) -> LogOverlaps:
    """Logs of f1, f2, gx, gy and P_e, vectorised over magnitudes."""
    s = np.abs(np.asarray(s, float))
    m = np.abs(np.asarray(m, float))
    norm = 2.0 * (1.0 + xi)
    mm = xi * (xi + 2.0) * m * m
    ss = (1.0 + xi - eta) * s * s
    cross = 2.0 * math.sqrt(eta) * xi * m * s
    return LogOverlaps(
        log_f1=-(mm + ss - cross) / norm,
        log_f2=-(mm + ss + cross) / norm,
        log_gx=-mm / norm,
        log_gy=-ss / norm,
        log_pe=log_error_probability(eta, xi, s, m),
    )


def _levitin_q(log_f):
    # (1 - sqrt(1 - f^2)) / 2 without cancellation
    f2 = np.exp(2.0 * log_f)
    return f2 / (2.0 * (1.0 + np.sqrt(np.clip(1.0 - f2, 0.0, 1.0))))


def levitin_deficit(eta, xi, s, m):
    """1 - I_E^(i).  Target independent: given the match/mismatch hint both
    targets reduce to the same pairs (00 vs 11) and (01 vs 10)."""
    check_model(eta, xi)
    lo = log_normalized_overlaps(eta, xi, s, m)
    pe = np.exp(lo.log_pe)
    return (1.0 - pe) * binary_entropy(_levitin_q(lo.log_f1)) + pe * binary_entropy(_levitin_q(lo.log_f2))


def log_levitin_deficit(eta, xi, s, m):
    """log(1 - I_E^(i)); stays finite where the deficit underflows."""
    check_model(eta, xi)
    lo = log_normalized_overlaps(eta, xi, s, m)

    def log_q(log_f):
        f2 = np.exp(2.0 * log_f)
        return 2.0 * log_f - np.log(2.0 * (1.0 + np.sqrt(np.clip(1.0 - f2, 0.0, 1.0))))

    log_same = np.log1p(-np.exp(lo.log_pe))
    return np.logaddexp(
        log_same + log_binary_entropy(log_q(lo.log_f1)),
        lo.log_pe + log_binary_entropy(log_q(lo.log_f2)),
    )


def _eta_log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0.0, -x * np.log(np.where(x > 0.0, x, 1.0)), 0.0) / LN2


def _sector(a, c, b):
    """Eigenvalues (large, small) of [[a, b], [b, c]] for a PSD 2x2 block."""
    r = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    big = 0.5 * (a + c) + r
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big > 0.0, np.clip(a * c - b * b, 0.0, None) / np.where(big > 0.0, big, 1.0), 0.0)
    return big, small, r


def holevo_deficits(eta, xi, s, m):
    """(1 - chi_alice, 1 - chi_bob) for the collective attack, vectorised.

    The total state of Eve is flip symmetric, so its 4x4 weighted Gram matrix
    splits into two 2x2 blocks (even and odd under the global bit flip).  The
    deficit is assembled from terms that are each small where the deficit is
    small, which keeps relative precision far below 1e-16.
    """
    check_model(eta, xi)
    lo = log_normalized_overlaps(eta, xi, s, m)
    pe = np.exp(lo.log_pe)
    ps = 1.0 - pe
    f1, f2 = np.exp(lo.log_f1), np.exp(lo.log_f2)
    gx, gy = np.exp(lo.log_gx), np.exp(lo.log_gy)
    mix = pe * ps

    a_p, a_m = 0.5 * ps * (1.0 + f1), 0.5 * ps * (1.0 - f1)
    c_p, c_m = 0.5 * pe * (1.0 + f2), 0.5 * pe * (1.0 - f2)
    b_p, b_m = 0.5 * np.sqrt(mix) * (gx + gy), 0.5 * np.sqrt(mix) * (gx - gy)
    big_p, small_p, r_p = _sector(a_p, c_p, b_p)
    big_m, small_m, r_m = _sector(a_m, c_m, b_m)

    # big_p - big_m from exact differences of the block entries
    diff_r2 = 0.25 * (ps * f1 - pe * f2) * (1.0 - 2.0 * pe) + mix * gx * gy
    with np.errstate(divide="ignore", invalid="ignore"):
        diff_r = np.where(r_p + r_m > 0.0, diff_r2 / np.where(r_p + r_m > 0.0, r_p + r_m, 1.0), 0.0)
    gap = 0.5 * (ps * f1 + pe * f2) + diff_r
    small = small_p + small_m
    total_big = 1.0 - small
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(total_big > 0.0, np.abs(gap) / np.where(total_big > 0.0, total_big, 1.0), 0.0)
    d = np.clip(d, 0.0, 1.0)
    one_minus_s = (
        small
        + total_big * phi(d)
        + total_big * np.log1p(-small) / LN2
        - _eta_log(small_p)
        - _eta_log(small_m)
    )

    def sub_entropy(g):
        c = mix * (1.0 - g * g)
        mu = 2.0 * c / (1.0 + np.sqrt(np.clip(1.0 - 4.0 * c, 0.0, None)))
        return binary_entropy(mu)

    d_alice = np.clip(one_minus_s + sub_entropy(gx), 0.0, 1.0)
    d_bob = np.clip(one_minus_s + sub_entropy(gy), 0.0, 1.0)
    return d_alice, d_bob


def entropy_from_gram(weights, gram) -> float:
    """Von Neumann entropy (bits) of sum_i w_i |i><i| from normalised overlaps."""
    w = np.asarray(weights, dtype=float)
    g = np.asarray(gram, dtype=float)
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
    if g.shape != (w.size, w.size):
        raise ValueError("gram shape does not match weights")
    root = np.sqrt(w)
    lam = np.linalg.eigvalsh(np.outer(root, root) * g)
    if lam.min() < -1e-9:
        raise ValueError(f"gram matrix is not positive semidefinite (eigenvalue {lam.min():.3g})")
    lam = np.clip(lam, 0.0, 1.0)
    lam = lam[lam > 1e-15]
    return float(-np.sum(lam * np.log2(lam)))


def _scalar(x):
    return float(np.asarray(x))


def levitin_bound(ch: Channel, pt: AnnouncedPair, target: str = ALICE) -> float:
    """Individual-attack bound p1 phi(sqrt(1-f1^2)) + p2 phi(sqrt(1-f2^2))."""
    check_target(target)
    return 1.0 - _scalar(levitin_deficit(ch.eta, ch.xi, pt.abs_s, pt.abs_m))


def holevo_bound(ch: Channel, pt: AnnouncedPair, target: str = ALICE) -> float:
    """Collective-attack bound chi = S(rho) - S(rho_0)/2 - S(rho_1)/2."""
    check_target(target)
    d_alice, d_bob = holevo_deficits(ch.eta, ch.xi, pt.abs_s, pt.abs_m)
    return 1.0 - _scalar(d_alice if target == ALICE else d_bob)


def ensemble(ch: Channel, pt: AnnouncedPair):
    """Weights and normalised Gram matrix of Eve's four states (BIT_ORDER)."""
    gram = gram_matrix(ch, pt)
    norms = np.diag(gram.entries)
    return norms / norms.sum(), gram.normalized()


def holevo_bound_spectral(ch: Channel, pt: AnnouncedPair, target: str = ALICE) -> float:
    """Same bound through the generic eigen-spectrum of the weighted Gram matrix."""
    check_target(target)
    weights, gram = ensemble(ch, pt)
    total = entropy_from_gram(weights, gram)
    key = 0 if target == ALICE else 1
    parts = []
    for bit in (0, 1):
        idx = [k for k, bp in enumerate(BIT_ORDER) if (bp.a, bp.b)[key] == bit]
        w = weights[idx]
        parts.append(entropy_from_gram(w / w.sum(), gram[np.ix_(idx, idx)]))
    return total - 0.5 * parts[0] - 0.5 * parts[1]


def eve_deficit(eta, xi, s, m, attack):
    """Smallest deficit over targets, and a mask that is True where Bob is the better target."""
    check_attack(attack)
    if attack == INDIVIDUAL:
        d = levitin_deficit(eta, xi, s, m)
        lo = log_normalized_overlaps(eta, xi, s, m)
        return d, lo.log_gy > lo.log_gx
    d_alice, d_bob = holevo_deficits(eta, xi, s, m)
    return np.minimum(d_alice, d_bob), d_bob < d_alice


def eve_info(ch: Channel, pt: AnnouncedPair, attack: str = INDIVIDUAL):
    """Eve's best information over both targets: (bits, target used)."""
    d, bob = eve_deficit(ch.eta, ch.xi, pt.abs_s, pt.abs_m, attack)
    if ch.xi == 0.0:
        bob = False
    return 1.0 - _scalar(d), BOB if bool(bob) else ALICE
