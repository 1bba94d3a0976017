"""Channel model, Shannon quantities and densities for sign-encoded Gaussian CV-QKD.

All quantities are in shot-noise units (vacuum quadrature variance = 1).
Functions accept scalars or numpy arrays unless they take the dataclass
value types, which are scalar by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Channel:
    """Lossy Gaussian channel: transmission ``eta`` and excess noise ``xi``."""

    eta: float
    xi: float

    def __post_init__(self):
        _finite("eta", self.eta)
        _finite("xi", self.xi)
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if self.xi < 0.0:
            raise ValueError(f"xi must be non-negative, got {self.xi}")

    @property
    def noise_variance(self) -> float:
        """Variance of Bob's outcome around sqrt(eta)*S_A."""
        return 1.0 + self.xi


@dataclass(frozen=True)
class Modulation:
    """Alice's Gaussian encoding variance, shared by both quadratures."""

    v_a: float

    def __post_init__(self):
        _finite("v_a", self.v_a)
        if self.v_a <= 0.0:
            raise ValueError(f"v_a must be positive, got {self.v_a}")


@dataclass(frozen=True)
class AnnouncedPair:
    """Publicly announced magnitudes (|S_A|, |m_B|)."""

    abs_s: float
    abs_m: float

    def __post_init__(self):
        _finite("abs_s", self.abs_s)
        _finite("abs_m", self.abs_m)
        if self.abs_s < 0.0 or self.abs_m < 0.0:
            raise ValueError("announced magnitudes must be non-negative")


def phi(x):
    """Shannon information of a binary symmetric channel with bias ``x``.

    ``phi(x) = [(1+x) log2(1+x) + (1-x) log2(1-x)] / 2``, defined on [0, 1].
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("phi is defined on [0, 1]")
    # x atanh(x) + log(1 - x^2)/2 only cancels by a factor of two as x -> 0
    near_one = np.abs(1.0 - arr) < 1e-15
    safe = np.where(near_one, 0.0, arr)
    out = (safe * np.arctanh(safe) + 0.5 * np.log1p(-safe * safe)) / LN2
    out = np.where(near_one, 1.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def binary_entropy(p):
    """H2(p) in bits, accurate for p close to 0."""
    p = np.asarray(p, dtype=float)
    q = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(q > 0.0, -q * np.log(np.where(q > 0.0, q, 1.0)), 0.0)
        b = np.where(q < 1.0, -(1.0 - q) * np.log1p(-np.where(q < 1.0, q, 0.0)), 0.0)
    out = (a + b) / LN2
    return float(out) if np.ndim(out) == 0 else out


def log_binary_entropy(log_p):
    """Natural log of H2(p) given log(p), for p <= 1/2; survives p underflow."""
    log_p = np.asarray(log_p, dtype=float)
    p = np.exp(log_p)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 1e-300, -np.log1p(-p) / np.where(p > 1e-300, p, 1.0), 1.0)
    bracket = (-log_p + (1.0 - p) * ratio) / LN2
    with np.errstate(divide="ignore"):
        return log_p + np.log(bracket)


def _sign_argument(eta, xi, s, m):
    return 2.0 * np.sqrt(eta) * np.abs(s) * np.abs(m) / (1.0 + xi)


def log_error_probability(eta, xi, s, m):
    """log P_e for announced magnitudes; finite for arbitrarily large arguments."""
    z = _sign_argument(eta, xi, np.asarray(s, float), np.asarray(m, float))
    return -np.logaddexp(0.0, z)


def error_probability_array(eta, xi, s, m):
    """Vectorised P_e = 1 / (1 + exp(2 sqrt(eta) |s m| / (1 + xi)))."""
    z = _sign_argument(eta, xi, np.asarray(s, float), np.asarray(m, float))
    # expit form; exp(-z) underflows to 0 instead of overflowing
    return np.exp(-z) / (1.0 + np.exp(-z)) if np.ndim(z) else _scalar_pe(float(z))


def _scalar_pe(z):
    if z > 700.0:
        return math.exp(-z)
    return 1.0 / (1.0 + math.exp(z))


def error_probability(ch: Channel, pt: AnnouncedPair) -> float:
    """Probability that Bob's sign differs from Alice's at the announced point."""
    return _scalar_pe(float(_sign_argument(ch.eta, ch.xi, pt.abs_s, pt.abs_m)))


def ab_deficit(eta, xi, s, m):
    """1 - I_AB = H2(P_e), kept separately so tiny rates keep relative precision."""
    return binary_entropy(error_probability_array(eta, xi, s, m))


def mutual_info_ab(ch: Channel, pt: AnnouncedPair) -> float:
    """I_AB = phi(1 - 2 P_e) in bits per sifted symbol."""
    return 1.0 - float(binary_entropy(error_probability(ch, pt)))


def gaussian_pdf(x, var):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x / var - _LOG_SQRT_2PI - 0.5 * np.log(var))
    return float(out) if np.ndim(out) == 0 else out


def conditional_density(ch: Channel, s_a, m_b):
    """p(m_B | S_A): normal in m_b with mean sqrt(eta) s_a and variance 1 + xi."""
    return gaussian_pdf(np.asarray(m_b, float) - math.sqrt(ch.eta) * np.asarray(s_a, float), 1.0 + ch.xi)


def joint_density(ch: Channel, mod: Modulation, s_a, m_b):
    """p(S_A, m_B) = N(s_a; 0, V_A) p(m_b | s_a)."""
    return gaussian_pdf(s_a, mod.v_a) * conditional_density(ch, s_a, m_b)


def folded_density(ch: Channel, mod: Modulation, abs_s, abs_m):
    """Density of the announced magnitudes, summed over the four sign choices."""
    abs_s = np.asarray(abs_s, float)
    abs_m = np.asarray(abs_m, float)
    return 2.0 * gaussian_pdf(abs_s, mod.v_a) * (
        conditional_density(ch, abs_s, abs_m) + conditional_density(ch, abs_s, -abs_m)
    )
