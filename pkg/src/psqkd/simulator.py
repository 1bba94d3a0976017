"""Monte Carlo emulation of the post-selection protocol.

Alice draws Gaussian encodings for both quadratures, the channel scales them
by sqrt(eta) and adds Gaussian noise of variance 1 + xi, Bob measures one
quadrature at random.  A random tenth of the sifted symbols is used to
estimate the channel; the rest are post-selected and scored.

Random numbers come from Philox streams keyed by (seed, purpose, chunk) so
every stream is reproducible independently of how the work is split.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from .eve_model import INDIVIDUAL, check_attack, eve_deficit
from .info_theory import Channel, Modulation, ab_deficit, binary_entropy
from .keyrate import RATE_CONVENTIONS

log = logging.getLogger(__name__)

CHUNK = 1 << 16
PURPOSES = {"encode": 1, "noise": 2, "basis": 3, "subset": 4}
ESTIMATION_FRACTION = 0.10
MIN_ESTIMATION_SAMPLES = 100
DATASET_COLUMNS = ("index", "quadrature", "s_a", "m_b", "bit_a", "bit_b")


def stream(seed: int, purpose: str, chunk: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(PURPOSES[purpose], int(chunk)))
    return np.random.Generator(np.random.Philox(ss))


def _chunked_normal(seed, purpose, n, width):
    """n x width standard normals, drawn chunk by chunk from keyed streams."""
    out = np.empty((n, width))
    for k, start in enumerate(range(0, n, CHUNK)):
        stop = min(start + CHUNK, n)
        out[start:stop] = stream(seed, purpose, k).standard_normal((stop - start, width))
    return out


@dataclass
class RawRecords:
    index: np.ndarray
    s_x: np.ndarray
    s_p: np.ndarray
    seed_tag: str

    def __len__(self):
        return self.index.size


@dataclass
class Measurements:
    index: np.ndarray
    s_x: np.ndarray
    s_p: np.ndarray
    m_x: np.ndarray
    m_p: np.ndarray


@dataclass
class SiftedDataset:
    index: np.ndarray
    quadrature: np.ndarray  # 'X' or 'P'
    s_a: np.ndarray
    m_b: np.ndarray
    n_dropped: int = 0

    @property
    def bit_a(self):
        return (self.s_a < 0).astype(np.int8)

    @property
    def bit_b(self):
        return (self.m_b < 0).astype(np.int8)

    def __len__(self):
        return self.index.size

    def take(self, idx):
        return SiftedDataset(self.index[idx], self.quadrature[idx], self.s_a[idx], self.m_b[idx], 0)


def generate(mod: Modulation, n: int, seed: int) -> RawRecords:
    if n < 1:
        raise ValueError("n must be at least 1")
    draws = _chunked_normal(seed, "encode", n, 2) * math.sqrt(mod.v_a)
    return RawRecords(np.arange(n, dtype=np.int64), draws[:, 0], draws[:, 1], f"{seed}:encode")


def transmit(ch: Channel, records: RawRecords, seed: int) -> Measurements:
    noise = _chunked_normal(seed, "noise", len(records), 2) * math.sqrt(1.0 + ch.xi)
    g = math.sqrt(ch.eta)
    return Measurements(records.index, records.s_x, records.s_p,
                        g * records.s_x + noise[:, 0], g * records.s_p + noise[:, 1])


def sift(pairs: Measurements, seed: int) -> SiftedDataset:
    """Keep Bob's randomly chosen quadrature; drop exact zeros."""
    n = pairs.index.size
    choose_p = np.empty(n, dtype=bool)
    for k, start in enumerate(range(0, n, CHUNK)):
        stop = min(start + CHUNK, n)
        choose_p[start:stop] = stream(seed, "basis", k).random(stop - start) < 0.5
    s = np.where(choose_p, pairs.s_p, pairs.s_x)
    m = np.where(choose_p, pairs.m_p, pairs.m_x)
    ok = (s != 0.0) & (m != 0.0)
    quad = np.where(choose_p, "P", "X")
    return SiftedDataset(pairs.index[ok], quad[ok], s[ok], m[ok], int(n - ok.sum()))


@dataclass(frozen=True)
class ChannelEstimate:
    eta_hat: float
    sigma_eta: float
    xi_hat: float
    sigma_xi: float
    n_used: int
    gaussianity_stat: float
    xi_clamped: bool = False

    @property
    def channel(self) -> Channel:
        return Channel(min(max(self.eta_hat, 1e-12), 1.0), self.xi_hat)


def estimate_channel(s_a, m_b) -> ChannelEstimate:
    """Regress m on s through the origin: slope^2 -> eta, residual variance -> 1 + xi."""
    s = np.asarray(s_a, float)
    m = np.asarray(m_b, float)
    n = s.size
    if n < MIN_ESTIMATION_SAMPLES:
        raise ValueError(f"channel estimation needs at least {MIN_ESTIMATION_SAMPLES} samples, got {n}")
    sxx = float(np.dot(s, s))
    slope = float(np.dot(s, m)) / sxx
    resid = m - slope * s
    var = float(np.dot(resid, resid)) / (n - 1)
    sigma_slope = math.sqrt(var / sxx)
    xi_hat = var - 1.0
    clamped = xi_hat < 0.0
    if clamped:
        log.warning("estimated excess noise %.3g < 0, clamped to 0", xi_hat)
        xi_hat = 0.0
    return ChannelEstimate(
        eta_hat=slope * slope,
        sigma_eta=2.0 * abs(slope) * sigma_slope,
        xi_hat=xi_hat,
        sigma_xi=var * math.sqrt(2.0 / (n - 1)),
        n_used=n,
        gaussianity_stat=float(stats.kurtosis(resid, fisher=True, bias=False)),
        xi_clamped=clamped,
    )


@dataclass(frozen=True)
class EmpiricalRate:
    delta_i_exp: float
    std_error: float
    n_kept: int
    n_total: int
    delta_i_aggregate: float = math.nan
    param_error: float = 0.0

    @property
    def total_error(self) -> float:
        """Sampling and channel-estimation errors combined in quadrature."""
        return math.hypot(self.std_error, self.param_error)


def _gain_chunks(ch, s, m, attack, threads):
    bounds = [(a, min(a + CHUNK, s.size)) for a in range(0, s.size, CHUNK)]

    def one(b):
        lo, hi = b
        d_eve, _ = eve_deficit(ch.eta, ch.xi, s[lo:hi], m[lo:hi], attack)
        return d_eve, ab_deficit(ch.eta, ch.xi, s[lo:hi], m[lo:hi])

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, bounds))
    else:
        parts = [one(b) for b in bounds]
    if not parts:
        return np.empty(0), np.empty(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _mean_gain(ch, s, m, attack, threads):
    d_eve, d_ab = _gain_chunks(ch, s, m, attack, threads)
    # same resolution floor as the quadrature integrand
    gain = np.where(np.maximum(d_eve, d_ab) >= np.finfo(float).tiny, d_eve - d_ab, 0.0)
    kept = gain > 0.0
    summand = np.where(kept, gain, 0.0)
    return math.fsum(summand) / s.size, summand, kept, d_eve


def _shifted(est: ChannelEstimate, d_eta, d_xi):
    eta = min(max(est.eta_hat + d_eta, 1e-12), 1.0 - 1e-12 if est.xi_hat + d_xi > 0 else 1.0)
    return Channel(eta, max(est.xi_hat + d_xi, 0.0))


def parameter_error(s, m, est: ChannelEstimate, attack, threads=None) -> float:
    """Spread of the rate when the estimated channel moves by one sigma.

    Central differences on the same records, one per parameter, combined in
    quadrature (the two estimates are treated as uncorrelated).
    """
    parts = []
    for d_eta, d_xi in ((est.sigma_eta, 0.0), (0.0, est.sigma_xi)):
        hi = _mean_gain(_shifted(est, d_eta, d_xi), s, m, attack, threads)[0]
        lo = _mean_gain(_shifted(est, -d_eta, -d_xi), s, m, attack, threads)[0]
        parts.append(0.5 * (hi - lo))
    return math.hypot(*parts)


def empirical_rate(s_a, m_b, channel, attack: str = INDIVIDUAL, threads=None,
                   propagate: bool = True) -> EmpiricalRate:
    """Mean of the positive part of the per-symbol Delta-I over all records.

    ``channel`` is a Channel or a ChannelEstimate.  ``std_error`` is the
    sampling error of that mean alone; with an estimate and ``propagate`` the
    effect of the estimation uncertainty is reported in ``param_error``.
    """
    check_attack(attack)
    ch = channel.channel if isinstance(channel, ChannelEstimate) else channel
    s = np.abs(np.asarray(s_a, float))
    m = np.abs(np.asarray(m_b, float))
    n = s.size
    if n == 0:
        return EmpiricalRate(0.0, math.nan, 0, 0)
    mean, summand, kept, d_eve = _mean_gain(ch, s, m, attack, threads)
    std_error = float(np.std(summand, ddof=1)) / math.sqrt(n) if n >= 2 else math.nan

    n_kept = int(kept.sum())
    aggregate = 0.0
    if n_kept:
        mismatch = (np.asarray(s_a) < 0) != (np.asarray(m_b) < 0)
        err = float(mismatch[kept].mean())
        i_ab = 1.0 - float(binary_entropy(err))
        i_e = 1.0 - math.fsum(d_eve[kept]) / n_kept
        aggregate = n_kept / n * (i_ab - i_e)
    p_err = 0.0
    if propagate and isinstance(channel, ChannelEstimate):
        p_err = parameter_error(s, m, channel, attack, threads)
    return EmpiricalRate(mean, std_error, n_kept, n, aggregate, p_err)


def quantize(values, digits=12):
    """Round to the precision written to the dataset file."""
    return np.char.mod(f"%.{digits}g", np.asarray(values, float)).astype(float)


def estimation_split(n: int, seed: int):
    """Disjoint (estimation, key) index arrays; 10% simple random sample."""
    n_est = max(MIN_ESTIMATION_SAMPLES, int(round(ESTIMATION_FRACTION * n)))
    if n_est >= n:
        raise ValueError(f"need more than {n_est} sifted symbols, got {n}")
    est = np.sort(stream(seed, "subset").choice(n, size=n_est, replace=False))
    mask = np.ones(n, dtype=bool)
    mask[est] = False
    return est, np.nonzero(mask)[0]


def write_dataset(path, data: SiftedDataset):
    path = Path(path)
    s_txt = np.char.mod("%.12g", data.s_a)
    m_txt = np.char.mod("%.12g", data.m_b)
    bit_a, bit_b = data.bit_a, data.bit_b
    with path.open("w", newline="") as fh:
        fh.write(",".join(DATASET_COLUMNS) + "\n")
        fh.writelines(
            f"{i},{q},{s},{m},{a},{b}\n"
            for i, q, s, m, a, b in zip(data.index.tolist(), data.quadrature.tolist(),
                                        s_txt.tolist(), m_txt.tolist(), bit_a.tolist(), bit_b.tolist())
        )
    return path


def read_dataset(path) -> SiftedDataset:
    df = pd.read_csv(path, float_precision="round_trip", dtype={"quadrature": str})
    missing = set(DATASET_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"dataset is missing columns {sorted(missing)}")
    return SiftedDataset(
        df["index"].to_numpy(np.int64),
        df["quadrature"].to_numpy(str),
        df["s_a"].to_numpy(float),
        df["m_b"].to_numpy(float),
    )


@dataclass
class ExperimentResult:
    estimate: ChannelEstimate
    rate: EmpiricalRate
    metadata: dict
    dataset: SiftedDataset = field(repr=False)
    paths: dict = field(default_factory=dict)


def score_dataset(data: SiftedDataset, seed: int, attack: str = INDIVIDUAL, threads=None):
    """Channel estimation on the held-out tenth, then the rate on the rest."""
    est_idx, key_idx = estimation_split(len(data), seed)
    estimate = estimate_channel(data.s_a[est_idx], data.m_b[est_idx])
    rate = empirical_rate(data.s_a[key_idx], data.m_b[key_idx], estimate, attack, threads=threads)
    return estimate, rate


def run_experiment(ch: Channel, mod: Modulation, n: int, seed: int, attack: str = INDIVIDUAL,
                   out_dir=None, stem="run", rate_convention="sifted", threads=None) -> ExperimentResult:
    """generate -> transmit -> sift -> estimate -> post-select, optionally persisted."""
    check_attack(attack)
    if rate_convention not in RATE_CONVENTIONS:
        raise ValueError(f"unknown rate convention {rate_convention!r}")
    sifted = sift(transmit(ch, generate(mod, n, seed), seed), seed)
    # score exactly what the file holds so a re-read reproduces the rate
    sifted.s_a = quantize(sifted.s_a)
    sifted.m_b = quantize(sifted.m_b)
    estimate, rate = score_dataset(sifted, seed, attack, threads)
    factor = RATE_CONVENTIONS[rate_convention]
    meta = {
        "seed": int(seed),
        "eta": ch.eta,
        "xi": ch.xi,
        "v_a": mod.v_a,
        "n": int(n),
        "eta_hat": estimate.eta_hat,
        "xi_hat": estimate.xi_hat,
        "delta_i_exp": rate.delta_i_exp * factor,
        "std_error": rate.std_error * factor,
        "param_error": rate.param_error * factor,
        "rate_convention": rate_convention,
        "attack": attack,
        "sigma_eta": estimate.sigma_eta,
        "sigma_xi": estimate.sigma_xi,
        "n_kept": rate.n_kept,
        "n_total": rate.n_total,
        "n_dropped": sifted.n_dropped,
        "delta_i_aggregate": rate.delta_i_aggregate * factor,
        "gaussianity_stat": estimate.gaussianity_stat,
    }
    result = ExperimentResult(estimate, rate, meta, sifted)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = write_dataset(out / f"{stem}.csv", sifted)
        meta_path = out / f"{stem}.json"
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        result.paths = {"dataset": csv_path, "metadata": meta_path}
    return result


def rescore(csv_path, meta) -> EmpiricalRate:
    """Recompute the rate of a persisted run from its dataset and metadata."""
    if not isinstance(meta, dict):
        meta = json.loads(Path(meta).read_text())
    _, rate = score_dataset(read_dataset(csv_path), meta["seed"], meta.get("attack", INDIVIDUAL))
    return rate
