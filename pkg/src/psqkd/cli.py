"""Command-line front end: key rates, region maps, thresholds, sweeps and simulated runs.

Every command writes a table.  CSV tables start with ``#``-prefixed metadata
lines; JSON output carries the same metadata next to the rows.  A config file
of ``key = value`` lines can supply defaults for any long flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ModelDomainError
from .eve_model import ATTACKS, check_model, critical_line
from .info_theory import Channel, Modulation
from .keyrate import (
    RATE_CONVENTIONS,
    asymptote_slopes,
    contour_grid,
    contour_levels,
    noise_threshold,
    optimize_modulation,
    region_map,
    secure_rate,
    separability_bound,
    sweep_noise,
)
from .simulator import (
    estimate_channel,
    estimation_split,
    read_dataset,
    run_experiment,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_CONVERGENCE = 0, 2, 3, 4
DEFAULT_N = 2_400_000

log = logging.getLogger("psqkd")


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class UsageError(ValueError):
    pass


def parse_grid(text):
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, num = text.split(":")
            num = int(num)
            if num < 1:
                raise ValueError
            values = np.linspace(float(start), float(stop), num)
        else:
            values = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}; use start:stop:num or a,b,c") from None
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise argparse.ArgumentTypeError(f"bad grid {text!r}")
    return [float(v) for v in values]


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def read_config(path):
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# ---------------------------------------------------------------- parser


def _common(p, eta=True, xi=True):
    if eta:
        p.add_argument("--eta", type=float, help="channel transmission, 0 < eta <= 1")
    if xi:
        p.add_argument("--xi", type=float, help="excess noise in shot-noise units, xi >= 0")
    p.add_argument("--out", type=Path, help="output file (directory for simulate)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--rate-convention", choices=sorted(RATE_CONVENTIONS), default="sifted")
    p.add_argument("--config", type=Path, help="file of 'key = value' defaults; flags override")
    p.add_argument("--tol", type=float, default=1e-6, help="absolute integration tolerance in bits")


def _attack(p, default="individual"):
    p.add_argument("--attack", choices=ATTACKS + ("both",), default=default)


def _va(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--va", type=float, help="Alice's modulation variance")
    g.add_argument("--optimize-va", action="store_true", default=None,
                   help="maximise the rate over V_A (default when --va is absent)")


def build_parser():
    parser = argparse.ArgumentParser(prog="psqkd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="secure rate at one channel")
    _common(p)
    _attack(p)
    _va(p)

    p = sub.add_parser("region", help="Delta-I map over announced magnitudes")
    _common(p)
    _attack(p)
    p.add_argument("--s-max", type=float, default=6.0)
    p.add_argument("--m-max", type=float, default=6.0)
    p.add_argument("--n-s", type=int, default=200)
    p.add_argument("--n-m", type=int, default=200)

    p = sub.add_parser("threshold", help="noise threshold and separability bound over eta")
    _common(p, eta=False, xi=False)
    p.add_argument("--eta-grid", type=parse_grid, default=parse_grid("0.02:1:50"))

    p = sub.add_parser("sweep", help="Delta-I against excess noise at fixed eta")
    _common(p, xi=False)
    _attack(p, default="both")
    p.add_argument("--xi-grid", type=parse_grid, default=parse_grid("0:0.45:46"))
    p.add_argument("--va", type=float, help="fixed V_A instead of the per-xi optimum")
    p.add_argument("--va-mode", choices=("individual", "reoptimize"), default="individual",
                   help="optimise V_A for the individual bound (shared) or per attack")

    p = sub.add_parser("contour", help="optimised Delta-I over an (eta, xi) grid")
    _common(p, eta=False, xi=False)
    _attack(p)
    p.add_argument("--eta-grid", type=parse_grid, default=parse_grid("0.05:0.95:19"))
    p.add_argument("--xi-grid", type=parse_grid, default=parse_grid("0:1:21"))
    p.add_argument("--levels", type=parse_grid, default=[1e-1, 1e-2, 1e-3, 1e-4, 1e-7])

    p = sub.add_parser("simulate", help="Monte Carlo run of the protocol")
    _common(p)
    _attack(p)
    _va(p)
    p.add_argument("--n", type=lambda t: int(float(t)), default=DEFAULT_N, help="channel uses")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stem", default="run", help="file stem for the dataset and sidecar")

    p = sub.add_parser("estimate", help="estimate (eta, xi) from a dataset CSV")
    _common(p, eta=False, xi=False)
    p.add_argument("dataset", type=Path)
    p.add_argument("--seed", type=int, help="use the held-out tenth chosen by this seed")
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is not None:
        try:
            cfg = read_config(args.config)
        except OSError as exc:
            parser.error(f"cannot read config: {exc}")
        except UsageError as exc:
            parser.error(str(exc))
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        unknown = sorted(set(cfg) - set(known) - {"config"})
        if unknown:
            parser.error(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        for key, value in cfg.items():
            if key in known and known[key].nargs == 0:
                cfg[key] = _bool(value)
        cfg.pop("config", None)
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return parser, args


# ---------------------------------------------------------------- output


def _cell(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, Path):
        return str(v)
    return v


def render(rows, meta, fmt):
    if fmt == "json":
        doc = {"metadata": {k: _jsonable(v) for k, v in meta.items()},
               "rows": [{k: _jsonable(v) for k, v in r.items()} for r in rows]}
        return json.dumps(doc, indent=2) + "\n"
    lines = [f"# {k}: {json.dumps(_jsonable(v))}" for k, v in meta.items()]
    if rows:
        cols = list(rows[0])
        lines.append(",".join(cols))
        lines.extend(",".join(_cell(r[c]) for c in cols) for r in rows)
    return "\n".join(lines) + "\n"


def emit(rows, meta, args, out_path=None):
    text = render(rows, meta, args.format)
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(text)


def _meta(args, **extra):
    meta = {"command": args.command, "tool_version": _version(),
            "rate_convention": args.rate_convention, "units": "bits per sifted symbol"}
    for key in ("eta", "xi", "attack", "seed", "n"):
        if getattr(args, key, None) is not None:
            meta[key] = getattr(args, key)
    meta.update(extra)
    return meta


def _attacks(args):
    return list(ATTACKS) if args.attack == "both" else [args.attack]


def _need(parser, args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        parser.error(f"{args.command} needs {', '.join(missing)}")


def _channel(args):
    if not (math.isfinite(args.eta) and 0.0 < args.eta <= 1.0):
        raise UsageError(f"--eta must lie in (0, 1], got {args.eta}")
    if not (math.isfinite(args.xi) and args.xi >= 0.0):
        raise UsageError(f"--xi must be non-negative, got {args.xi}")
    check_model(args.eta, args.xi)
    return Channel(args.eta, args.xi)


def _insecure(ch):
    return ch.xi > 0.0 and ch.xi >= noise_threshold(ch.eta)


# ---------------------------------------------------------------- commands


def cmd_rate(parser, args):
    _need(parser, args, "eta", "xi")
    ch = _channel(args)
    if args.va is not None and args.va <= 0:
        raise UsageError("--va must be positive")
    factor = RATE_CONVENTIONS[args.rate_convention]
    rows = []
    insecure = _insecure(ch)
    if insecure:
        print(f"insecure: xi >= threshold ({ch.xi:g} >= {noise_threshold(ch.eta):.6g} at eta={ch.eta:g})")
    for attack in _attacks(args):
        if insecure:
            va, res = (args.va if args.va is not None else math.nan), None
            value, err, edge = 0.0, 0.0, False
        elif args.va is not None:
            va = args.va
            res = secure_rate(ch, Modulation(va), attack, tol=args.tol)
            value, err, edge = res.delta_i_total, res.integration_estimate_error, False
        else:
            va, res = optimize_modulation(ch, attack, tol=args.tol)
            value, err, edge = res.delta_i_total, res.integration_estimate_error, res.at_search_boundary
        rows.append({"attack": attack, "v_a": va, "delta_i": value * factor, "integration_error": err * factor,
                     "at_search_boundary": edge, "insecure": insecure})
        print(f"{attack}: delta_i = {value * factor:.6g} bits ({args.rate_convention}), v_a = {va:.6g}")
    if args.out is not None:
        emit(rows, _meta(args), args, args.out)
    return EXIT_OK


def cmd_region(parser, args):
    _need(parser, args, "eta", "xi")
    ch = _channel(args)
    if args.s_max <= 0 or args.m_max <= 0 or args.n_s < 2 or args.n_m < 2:
        raise UsageError("region extents must be positive and grid counts at least 2")
    try:
        lower, upper = asymptote_slopes(ch)
    except ModelDomainError:
        lower = upper = math.nan
    rows = []
    for attack in _attacks(args):
        rm = region_map(ch, attack, args.s_max, args.m_max, args.n_s, args.n_m)
        crit = [critical_line(ch, s) for s in rm.s_grid]
        for i, s in enumerate(rm.s_grid):
            for j, m in enumerate(rm.m_grid):
                rows.append({
                    "attack": attack, "abs_s": float(s), "abs_m": float(m),
                    "delta_i": float(rm.values[i, j]), "kept": bool(rm.kept[i, j]),
                    "m_critical": float(crit[i]),
                    "m_asymptote_lower": lower * float(s), "m_asymptote_upper": upper * float(s),
                })
    emit(rows, _meta(args, slope_lower=lower, slope_upper=upper), args, args.out)
    return EXIT_OK


def cmd_threshold(parser, args):
    rows = []
    for eta in args.eta_grid:
        if not 0.0 < eta <= 1.0:
            raise UsageError(f"eta grid values must lie in (0, 1], got {eta}")
        rows.append({"eta": eta, "xi0": noise_threshold(eta), "separable_xi": separability_bound(eta)})
    emit(rows, _meta(args), args, args.out)
    return EXIT_OK


def cmd_sweep(parser, args):
    _need(parser, args, "eta")
    if not 0.0 < args.eta < 1.0:
        raise UsageError("--eta must lie in (0, 1) for a noise sweep")
    if any(x < 0 for x in args.xi_grid):
        raise UsageError("xi grid values must be non-negative")
    va = args.va if args.va is not None else args.va_mode
    factor = RATE_CONVENTIONS[args.rate_convention]
    rows = []
    for attack in _attacks(args):
        for pt in sweep_noise(args.eta, args.xi_grid, attack, va=va, threads=args.threads, tol=args.tol):
            rows.append({"attack": attack, "xi": pt.xi, "v_a": pt.v_a, "delta_i": pt.delta_i * factor,
                         "insecure": pt.insecure})
    emit(rows, _meta(args, va_mode=va, xi0=noise_threshold(args.eta)), args, args.out)
    return EXIT_OK


def cmd_contour(parser, args):
    if any(not 0.0 < e < 1.0 for e in args.eta_grid):
        raise UsageError("eta grid values must lie in (0, 1)")
    if any(x < 0 for x in args.xi_grid):
        raise UsageError("xi grid values must be non-negative")
    factor = RATE_CONVENTIONS[args.rate_convention]
    rows, levels = [], {}
    for attack in _attacks(args):
        cells = contour_grid(args.eta_grid, args.xi_grid, attack, threads=args.threads, tol=args.tol)
        rows.extend({"attack": attack, "eta": c.eta, "xi": c.xi, "v_a": c.v_a, "delta_i": c.delta_i * factor,
                     "insecure": c.insecure, "separable": c.separable} for c in cells)
        levels[attack] = {f"{lv:g}": {f"{e:g}": x for e, x in per.items()}
                          for lv, per in contour_levels(cells, args.levels).items()}
    emit(rows, _meta(args, level_max_xi=levels), args, args.out)
    return EXIT_OK


def cmd_simulate(parser, args):
    _need(parser, args, "eta", "xi")
    ch = _channel(args)
    if args.n < 1000:
        raise UsageError("--n must be at least 1000")
    if args.va is not None:
        if args.va <= 0:
            raise UsageError("--va must be positive")
        va = args.va
    else:
        if _insecure(ch):
            raise ModelDomainError(f"xi={ch.xi} is at or above the noise threshold; pass --va to simulate anyway")
        va, _ = optimize_modulation(ch, "individual", tol=args.tol)
    mod = Modulation(va)
    factor = RATE_CONVENTIONS[args.rate_convention]
    rows = []
    for attack in _attacks(args):
        stem = args.stem if args.attack != "both" else f"{args.stem}_{attack}"
        res = run_experiment(ch, mod, args.n, args.seed, attack, out_dir=args.out, stem=stem,
                             rate_convention=args.rate_convention, threads=args.threads)
        theory = 0.0 if _insecure(ch) else secure_rate(ch, mod, attack, tol=args.tol).delta_i_total
        est = res.estimate
        theory_est = 0.0
        if est.eta_hat < 1.0 and not _insecure(est.channel):
            theory_est = secure_rate(est.channel, mod, attack, tol=args.tol).delta_i_total
        row = {"attack": attack, "v_a": va, "delta_i_exp": res.rate.delta_i_exp * factor,
               "std_error": res.rate.std_error * factor, "param_error": res.rate.param_error * factor,
               "n_kept": res.rate.n_kept, "n_total": res.rate.n_total,
               "eta_hat": est.eta_hat, "sigma_eta": est.sigma_eta, "xi_hat": est.xi_hat, "sigma_xi": est.sigma_xi,
               "theory_true": theory * factor, "theory_estimated": theory_est * factor}
        rows.append(row)
        print(f"{attack}: delta_i_exp = {row['delta_i_exp']:.6g} +/- {row['std_error']:.2g} (sampling)"
              f" +/- {row['param_error']:.2g} (estimation); theory at estimate {row['theory_estimated']:.6g}",
              file=sys.stderr if args.out is None else sys.stdout)
    if args.out is not None:
        emit(rows, _meta(args, v_a=va), args, Path(args.out) / f"{args.stem}_summary.{args.format}")
    else:
        emit(rows, _meta(args, v_a=va), args)
    return EXIT_OK


def cmd_estimate(parser, args):
    try:
        data = read_dataset(args.dataset)
    except (OSError, KeyError) as exc:
        raise UsageError(f"cannot read dataset: {exc}") from exc
    idx = np.arange(len(data)) if args.seed is None else estimation_split(len(data), args.seed)[0]
    est = estimate_channel(data.s_a[idx], data.m_b[idx])
    row = {"eta_hat": est.eta_hat, "sigma_eta": est.sigma_eta, "xi_hat": est.xi_hat, "sigma_xi": est.sigma_xi,
           "n_used": est.n_used, "gaussianity_stat": est.gaussianity_stat, "xi_clamped": est.xi_clamped}
    emit([row], _meta(args, dataset=str(args.dataset)), args, args.out)
    return EXIT_OK


COMMANDS = {
    "rate": cmd_rate, "region": cmd_region, "threshold": cmd_threshold, "sweep": cmd_sweep,
    "contour": cmd_contour, "simulate": cmd_simulate, "estimate": cmd_estimate,
}


def main(argv=None) -> int:
    try:
        parser, args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](parser, args)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except ModelDomainError as exc:
        print(f"model-domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
