"""Small numerical building blocks: adaptive 2-D cubature and golden-section search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class CubatureResult:
    value: float
    error: float
    n_cells: int
    n_evals: int


def _gl_rule(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def adaptive_cubature(f, x_lo, x_hi, y_lo, y_hi, tol=1e-6, rtol=1e-4, initial=16, order=6, max_rounds=60,
                      max_cells=100_000):
    """Integrate ``f(x, y)`` (vectorised) over a rectangle.

    Each cell is estimated with a tensor Gauss-Legendre rule on the cell and
    on its four quarters; the difference is the cell's error estimate.  Each
    round splits the cells that carry the largest errors until the summed
    estimate is below ``min(tol, rtol * |value|)``.  Sums use ``math.fsum`` so the result does not
    depend on evaluation order.
    """
    nodes, weights = _gl_rule(order)
    wxy = np.outer(weights, weights).ravel()
    ux = np.repeat(nodes, order)
    uy = np.tile(nodes, order)

    xs = np.linspace(x_lo, x_hi, initial + 1)
    ys = np.linspace(y_lo, y_hi, initial + 1)
    gx, gy = np.meshgrid(xs[:-1], ys[:-1], indexing="ij")
    cells = np.stack([gx.ravel(), gy.ravel(),
                      np.full(gx.size, xs[1] - xs[0]), np.full(gx.size, ys[1] - ys[0])], axis=1)

    def rule(c):
        px = c[:, :1] + c[:, 2:3] * ux
        py = c[:, 1:2] + c[:, 3:4] * uy
        vals = np.asarray(f(px, py), dtype=float)
        return (vals * wxy).sum(axis=1) * c[:, 2] * c[:, 3]

    def quarters(c):
        hx, hy = 0.5 * c[:, 2], 0.5 * c[:, 3]
        parts = [np.stack([c[:, 0] + ox * hx, c[:, 1] + oy * hy, hx, hy], axis=1)
                 for ox in (0, 1) for oy in (0, 1)]
        return np.stack(parts, axis=1).reshape(-1, 4)

    def refine(c, coarse):
        kids = quarters(c)
        fine_kids = rule(kids)
        fine = fine_kids.reshape(-1, 4).sum(axis=1)
        return fine, np.abs(fine - coarse), kids, fine_kids

    coarse = rule(cells)
    n_evals = cells.shape[0] * order * order
    value, err, kids, kid_vals = refine(cells, coarse)
    n_evals += kids.shape[0] * order * order
    for _ in range(max_rounds):
        total_err = math.fsum(err)
        target = min(tol, rtol * abs(math.fsum(value)))
        if total_err <= target:
            return CubatureResult(math.fsum(value), total_err, cells.shape[0], n_evals)
        if cells.shape[0] > max_cells:
            break
        # split the fewest cells that hold all but tol/2 of the error
        order_idx = np.argsort(-err, kind="stable")
        cum = np.cumsum(err[order_idx])
        n_split = int(np.searchsorted(cum, total_err - 0.5 * target)) + 1
        split = np.zeros(err.size, dtype=bool)
        split[order_idx[:n_split]] = True
        mask = np.repeat(split, 4)
        new_cells = kids[mask]
        new_value, new_err, new_kids, new_kid_vals = refine(new_cells, kid_vals[mask])
        n_evals += new_kids.shape[0] * order * order
        keep = ~split
        cells = np.concatenate([cells[keep], new_cells])
        value = np.concatenate([value[keep], new_value])
        err = np.concatenate([err[keep], new_err])
        kids = np.concatenate([kids[np.repeat(keep, 4)], new_kids])
        kid_vals = np.concatenate([kid_vals[np.repeat(keep, 4)], new_kid_vals])
    raise ConvergenceError(
        f"cubature stopped at error {math.fsum(err):.3g} above tol={tol:g} ({cells.shape[0]} cells)",
        partial=math.fsum(value),
    )


@dataclass
class SearchResult:
    x: float
    fx: float
    n_evals: int
    at_boundary: bool


def golden_section_max(f, lo, hi, tol):
    """Maximise a unimodal ``f`` on [lo, hi] to bracket width ``tol``."""
    a, b = min(lo, hi), max(lo, hi)
    h = b - a
    c = b - INV_PHI * h
    d = a + INV_PHI * h
    fc, fd = f(c), f(d)
    evals = 2
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        evals += 1
    x, fx = (c, fc) if fc >= fd else (d, fd)
    edge = (x - lo) < 2.0 * tol or (hi - x) < 2.0 * tol
    return SearchResult(x, fx, evals, edge)
