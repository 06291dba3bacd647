"""Quantitative checks on computed coverings and simulated orbits."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .boxes import BoxCollection
from .dde import DdeSystem, _history_on_grid, _integrate_grid
from .embedding import EmbeddingConfig, _cells_for, _ops
from .errors import (
    EmptyInputError,
    InsufficientDataError,
    NonFiniteStateError,
)


def simulate_embedded_orbit(sys: DdeSystem, cfg: EmbeddingConfig,
                            h0, transient: float, samples: int,
                            spacing: float, return_trace: bool = False):
    """Embedded samples of a directly simulated trajectory.

    Integrates past the transient, then records the restriction of the
    state every ``spacing`` time units (which must be a multiple of the
    integrator step). With ``return_trace`` also returns the dense node
    samples (times, values) of the whole run.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    cells = _cells_for(cfg.layout, cfg.p, cfg.steps_per_delay)
    ops = _ops(cfg.layout, cfg.p, cells)
    h = sys.tau / cells
    gap = int(round(spacing / h))
    if gap < 1 or abs(gap * h - spacing) > 1e-9 * max(1.0, spacing):
        raise ValueError("spacing must be a positive multiple of the "
                         f"integrator step {h!r}")
    n_trans = max(0, int(round(transient / h)))

    vals, ders = _history_on_grid(h0, cells)
    vals, ders = vals[None], ders[None]
    trace_v = [vals[0]] if return_trace else None

    def advance(v, d, steps):
        if return_trace:
            fv, fd, tv, _ = _integrate_grid(sys.rhs, v, d, steps, h, trace=True)
            trace_v.append(tv[0, cells + 1:])
            return fv, fd
        return _integrate_grid(sys.rhs, v, d, steps, h)

    if n_trans:
        vals, ders = advance(vals, ders, n_trans)
    out = np.empty((samples, cfg.layout.k))
    out[0] = ops.restrict_window(vals, ders)[0]
    for i in range(1, samples):
        vals, ders = advance(vals, ders, gap)
        out[i] = ops.restrict_window(vals, ders)[0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteStateError("simulation became non-finite")
    if return_trace:
        values = np.vstack(trace_v)
        times = -sys.tau + np.arange(values.shape[0]) * h
        return out, (times, values)
    return out


def containment(covering: BoxCollection, points) -> float:
    """Fraction of the points lying in some active box."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise EmptyInputError("containment of an empty point set")
    _, found = covering.locate_batch(points)
    return float(found.mean())


def _directed_chebyshev(a, b, block=1024):
    worst = 0.0
    for s in range(0, a.shape[0], block):
        part = a[s:s + block]
        d = np.abs(part[:, None, :] - b[None, :, :]).max(axis=2).min(axis=1)
        worst = max(worst, float(d.max()))
    return worst


def hausdorff(set_a, set_b) -> float:
    """Hausdorff distance between two point sets in the max norm."""
    a = np.atleast_2d(np.asarray(set_a, dtype=float))
    b = np.atleast_2d(np.asarray(set_b, dtype=float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyInputError("hausdorff needs two nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise ValueError("point sets must share a dimension")
    return max(_directed_chebyshev(a, b), _directed_chebyshev(b, a))


def estimate_box_dimension(coverings: Sequence[BoxCollection]) -> float:
    """Box-counting dimension estimate from coverings at several depths.

    Least-squares slope of log N against log(1/diameter), max-norm
    diameters. Needs at least three distinct depths spanning two
    halvings of the diameter.
    """
    items = sorted({c.depth: c for c in coverings}.values(),
                   key=lambda c: c.depth)
    if len(items) < 3:
        raise InsufficientDataError("need coverings at three depths or more")
    diams = np.array([c.diameter() for c in items])
    counts = np.array([c.count for c in items], dtype=float)
    if np.any(counts == 0):
        raise InsufficientDataError("empty covering in the sample")
    if diams.max() / diams.min() < 4.0 * (1 - 1e-12):
        raise InsufficientDataError(
            "coverings must span at least two halvings of the diameter")
    x = np.log(1.0 / diams)
    y = np.log(counts)
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def poincare_slice(covering: BoxCollection, coordinate: int, value: float,
                   thickness: float) -> BoxCollection:
    """Boxes whose extent in ``coordinate`` (0-based) meets
    [value - thickness, value + thickness]."""
    if not 0 <= coordinate < covering.k:
        raise ValueError(f"coordinate must be in 0..{covering.k - 1}")
    centers = covering.centers()
    r = covering.leaf_radii()[coordinate]
    keep = np.abs(centers[:, coordinate] - value) <= r + thickness
    return covering.retain(covering.active_paths()[keep])
