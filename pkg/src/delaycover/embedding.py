"""Observation map, reconstruction embeddings, and the induced map on R^k.

The restriction reads a state at the observables' sample times. Two
reconstructions are provided: a piecewise-linear one that uses nothing
but the embedded point, and a natural-spline one that additionally uses
stored samples from an earlier integration (the bootstrap payload).
Composing restriction, flow, and reconstruction yields the map the
subdivision scheme iterates.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .dde import (
    DdeSystem,
    HistorySegment,
    _eval_uniform,
    _history_on_grid,
    _integrate_grid,
    _NODE_SNAP,
)
from .errors import DiscardedPointError, LayoutMismatchError

_GRID_CAP = 8192


@dataclass(frozen=True)
class Observable:
    """One observed component: value of u_component at nu, nu+w, ... .

    ``component`` is the 1-based index of the state component and
    ``divisor`` sets the snapshot spacing w = tau/divisor. All sample
    times must stay inside [-tau, 0].
    """

    component: int
    nu: float
    count: int = 1
    divisor: int = 1

    def sample_times(self, tau) -> np.ndarray:
        return self.nu + np.arange(self.count) * (tau / self.divisor)


@dataclass(frozen=True)
class ObservableLayout:
    """Ordered observables plus the driver span omega = tau/K."""

    observables: Tuple[Observable, ...]
    tau: float
    n: int
    K: int

    def __post_init__(self):
        object.__setattr__(self, "observables", tuple(self.observables))
        if not self.observables:
            raise LayoutMismatchError("layout needs at least one observable")
        if self.K < 1:
            raise LayoutMismatchError("K must be a positive integer")
        seen = set()
        covered = set()
        for ob in self.observables:
            if not 1 <= ob.component <= self.n:
                raise LayoutMismatchError(
                    f"component {ob.component} outside 1..{self.n}"
                )
            if ob.count < 1 or ob.divisor < 1:
                raise LayoutMismatchError("count and divisor must be >= 1")
            times = ob.sample_times(self.tau)
            if times[0] < -self.tau - 1e-12 or times[-1] > 1e-12:
                raise LayoutMismatchError(
                    "observable sample times must stay inside [-tau, 0]"
                )
            for t in times:
                key = (ob.component, round(float(t) / self.tau, 12))
                if key in seen:
                    raise LayoutMismatchError("duplicate observable sample time")
                seen.add(key)
            covered.add(ob.component)
        if covered != set(range(1, self.n + 1)):
            raise LayoutMismatchError(
                "every state component must be observed at least once"
            )

    @property
    def k(self) -> int:
        return sum(ob.count for ob in self.observables)

    @property
    def omega(self) -> float:
        return self.tau / self.K

    def sample_specs(self):
        """Flattened (component, time) pairs in embedding-coordinate order."""
        specs = []
        for ob in self.observables:
            for t in ob.sample_times(self.tau):
                specs.append((ob.component, float(t)))
        return specs

    def extra_specs(self, p: int):
        """(component, time) pairs of the p extra samples per node interval.

        Only observables with more than one snapshot have intervals;
        singly-observed components stay reconstruction constants.
        """
        specs = []
        for ob in self.observables:
            if ob.count < 2:
                continue
            w = self.tau / ob.divisor
            for i in range(ob.count - 1):
                left = ob.nu + i * w
                for q in range(1, p + 1):
                    specs.append((ob.component, float(left + q * w / (p + 1))))
        return specs

    def extras_len(self, p: int) -> int:
        return sum((ob.count - 1) * p for ob in self.observables if ob.count > 1)


def scalar_layout(tau: float, k: int) -> ObservableLayout:
    """Default layout for n = 1: k equispaced samples of u on [-tau, 0]."""
    if k < 2:
        raise LayoutMismatchError("scalar layout needs k >= 2")
    ob = Observable(component=1, nu=-tau, count=k, divisor=k - 1)
    return ObservableLayout((ob,), tau=tau, n=1, K=k - 1)


def _grid_cells(times, tau, cap=_GRID_CAP):
    """Smallest uniform grid on [-tau, 0] whose nodes contain all times."""
    rel = [(t + tau) / tau for t in times]
    for m in range(1, cap + 1):
        if all(abs(x * m - round(x * m)) <= 1e-9 for x in rel):
            return m
    raise LayoutMismatchError(
        "observable sample times are not commensurate with a uniform grid"
    )


def _interp_times(specs, n):
    """Times that must land on grid nodes: all knots of components that
    get more than one knot (single-knot components are constants)."""
    per_comp = {c: [] for c in range(1, n + 1)}
    for c, t in specs:
        per_comp[c].append(t)
    times = []
    for ts in per_comp.values():
        if len(ts) > 1:
            times.extend(ts)
    return times


@functools.lru_cache(maxsize=None)
def _embed_cells(layout: ObservableLayout) -> int:
    times = _interp_times(layout.sample_specs(), layout.n)
    return _grid_cells(times, layout.tau) if times else 1


@functools.lru_cache(maxsize=None)
def _knot_cells(layout: ObservableLayout, p: int) -> int:
    specs = layout.sample_specs() + layout.extra_specs(p)
    times = _interp_times(specs, layout.n)
    return _grid_cells(times, layout.tau) if times else 1


def _cells_for(layout: ObservableLayout, p: int, steps_per_delay: int) -> int:
    base = int(np.lcm.reduce([
        _embed_cells(layout), _knot_cells(layout, p), layout.K,
    ]))
    return base * max(1, -(-steps_per_delay // base))


class EmbeddingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    """Layout plus the iteration exponent and reconstruction knobs.

    ``m`` is the number of time-omega map applications composed into one
    evaluation; ``p`` is the number of extra bootstrap samples stored per
    node interval; ``steps_per_delay`` controls the integrator step
    (tau / steps, rounded up so the step divides omega and all node and
    knot spacings exactly).
    """

    layout: ObservableLayout
    m: int = 1
    d_bound: Optional[float] = None
    sigma_bound: Optional[float] = None
    p: int = 3
    steps_per_delay: int = 256

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("iteration exponent m must be >= 1")
        if self.p < 0:
            raise ValueError("p must be >= 0")
        self.validate()

    def validate(self):
        if self.d_bound is not None and self.sigma_bound is not None:
            need = 2.0 * (1.0 + self.sigma_bound) * self.d_bound
            if not self.layout.k > need:
                warnings.warn(
                    f"embedding dimension k={self.layout.k} does not exceed "
                    f"2(1+sigma)d = {need:g}; reconstruction may not be one-to-one",
                    EmbeddingWarning,
                    stacklevel=2,
                )

    def grid_cells(self) -> int:
        """Integrator cells per delay: multiple of K and of all node grids."""
        return _cells_for(self.layout, self.p, self.steps_per_delay)

    def steps_per_map(self) -> int:
        """Integrator steps in one application of the embedded map."""
        return self.m * (self.grid_cells() // self.layout.K)


@dataclass(frozen=True)
class BootstrapPayload:
    """Stored image: embedded point plus dense extra samples of the state."""

    z: np.ndarray
    extras: np.ndarray
    p: int


def restrict(state: HistorySegment, layout: ObservableLayout) -> np.ndarray:
    """Read the state at the layout's sample times: the observation map."""
    if abs(state.tau - layout.tau) > 1e-12 * max(1.0, layout.tau):
        raise LayoutMismatchError("state delay does not match the layout")
    specs = layout.sample_specs()
    max_comp = max(c for c, _ in specs)
    if state.n < max_comp:
        raise LayoutMismatchError(
            f"state has {state.n} components, layout reads component {max_comp}"
        )
    ts = np.array([t for _, t in specs])
    rows = _eval_uniform(
        state.values, state.derivs, -state.tau, state.tau / state.num_cells,
        np.clip(ts, -state.tau, 0.0),
    )
    comps = np.array([c - 1 for c, _ in specs])
    return rows[np.arange(len(specs)), comps]


def _node_index(t, tau, cells):
    pos = (t + tau) * cells / tau
    idx = int(round(pos))
    if abs(pos - idx) > _NODE_SNAP * max(1, cells):
        return None
    return min(max(idx, 0), cells)


def _component_knots(layout, z, extras=None, p=0):
    """Per-component sorted (time, value, from_z) knot lists."""
    knots = {c: [] for c in range(1, layout.n + 1)}
    for (c, t), v in zip(layout.sample_specs(), np.asarray(z, dtype=float)):
        knots[c].append((t, float(v), True))
    if extras is not None:
        for (c, t), v in zip(layout.extra_specs(p), np.asarray(extras, dtype=float)):
            knots[c].append((t, float(v), False))
    for pts in knots.values():
        pts.sort(key=lambda item: item[0])
    return knots


def embed_initial(z, layout: ObservableLayout) -> HistorySegment:
    """Piecewise-linear reconstruction through the embedded point.

    Components observed more than once interpolate their snapshots
    linearly (held constant beyond the first/last snapshot); components
    observed once are constant. restrict(embed_initial(z)) == z.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (layout.k,):
        raise LayoutMismatchError(f"z must have length k={layout.k}")
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    m = _embed_cells(layout)
    tg = -layout.tau + np.arange(m + 1) * (layout.tau / m)
    tg[-1] = 0.0
    values = np.zeros((m + 1, layout.n))
    for c, pts in _component_knots(layout, z).items():
        col = c - 1
        if len(pts) == 1:
            values[:, col] = pts[0][1]
            continue
        ts = np.array([t for t, _, _ in pts])
        vs = np.array([v for _, v, _ in pts])
        values[:, col] = np.interp(tg, ts, vs)
        for t, v in zip(ts, vs):
            values[_node_index(t, layout.tau, m), col] = v
    return HistorySegment(layout.n, layout.tau, tg, values)


def _bootstrap_segment(z, extras, layout: ObservableLayout, p: int) -> HistorySegment:
    z = np.asarray(z, dtype=float)
    extras = np.asarray(extras, dtype=float)
    if z.shape != (layout.k,):
        raise LayoutMismatchError(f"z must have length k={layout.k}")
    if extras.shape != (layout.extras_len(p),):
        raise LayoutMismatchError("extras length inconsistent with layout and p")
    m = _knot_cells(layout, p)
    tg = -layout.tau + np.arange(m + 1) * (layout.tau / m)
    tg[-1] = 0.0
    values = np.zeros((m + 1, layout.n))
    derivs = np.zeros((m + 1, layout.n))

    for c, pts in _component_knots(layout, z, extras, p).items():
        col = c - 1
        if len(pts) == 1:
            values[:, col] = pts[0][1]
            continue
        ts = np.array([t for t, _, _ in pts])
        vs = np.array([v for _, v, _ in pts])
        spline = CubicSpline(ts, vs, bc_type="natural")
        clipped = np.clip(tg, ts[0], ts[-1])
        values[:, col] = spline(clipped)
        inside = (tg >= ts[0] - 1e-15) & (tg <= ts[-1] + 1e-15)
        derivs[inside, col] = spline(clipped[inside], 1)
        for t, v, is_node in pts:
            if is_node:
                values[_node_index(t, layout.tau, m), col] = v
    return HistorySegment(layout.n, layout.tau, tg, values, derivs)


def embed_bootstrap(z, payload: BootstrapPayload,
                    layout: ObservableLayout) -> HistorySegment:
    """Natural-spline reconstruction through the embedded point and the
    payload's extra samples. restrict of the result is exactly z."""
    return _bootstrap_segment(z, payload.extras, layout, payload.p)


class _LayoutOps:
    """Precomputed linear maps from embedded data to step-grid samples.

    Both reconstructions are linear in their data, so resampling the
    reconstruction onto the integrator grid is a fixed tensor applied to
    z (initial) or to [z, extras] (bootstrap). Built once per
    (layout, p, grid) and reused for every batch.
    """

    def __init__(self, layout: ObservableLayout, p: int, cells: int):
        self.layout = layout
        self.p = p
        self.cells = cells
        self.h = layout.tau / cells
        k = layout.k
        e = layout.extras_len(p)
        self.extras_len = e

        self.init_vals = np.zeros((cells + 1, layout.n, k))
        self.init_ders = np.zeros((cells + 1, layout.n, k))
        for i in range(k):
            unit = np.zeros(k)
            unit[i] = 1.0
            v, d = _history_on_grid(embed_initial(unit, layout), cells)
            self.init_vals[:, :, i] = v
            self.init_ders[:, :, i] = d

        self.boot_vals = np.zeros((cells + 1, layout.n, k + e))
        self.boot_ders = np.zeros((cells + 1, layout.n, k + e))
        for i in range(k + e):
            data = np.zeros(k + e)
            data[i] = 1.0
            seg = _bootstrap_segment(data[:k], data[k:], layout, p)
            v, d = _history_on_grid(seg, cells)
            self.boot_vals[:, :, i] = v
            self.boot_ders[:, :, i] = d

        tau = layout.tau
        self.sample_pos = [
            (c - 1, (t + tau) / self.h) for c, t in layout.sample_specs()
        ]
        self.extra_pos = [
            (c - 1, (t + tau) / self.h) for c, t in layout.extra_specs(p)
        ]

    def histories_initial(self, zs):
        vals = np.einsum("gnk,bk->bgn", self.init_vals, zs)
        ders = np.einsum("gnk,bk->bgn", self.init_ders, zs)
        return vals, ders

    def histories_bootstrap(self, zs, extras):
        data = np.concatenate([zs, extras], axis=1)
        vals = np.einsum("gnk,bk->bgn", self.boot_vals, data)
        ders = np.einsum("gnk,bk->bgn", self.boot_ders, data)
        return vals, ders

    def _read(self, vals, ders, positions):
        out = np.empty((vals.shape[0], len(positions)))
        m = self.cells
        for j, (col, pos) in enumerate(positions):
            idx = int(round(pos))
            if abs(pos - idx) <= _NODE_SNAP * max(1, m):
                out[:, j] = vals[:, min(max(idx, 0), m), col]
                continue
            i = min(max(int(np.floor(pos)), 0), m - 1)
            th = pos - i
            v0, v1 = vals[:, i, col], vals[:, i + 1, col]
            d0, d1 = ders[:, i, col], ders[:, i + 1, col]
            t2, t3 = th * th, th * th * th
            out[:, j] = (
                v0
                + (v1 - v0) * (3 * t2 - 2 * t3)
                + ((t3 - 2 * t2 + th) * d0 + (t3 - t2) * d1) * self.h
            )
        return out

    def restrict_window(self, vals, ders):
        return self._read(vals, ders, self.sample_pos)

    def extras_window(self, vals, ders):
        if not self.extra_pos:
            return np.zeros((vals.shape[0], 0))
        return self._read(vals, ders, self.extra_pos)


@functools.lru_cache(maxsize=None)
def _ops(layout: ObservableLayout, p: int, cells: int) -> _LayoutOps:
    return _LayoutOps(layout, p, cells)


def _check_system(cfg: EmbeddingConfig, sys: DdeSystem):
    if abs(cfg.layout.tau - sys.tau) > 1e-12 * max(1.0, sys.tau):
        raise LayoutMismatchError("layout delay does not match the system")
    if cfg.layout.n != sys.n:
        raise LayoutMismatchError("layout dimension does not match the system")


def phi_batch(zs, cfg: EmbeddingConfig, sys: DdeSystem,
              extras=None, has_payload=None, m=None, p=None):
    """Apply the embedded map to a batch of points.

    zs: (B, k). extras: (B, E) bootstrap samples, used for the rows where
    has_payload is True; remaining rows embed piecewise-linearly.

    Returns (images (B, k), extras_out (B, E), finite (B,)). Rows that
    blow up are reported through ``finite``, not raised.
    """
    _check_system(cfg, sys)
    m = cfg.m if m is None else m
    p = cfg.p if p is None else p
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    cells = _cells_for(cfg.layout, p, cfg.steps_per_delay)
    ops = _ops(cfg.layout, p, cells)
    b = zs.shape[0]
    n_steps = m * (cells // cfg.layout.K)

    if has_payload is None:
        has_payload = np.zeros(b, dtype=bool)
    has_payload = np.asarray(has_payload, dtype=bool)

    vals0 = np.empty((b, cells + 1, cfg.layout.n))
    ders0 = np.empty_like(vals0)
    plain = ~has_payload
    if np.any(plain):
        vals0[plain], ders0[plain] = ops.histories_initial(zs[plain])
    if np.any(has_payload):
        vals0[has_payload], ders0[has_payload] = ops.histories_bootstrap(
            zs[has_payload], np.asarray(extras, dtype=float)[has_payload]
        )

    fv, fd = _integrate_grid(sys.rhs, vals0, ders0, n_steps, ops.h)
    finite = np.isfinite(fv).all(axis=(1, 2))
    images = ops.restrict_window(fv, fd)
    extras_out = ops.extras_window(fv, fd)
    bad = ~finite
    if np.any(bad):
        images[bad] = np.nan
        extras_out[bad] = np.nan
    return images, extras_out, finite


def phi(z, cfg: EmbeddingConfig, sys: DdeSystem,
        payload: Optional[BootstrapPayload] = None):
    """One application of the embedded map at a single point.

    Reconstructs the state (spline when a payload is supplied, piecewise
    linear otherwise), integrates m*omega, and reads the image and its
    bootstrap samples off the final state. Raises DiscardedPointError if
    the trajectory blows up.
    """
    z = np.asarray(z, dtype=float)
    extras = None
    has_payload = None
    if payload is not None:
        if payload.p != cfg.p:
            raise LayoutMismatchError("payload p does not match the config")
        extras = np.atleast_2d(np.asarray(payload.extras, dtype=float))
        has_payload = np.array([True])
    images, extras_out, finite = phi_batch(
        z[None], cfg, sys, extras=extras, has_payload=has_payload
    )
    if not finite[0]:
        raise DiscardedPointError("trajectory became non-finite")
    return images[0], BootstrapPayload(images[0], extras_out[0], cfg.p)
