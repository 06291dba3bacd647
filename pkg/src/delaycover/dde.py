"""DDE states as functions on [-tau, 0] and method-of-steps integration.

States are sampled on a uniform grid; evaluation is piecewise linear when
only values are stored and cubic Hermite when derivative samples are
present. The integrator is a fixed-step classical RK4 whose step divides
the delay, so delayed lookups always hit either a stored node or the
midpoint of a cell of already-computed nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteStateError, OutOfDomainError

# Times this close to a grid node (in index units) are read as the node.
_NODE_SNAP = 1e-9

_DOMAIN_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DdeSystem:
    """The equation y'(t) = rhs(y(t), y(t - tau)) with one constant delay.

    ``rhs`` must broadcast over leading axes: called with two (..., n)
    arrays it returns a (..., n) array. The integrator relies on this to
    evaluate whole batches of trajectories at once.
    """

    n: int
    tau: float
    rhs: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if not self.tau > 0:
            raise ValueError("delay must be positive")


@dataclass(frozen=True)
class HistorySegment:
    """Samples of a state y on the uniform grid t_i = -tau + i*tau/M.

    ``values`` has one row per node. With ``derivs`` present evaluation
    uses cubic Hermite interpolation, otherwise piecewise linear.
    """

    n: int
    tau: float
    grid: np.ndarray
    values: np.ndarray
    derivs: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "grid", _readonly(self.grid))
        object.__setattr__(self, "values", _readonly(self.values))
        if self.derivs is not None:
            object.__setattr__(self, "derivs", _readonly(self.derivs))
        g, v = self.grid, self.values
        if g.ndim != 1 or g.size < 2:
            raise ValueError("grid needs at least two nodes")
        if v.shape != (g.size, self.n):
            raise ValueError("values must be (M+1, n)")
        if self.derivs is not None and self.derivs.shape != v.shape:
            raise ValueError("derivs must match values shape")
        if g[0] != -self.tau or g[-1] != 0.0:
            raise ValueError("grid must span exactly [-tau, 0]")
        steps = np.diff(g)
        if np.any(steps <= 0) or np.any(
            np.abs(steps - self.tau / (g.size - 1)) > 1e-12 * self.tau
        ):
            raise ValueError("grid must be uniform and increasing")

    @classmethod
    def from_values(cls, tau, values, derivs=None):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] == 1:
            values = values.T
        m = values.shape[0] - 1
        grid = -tau + np.arange(m + 1) * (tau / m)
        grid[0], grid[-1] = -tau, 0.0
        return cls(values.shape[1], tau, grid, values, derivs)

    @classmethod
    def constant(cls, tau, y, cells=1):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        values = np.tile(y, (cells + 1, 1))
        return cls.from_values(tau, values, derivs=np.zeros_like(values))

    @property
    def num_cells(self) -> int:
        return self.grid.size - 1

    def __call__(self, t):
        return evaluate_history(self, t)


def _hermite(v0, v1, d0, d1, h, theta):
    # written as v0 + (v1-v0)*h01 + ... so constant data is reproduced
    # exactly
    t2 = theta * theta
    t3 = t2 * theta
    return (
        v0
        + (v1 - v0) * (3 * t2 - 2 * t3)
        + ((t3 - 2 * t2 + theta) * d0 + (t3 - t2) * d1) * h
    )


def _hermite_deriv(v0, v1, d0, d1, h, theta):
    t2 = theta * theta
    return (
        (6 * t2 - 6 * theta) * (v0 - v1) / h
        + (3 * t2 - 4 * theta + 1) * d0
        + (3 * t2 - 2 * theta) * d1
    )


def _eval_uniform(values, derivs, t0, cell, t, want_deriv=False):
    """Interpolate rows sampled at t0 + i*cell; t is an array of times.

    Node-coincident times are returned as the stored row. Piecewise
    linear when derivs is None; interior PL derivative queries use the
    cell slope (right cell at nodes, left cell at the last node).
    """
    m = values.shape[0] - 1
    pos = (t - t0) / cell
    idx = np.clip(np.floor(pos).astype(int), 0, m - 1)
    theta = pos - idx
    near = np.rint(pos).astype(int)
    on_node = np.abs(pos - near) <= _NODE_SNAP
    near = np.clip(near, 0, m)

    v0, v1 = values[idx], values[idx + 1]
    th = theta[:, None]
    if derivs is None:
        out = v0 + th * (v1 - v0)
    else:
        out = _hermite(v0, v1, derivs[idx], derivs[idx + 1], cell, th)
    if np.any(on_node):
        out[on_node] = values[near[on_node]]
    if not want_deriv:
        return out

    if derivs is None:
        slope = (v1 - v0) / cell
        dout = slope.copy()
        if np.any(on_node):
            # right-cell slope at nodes; left cell at the final node
            j = np.where(near[on_node] < m, near[on_node], m - 1)
            dout[on_node] = (values[j + 1] - values[j]) / cell
    else:
        dout = _hermite_deriv(v0, v1, derivs[idx], derivs[idx + 1], cell, th)
        if np.any(on_node):
            dout[on_node] = derivs[near[on_node]]
    return out, dout


def evaluate_history(h: HistorySegment, t):
    """Value of the state at time t in [-tau, 0].

    Exact at grid nodes. Raises OutOfDomainError when t lies outside the
    domain by more than 1e-12.
    """
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < -h.tau - _DOMAIN_TOL) or np.any(ts > _DOMAIN_TOL):
        raise OutOfDomainError(f"time outside [-{h.tau}, 0]")
    ts = np.clip(ts, -h.tau, 0.0)
    out = _eval_uniform(h.values, h.derivs, -h.tau, h.tau / h.num_cells, ts)
    return out[0] if scalar else out


def _history_on_grid(h: HistorySegment, cells: int):
    """Resample a segment onto the grid with ``cells`` cells as (values, derivs).

    Derivatives come from stored derivs when present, otherwise from the
    piecewise-linear slopes (one-sided at -tau and 0).
    """
    if h.num_cells == cells:
        vals = np.asarray(h.values)
        if h.derivs is not None:
            return vals.copy(), np.asarray(h.derivs).copy()
        slopes = np.diff(vals, axis=0) / (h.tau / cells)
        ders = np.vstack([slopes, slopes[-1:]])
        return vals.copy(), ders
    ts = -h.tau + np.arange(cells + 1) * (h.tau / cells)
    ts[-1] = 0.0
    vals, ders = _eval_uniform(
        h.values, h.derivs, -h.tau, h.tau / h.num_cells, ts, want_deriv=True
    )
    return vals, ders


def _integrate_grid(rhs, vals0, ders0, n_steps, h, trace=False):
    """Batched RK4 by method of steps on the uniform step grid.

    vals0/ders0: (B, L+1, n) history samples covering [-tau, 0] with
    cell width h (L*h = tau). Delayed stage values are read from the
    stored nodes: the half-step stage falls exactly mid-cell, where the
    cubic Hermite interpolant of the dense output is used.

    Returns (final_vals, final_ders) of shape (B, L+1, n) holding the
    last delay window, plus (trace_vals, trace_ders) of shape
    (B, L+1+n_steps, n) when trace is requested. Non-finite rows are
    propagated, not raised; callers decide.
    """
    B, lp1, n = vals0.shape
    L = lp1 - 1
    vals = vals0.copy()
    ders = ders0.copy()
    if trace:
        tvals = np.empty((B, lp1 + n_steps, n))
        tders = np.empty((B, lp1 + n_steps, n))
        tvals[:, :lp1] = vals0
        tders[:, :lp1] = ders0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for a in range(L, L + n_steps):
            cur = a % lp1
            d0 = (a - L) % lp1
            d1 = (a - L + 1) % lp1
            y = vals[:, cur]
            yd0 = vals[:, d0]
            yd1 = vals[:, d1]
            ydm = 0.5 * (yd0 + yd1) + 0.125 * h * (ders[:, d0] - ders[:, d1])
            k1 = rhs(y, yd0)
            k2 = rhs(y + (0.5 * h) * k1, ydm)
            k3 = rhs(y + (0.5 * h) * k2, ydm)
            k4 = rhs(y + h * k3, yd1)
            ynew = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            dnew = rhs(ynew, yd1)
            nxt = (a + 1) % lp1
            vals[:, nxt] = ynew
            ders[:, nxt] = dnew
            if trace:
                tvals[:, a + 1] = ynew
                tders[:, a + 1] = dnew
    a_end = L + n_steps
    order = [(a_end - L + i) % lp1 for i in range(lp1)]
    if trace:
        return vals[:, order], ders[:, order], tvals, tders
    return vals[:, order], ders[:, order]


@dataclass(frozen=True)
class Trajectory:
    """Dense output of an integration: node samples on [-tau, duration]."""

    tau: float
    step: float
    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def evaluate(self, t):
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(ts < self.times[0] - _DOMAIN_TOL) or np.any(
            ts > self.times[-1] + _DOMAIN_TOL
        ):
            raise OutOfDomainError("time outside trajectory range")
        ts = np.clip(ts, self.times[0], self.times[-1])
        out = _eval_uniform(self.values, self.derivs, self.times[0], self.step, ts)
        return out[0] if scalar else out

    def write_text(self, path):
        write_trajectory_text(path, self.times, self.values)


def write_trajectory_text(path, times, values):
    """One line per sample: ``t v_1 ... v_n`` at 17 significant digits."""
    values = np.atleast_2d(values)
    with open(path, "w") as f:
        for t, row in zip(times, values):
            f.write(" ".join("%.17g" % x for x in (t, *row)) + "\n")


def read_trajectory_text(path):
    data = np.loadtxt(path, ndmin=2)
    return data[:, 0], data[:, 1:]


def _check_divides(step, span, name):
    m = int(round(span / step))
    if m < 1 or abs(m * step - span) > 1e-12 * max(1.0, abs(span)):
        raise ValueError(f"step must divide {name} exactly (got {span}/{step})")
    return m


def integrate(sys: DdeSystem, h0: HistorySegment, duration: float, step: float):
    """Integrate forward by ``duration`` and return (final state, dense output).

    The final state is the segment t -> y(duration + t) on [-tau, 0] with
    derivative samples taken from the rhs evaluations. Raises
    NonFiniteStateError when the trajectory leaves the finite range.
    """
    if abs(h0.tau - sys.tau) > 1e-12 * max(1.0, sys.tau):
        raise ValueError("history delay does not match the system")
    if step > sys.tau * (1 + 1e-12):
        raise ValueError("step must not exceed the delay")
    L = _check_divides(step, sys.tau, "tau")
    n_steps = _check_divides(step, duration, "duration")
    h = sys.tau / L

    vals0, ders0 = _history_on_grid(h0, L)
    fv, fd, tv, td = _integrate_grid(
        sys.rhs, vals0[None], ders0[None], n_steps, h, trace=True
    )
    if not np.all(np.isfinite(tv)):
        raise NonFiniteStateError("trajectory became non-finite")
    times = (np.arange(L + 1 + n_steps) - L) * h
    times[L] = 0.0
    traj = Trajectory(sys.tau, h, times, tv[0], td[0])
    grid = -sys.tau + np.arange(L + 1) * h
    grid[-1] = 0.0
    final = HistorySegment(sys.n, sys.tau, grid, fv[0], fd[0])
    return final, traj
