"""Built-in delay systems with their reference parameterizations.

Each preset bundles the equation, the observable layout, the embedding
settings, the study box, and a sensible initial state for simulations.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .boxes import BoxRegion
from .dde import DdeSystem, HistorySegment
from .embedding import EmbeddingConfig, Observable, ObservableLayout, scalar_layout


@dataclass(frozen=True)
class ModelPreset:
    name: str
    system: DdeSystem
    config: EmbeddingConfig
    Q: BoxRegion
    excluded: Tuple[BoxRegion, ...]
    initial: HistorySegment
    note: str


def wright(alpha: float = 2.0, k: int = 5, m: int = 16,
           exclusion_radius: Optional[float] = None) -> ModelPreset:
    """u'(t) = -alpha u(t-1) (1 - u(t)^2).

    The zero solution loses stability in a supercritical Hopf bifurcation
    at alpha = pi/2; above it a stable slowly-oscillating periodic
    solution exists. With ``exclusion_radius`` set, a box of that radius
    around the origin is removed from the study region, which isolates
    the periodic orbit from the unstable manifold of zero.
    """
    tau = 1.0

    def rhs(y, yd):
        return -alpha * yd * (1.0 - y * y)

    system = DdeSystem(n=1, tau=tau, rhs=rhs)
    cfg = EmbeddingConfig(scalar_layout(tau, k), m=m,
                          d_bound=2.0, sigma_bound=0.0)
    Q = BoxRegion(np.zeros(k), np.full(k, 2.0))
    excluded = ()
    name = "wright"
    if exclusion_radius is not None:
        excluded = (BoxRegion(np.zeros(k), np.full(k, exclusion_radius)),)
        name = "wright-orbit"
    initial = HistorySegment.constant(tau, [0.05])
    return ModelPreset(name, system, cfg, Q, excluded, initial,
                       "Wright-type delay equation; Hopf bifurcation of "
                       "u=0 at alpha = pi/2")


def wright_orbit(alpha: float = 2.0, k: int = 5, m: int = 16,
                 exclusion_radius: float = 0.1) -> ModelPreset:
    """Wright preset with the origin neighborhood removed."""
    return wright(alpha=alpha, k=k, m=m, exclusion_radius=exclusion_radius)


def arneodo(alpha: float = 2.5, tau: float = 0.13, m: int = 15) -> ModelPreset:
    """Arneodo system with the delay in the first-derivative term.

    First-order form: u1' = u2, u2' = u3,
    u3' = -u3 - 2 u2(t-tau) + alpha u1 - u1^2. Equilibria (0,0,0) and
    (alpha,0,0); past the period doubling at tau ~ 0.11 (alpha = 2.5)
    the attractor holds a period-doubled limit cycle.
    """

    def rhs(y, yd):
        u1 = y[..., 0]
        u2 = y[..., 1]
        u3 = y[..., 2]
        du3 = -u3 - 2.0 * yd[..., 1] + alpha * u1 - u1 * u1
        return np.stack([u2, u3, du3], axis=-1)

    system = DdeSystem(n=3, tau=tau, rhs=rhs)
    layout = ObservableLayout(
        observables=(
            Observable(component=2, nu=-tau, count=3, divisor=2),
            Observable(component=1, nu=0.0, count=1, divisor=1),
            Observable(component=3, nu=0.0, count=1, divisor=1),
        ),
        tau=tau, n=3, K=2,
    )
    cfg = EmbeddingConfig(layout, m=m, d_bound=2.0, sigma_bound=0.0)
    # study-region factors per observed quantity: the u2 snapshots get
    # [-4,2] / [-4,4] / [-4,4], u1(0) gets [-1,5], u3(0) gets [-4,4]
    Q = BoxRegion.from_bounds([-4, -4, -4, -1, -4], [2, 4, 4, 5, 4])
    initial = HistorySegment.constant(tau, [alpha + 0.1, 0.0, 0.0])
    return ModelPreset("arneodo", system, cfg, Q, (), initial,
                       "delayed Arneodo system; period doubling of the "
                       "limit cycle near tau = 0.11 for alpha = 2.5")


def mackey_glass(beta: float = 2.0, gamma: float = 1.0, eta: float = 9.65,
                 tau: float = 2.0, k: int = 7, m: int = 12) -> ModelPreset:
    """u'(t) = beta u(t-tau) / (1 + u(t-tau)^eta) - gamma u(t).

    Blood production model of Mackey and Glass (1977). The nonlinearity
    is only defined for nonnegative delayed values; negative states yield
    NaN and the trajectory is treated as discarded.
    """

    def rhs(y, yd):
        ud = yd[..., 0]
        ok = ud >= 0
        powed = np.where(ok, ud, 0.0) ** eta
        prod = np.where(ok, beta * ud / (1.0 + powed), np.nan)
        return np.stack([prod - gamma * y[..., 0]], axis=-1)

    system = DdeSystem(n=1, tau=tau, rhs=rhs)
    cfg = EmbeddingConfig(scalar_layout(tau, k), m=m,
                          d_bound=2.0, sigma_bound=0.5)
    Q = BoxRegion.from_bounds(np.zeros(k), np.full(k, 1.5))
    initial = HistorySegment.constant(tau, [0.5])
    return ModelPreset("mackey-glass", system, cfg, Q, (), initial,
                       "Mackey-Glass blood production model (1977); "
                       "chaotic attractor of dimension about two")


PRESETS = {
    "wright": wright,
    "wright-orbit": wright_orbit,
    "arneodo": arneodo,
    "mackey-glass": mackey_glass,
}


def preset(name: str, **params) -> ModelPreset:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; "
                         f"choose from {sorted(PRESETS)}") from None
    return factory(**params)
