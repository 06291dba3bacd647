"""Plain-text run configuration.

INI-style sections with ``key = value`` lines; ``[observable]`` and
``[exclude]`` sections may repeat. Lines starting with # or ; are
comments. A config either names a preset (optionally overriding its
parameters), or a synthetic map for driver testing.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .boxes import BoxRegion
from .dde import DdeSystem, HistorySegment
from .embedding import EmbeddingConfig, Observable, ObservableLayout
from .errors import ConfigError
from .models import PRESETS, preset
from .subdivision import RunConfig, synthetic_map

_KNOWN_SECTIONS = {"system", "embedding", "observable", "domain", "exclude",
                   "run", "output"}
_REPEATABLE = {"observable", "exclude"}


def parse_sections(text: str) -> List[Tuple[str, dict]]:
    sections: List[Tuple[str, dict]] = []
    current: Optional[dict] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _KNOWN_SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            if name not in _REPEATABLE and any(s == name for s, _ in sections):
                raise ConfigError(f"line {lineno}: duplicate section [{name}]")
            current = {}
            sections.append((name, current))
            continue
        if current is None or "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()  # keys are case-sensitive: K (driver) vs k (dimension)
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = value.strip()
    return sections


def _section(sections, name) -> dict:
    for s, d in sections:
        if s == name:
            return d
    return {}


def _all_sections(sections, name) -> List[dict]:
    return [d for s, d in sections if s == name]


def _get(d, key, conv, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return conv(d[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {d[key]!r}") from exc


def _floats(s: str) -> np.ndarray:
    return np.array([float(x) for x in s.replace(",", " ").split()])


@dataclass
class RunSetup:
    """Everything a run needs, assembled from a config file."""

    kind: str                       # "dde" or "map"
    run: RunConfig
    Q: BoxRegion
    excluded: Tuple[BoxRegion, ...]
    out_dir: str
    emit: Tuple[str, ...]
    system: Optional[DdeSystem] = None
    embedding: Optional[EmbeddingConfig] = None
    initial: Optional[HistorySegment] = None
    map_fn: Optional[Callable] = None
    preset_name: Optional[str] = None
    raw_text: str = ""


_PRESET_PARAM_KEYS = {"alpha", "beta", "gamma", "eta", "tau", "k", "m",
                      "exclusion_radius"}
_INT_PRESET_KEYS = {"k", "m"}


def _build_layout(sections, tau, n, default_K) -> Optional[ObservableLayout]:
    blocks = _all_sections(sections, "observable")
    if not blocks:
        return None
    obs = []
    for b in blocks:
        obs.append(Observable(
            component=_get(b, "component", int, required=True),
            nu=_get(b, "nu", float, required=True),
            count=_get(b, "count", int, 1),
            divisor=_get(b, "divisor", int, 1),
        ))
    K = _get(_section(sections, "embedding"), "K", int, default_K)
    if K is None:
        raise ConfigError("[embedding] K is required with explicit observables")
    return ObservableLayout(tuple(obs), tau=tau, n=n, K=K)


def load_setup(text: str) -> RunSetup:
    """Assemble a RunSetup from config file text."""
    sections = parse_sections(text)
    system_sec = _section(sections, "system")
    emb_sec = _section(sections, "embedding")
    dom_sec = _section(sections, "domain")
    run_sec = _section(sections, "run")
    out_sec = _section(sections, "output")

    excluded = []
    for b in _all_sections(sections, "exclude"):
        center = _get(b, "center", _floats, required=True)
        radii = _get(b, "radii", _floats, required=True)
        if radii.size == 1:
            radii = np.full(center.size, float(radii[0]))
        excluded.append(BoxRegion(center, radii))

    lower = _get(dom_sec, "lower", _floats)
    upper = _get(dom_sec, "upper", _floats)
    Q = None
    if lower is not None or upper is not None:
        if lower is None or upper is None or lower.size != upper.size:
            raise ConfigError("[domain] needs matching lower and upper")
        if np.any(upper <= lower):
            raise ConfigError("[domain] upper must exceed lower")
        Q = BoxRegion.from_bounds(lower, upper)

    try:
        run = RunConfig(
            steps=_get(run_sec, "steps", int, 1),
            points_per_box=_get(run_sec, "points_per_box", int, 100),
            seed=_get(run_sec, "seed", int, 0),
            m=_get(run_sec, "m", int, None),
            p=_get(run_sec, "p", int, None),
            max_payloads_per_box=_get(run_sec, "max_payloads_per_box", int, 32),
            threads=_get(run_sec, "threads", int, 1),
            chunk_points=_get(run_sec, "chunk_points", int, None),
            checkpoint_every=_get(run_sec, "checkpoint_every", int, None),
        )
    except ValueError as exc:
        raise ConfigError(f"[run] {exc}") from exc

    out_dir = out_sec.get("directory", "out")
    emit = tuple(out_sec.get("emit", "covering report manifest").split())

    map_name = system_sec.get("map")
    if map_name:
        if Q is None:
            raise ConfigError("synthetic maps need an explicit [domain]")
        params = {}
        if "factor" in system_sec:
            params["factor"] = float(system_sec["factor"])
        if "angle" in system_sec:
            params["angle"] = float(system_sec["angle"])
        if "value" in system_sec:
            params["value"] = _floats(system_sec["value"])
        if "factors" in system_sec:
            params["factors"] = _floats(system_sec["factors"])
        try:
            fn = synthetic_map(map_name, Q.k, **params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return RunSetup("map", run, Q, tuple(excluded), out_dir, emit,
                        map_fn=fn, preset_name=f"map:{map_name}",
                        raw_text=text)

    name = system_sec.get("preset") or system_sec.get("rhs")
    if not name:
        raise ConfigError("[system] needs 'preset', 'rhs', or 'map'")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; "
                          f"choose from {sorted(PRESETS)}")
    params = {}
    for key in _PRESET_PARAM_KEYS:
        if key in system_sec:
            params[key] = int(system_sec[key]) if key in _INT_PRESET_KEYS \
                else float(system_sec[key])
    for key in ("k", "m"):
        if key in emb_sec:
            params[key] = int(emb_sec[key])
    try:
        model = preset(name, **params)
    except TypeError as exc:
        raise ConfigError(f"preset {name!r} rejected parameters: {exc}") from exc

    cfg = model.config
    layout = _build_layout(sections, model.system.tau, model.system.n,
                           cfg.layout.K)
    updates = {}
    if layout is not None:
        updates["layout"] = layout
    if "m" in emb_sec:
        updates["m"] = int(emb_sec["m"])
    if "p" in emb_sec:
        updates["p"] = int(emb_sec["p"])
    if "d_bound" in emb_sec:
        updates["d_bound"] = float(emb_sec["d_bound"])
    if "sigma_bound" in emb_sec:
        updates["sigma_bound"] = float(emb_sec["sigma_bound"])
    if "steps_per_delay" in emb_sec:
        updates["steps_per_delay"] = int(emb_sec["steps_per_delay"])
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    if "k" in emb_sec and int(emb_sec["k"]) != cfg.layout.k:
        raise ConfigError(f"[embedding] k={emb_sec['k']} but the layout "
                          f"has k={cfg.layout.k}")

    if Q is None:
        Q = model.Q
    if Q.k != cfg.layout.k:
        raise ConfigError(f"[domain] has dimension {Q.k}, layout k={cfg.layout.k}")
    excl = tuple(excluded) if excluded else model.excluded

    return RunSetup("dde", run, Q, excl, out_dir, emit,
                    system=model.system, embedding=cfg,
                    initial=model.initial, preset_name=model.name,
                    raw_text=text)


def load_setup_file(path: str) -> RunSetup:
    with open(path) as f:
        return load_setup(f.read())
