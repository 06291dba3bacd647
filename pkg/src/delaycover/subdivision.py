"""The subdivision/selection loop approximating a relative global attractor.

Every step bisects all active boxes, evaluates the map on a budget of
test points per box (stored bootstrap points first, uniform random fills
after), and keeps exactly the boxes hit by at least one image. Per-box
random draws are seeded from (global seed, depth, bit path), so results
do not depend on evaluation order or worker count.
"""
from __future__ import annotations

import dataclasses
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .boxes import BoxCollection, BoxRegion
from .dde import DdeSystem
from .embedding import BootstrapPayload, EmbeddingConfig, _cells_for, phi_batch
from .errors import EmptyCollectionError


@dataclass(frozen=True)
class RunConfig:
    """Run-level knobs for the subdivision loop.

    ``m`` and ``p`` override the embedding config when set. ``threads``
    splits evaluation chunks across a thread pool (numpy releases the
    GIL on the hot ops); results are merged in chunk order, so the
    output is identical for any thread count.
    """

    steps: int
    points_per_box: int = 100
    seed: int = 0
    m: Optional[int] = None
    p: Optional[int] = None
    max_payloads_per_box: int = 32
    threads: int = 1
    chunk_points: Optional[int] = None
    checkpoint_every: Optional[int] = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.points_per_box < 1:
            raise ValueError("points_per_box must be >= 1")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.max_payloads_per_box < 0:
            raise ValueError("max_payloads_per_box must be >= 0")


@dataclass
class StepRecord:
    depth: int
    boxes_subdivided: int
    boxes_retained: int
    points_evaluated: int
    points_skipped_excluded: int
    images_in_active: int
    images_outside: int
    images_excluded: int
    points_nonfinite: int
    payloads_stored: int
    wall_time: float


@dataclass
class SelectionReport:
    records: List[StepRecord] = field(default_factory=list)

    def add(self, record: StepRecord):
        if self.records:
            expected = 2 * self.records[-1].boxes_retained
            assert record.boxes_subdivided == expected, "subdivision doubled?"
        assert record.points_evaluated == (
            record.images_in_active + record.images_outside
            + record.images_excluded + record.points_nonfinite
        ), "image accounting broken"
        self.records.append(record)

    def to_table(self) -> str:
        head = (f"{'step':>4} {'depth':>5} {'boxes_in':>9} {'boxes_out':>9} "
                f"{'points':>8} {'skipped':>7} {'hits':>8} {'outside':>8} "
                f"{'excl':>6} {'nonfin':>6} {'payloads':>8} {'seconds':>8}")
        lines = [head]
        for i, r in enumerate(self.records, 1):
            lines.append(
                f"{i:>4} {r.depth:>5} {r.boxes_subdivided:>9} "
                f"{r.boxes_retained:>9} {r.points_evaluated:>8} "
                f"{r.points_skipped_excluded:>7} {r.images_in_active:>8} "
                f"{r.images_outside:>8} {r.images_excluded:>6} "
                f"{r.points_nonfinite:>6} {r.payloads_stored:>8} "
                f"{r.wall_time:>8.2f}"
            )
        return "\n".join(lines) + "\n"

    def to_keyvalues(self) -> str:
        """Machine-readable form; timing is excluded so identical runs
        produce identical bytes."""
        lines = [f"steps={len(self.records)}"]
        for i, r in enumerate(self.records, 1):
            for key in ("depth", "boxes_subdivided", "boxes_retained",
                        "points_evaluated", "points_skipped_excluded",
                        "images_in_active", "images_outside",
                        "images_excluded", "points_nonfinite",
                        "payloads_stored"):
                lines.append(f"step.{i}.{key}={getattr(r, key)}")
        return "\n".join(lines) + "\n"

    def write_table(self, path):
        with open(path, "w") as f:
            f.write(self.to_table())

    def write_keyvalues(self, path):
        with open(path, "w") as f:
            f.write(self.to_keyvalues())


class BootstrapStore:
    """Per-box FIFO cache of bootstrap payloads, capped per box."""

    def __init__(self, cap: int):
        self.cap = cap
        self._boxes: dict[int, deque] = {}

    def add(self, path: int, payload: BootstrapPayload):
        box = self._boxes.get(path)
        if box is None:
            box = self._boxes[path] = deque(maxlen=self.cap)
        box.append(payload)

    def get(self, path: int) -> list:
        box = self._boxes.get(path)
        return list(box) if box else []

    def total(self) -> int:
        return sum(len(b) for b in self._boxes.values())

    def split_for_subdivide(self, before: BoxCollection) -> "BootstrapStore":
        """Reassign payloads of depth-d boxes to their depth-(d+1) children."""
        coord = before.depth % before.k
        out = BootstrapStore(self.cap)
        for path in sorted(self._boxes):
            mid = before.leaf_center(path)[coord]
            for pl in self._boxes[path]:
                child = (int(path) << 1) | int(pl.z[coord] >= mid)
                out.add(child, pl)
        return out


def _box_rng(seed: int, depth: int, path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(
        entropy=seed,
        spawn_key=(depth, path & 0xFFFFFFFF, (path >> 32) & 0xFFFFFFFF),
    )
    return np.random.default_rng(ss)


def _chunked_eval(evaluate, zs, extras, hasp, chunk, threads):
    n = zs.shape[0]
    ranges = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda r: evaluate(zs[r[0]:r[1]],
                                   None if extras is None else extras[r[0]:r[1]],
                                   None if hasp is None else hasp[r[0]:r[1]]),
                ranges,
            ))
    else:
        parts = [evaluate(zs[a:b],
                          None if extras is None else extras[a:b],
                          None if hasp is None else hasp[a:b])
                 for a, b in ranges]
    imgs = np.vstack([p[0] for p in parts])
    extras_out = None
    if parts[0][1] is not None:
        extras_out = np.vstack([p[1] for p in parts])
    finite = np.concatenate([p[2] for p in parts])
    return imgs, extras_out, finite


def _auto_chunk(rc: RunConfig, window_elems: int) -> int:
    if rc.chunk_points:
        return rc.chunk_points
    target = 1.2e7 / max(1, rc.threads)
    return int(min(65536, max(2048, target / max(1, window_elems))))


def _drive(coll: BoxCollection, rc: RunConfig, evaluate, extras_len: int,
           use_payloads: bool, extra_points, on_checkpoint, chunk: int):
    report = SelectionReport()
    store = BootstrapStore(rc.max_payloads_per_box)
    k = coll.k
    ppb = rc.points_per_box

    for step in range(1, rc.steps + 1):
        t0 = time.perf_counter()
        before = coll
        coll = coll.subdivide()
        if use_payloads:
            store = store.split_for_subdivide(before)

        injected = {}
        if extra_points is not None:
            paths, found = coll.locate_batch(extra_points)
            for pt, path, ok in zip(extra_points, paths, found):
                if ok:
                    injected.setdefault(int(path), []).append(
                        np.asarray(pt, dtype=float))

        active = coll.active_paths()
        centers = coll.centers()
        radii = coll.leaf_radii()
        z_parts, extra_parts, hasp_parts = [], [], []
        skipped_excluded = 0
        for path, center in zip(active, centers):
            taken = 0
            if use_payloads:
                pls = store.get(int(path))[:ppb]
                if pls:
                    z_parts.append(np.array([pl.z for pl in pls]))
                    extra_parts.append(np.array([pl.extras for pl in pls]))
                    hasp_parts.append(np.ones(len(pls), dtype=bool))
                    taken += len(pls)
            pts = injected.get(int(path))
            if pts:
                pts = pts[: ppb - taken]
                if pts:
                    z_parts.append(np.array(pts))
                    extra_parts.append(np.zeros((len(pts), extras_len)))
                    hasp_parts.append(np.zeros(len(pts), dtype=bool))
                    taken += len(pts)
            fill = ppb - taken
            if fill > 0:
                rng = _box_rng(rc.seed, coll.depth, int(path))
                draw = rng.uniform(center - radii, center + radii, (fill, k))
                for region in coll.excluded:
                    inside = region.contains_interior(draw)
                    skipped_excluded += int(inside.sum())
                    draw = draw[~inside]
                if draw.shape[0]:
                    z_parts.append(draw)
                    extra_parts.append(np.zeros((draw.shape[0], extras_len)))
                    hasp_parts.append(np.zeros(draw.shape[0], dtype=bool))

        zs = np.vstack(z_parts) if z_parts else np.zeros((0, k))
        hasp = np.concatenate(hasp_parts) if hasp_parts else np.zeros(0, bool)
        extras = np.vstack(extra_parts) if extra_parts else np.zeros((0, extras_len))

        if zs.shape[0]:
            imgs, extras_out, finite = _chunked_eval(
                evaluate, zs, extras if use_payloads else None,
                hasp if use_payloads else None, chunk, rc.threads)
        else:
            imgs = np.zeros((0, k))
            extras_out = np.zeros((0, extras_len))
            finite = np.zeros(0, dtype=bool)

        paths_img, found = coll.locate_batch(imgs) if imgs.shape[0] else (
            np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool))
        n_nonfinite = int((~finite).sum())
        fin_imgs = imgs[finite].reshape(-1, k)
        excl_mask = np.zeros(fin_imgs.shape[0], dtype=bool)
        for region in coll.excluded:
            excl_mask |= region.contains_interior(fin_imgs)
        n_excluded = int(excl_mask.sum())
        n_hits = int(found.sum())
        n_outside = int(finite.sum()) - n_hits - n_excluded

        new_store = BootstrapStore(rc.max_payloads_per_box)
        if use_payloads and n_hits:
            hit_idx = np.flatnonzero(found)
            for i in hit_idx:
                new_store.add(int(paths_img[i]), BootstrapPayload(
                    imgs[i].copy(), extras_out[i].copy(),
                    rc.p if rc.p is not None else 0))
        hits = np.unique(paths_img[found])
        coll = coll.retain(hits)
        store = new_store

        report.add(StepRecord(
            depth=coll.depth,
            boxes_subdivided=int(active.size),
            boxes_retained=coll.count,
            points_evaluated=int(zs.shape[0]),
            points_skipped_excluded=skipped_excluded,
            images_in_active=n_hits,
            images_outside=n_outside,
            images_excluded=n_excluded,
            points_nonfinite=n_nonfinite,
            payloads_stored=store.total(),
            wall_time=time.perf_counter() - t0,
        ))

        if coll.is_empty:
            raise EmptyCollectionError(
                f"all boxes discarded at depth {coll.depth}",
                collection=coll, report=report)
        if on_checkpoint and rc.checkpoint_every \
                and step % rc.checkpoint_every == 0:
            on_checkpoint(coll, step)

    return coll, report


def run_subdivision(sys: DdeSystem, cfg: EmbeddingConfig, Q: BoxRegion,
                    rc: RunConfig, excluded: Sequence[BoxRegion] = (),
                    on_checkpoint=None):
    """Approximate the relative global attractor of the embedded DDE map.

    Returns (final collection, report). Raises EmptyCollectionError
    (carrying both) when every box is discarded.
    """
    if Q.k != cfg.layout.k:
        raise ValueError(f"Q must live in dimension k={cfg.layout.k}")
    m = rc.m if rc.m is not None else cfg.m
    p = rc.p if rc.p is not None else cfg.p
    rc_eff = dataclasses.replace(rc, m=m, p=p)
    extras_len = cfg.layout.extras_len(p)

    def evaluate(zs, extras, hasp):
        return phi_batch(zs, cfg, sys, extras=extras, has_payload=hasp,
                         m=m, p=p)

    cells = _cells_for(cfg.layout, p, cfg.steps_per_delay)
    chunk = _auto_chunk(rc, (cells + 1) * cfg.layout.n)
    coll = BoxCollection.initial(Q, excluded=excluded)
    return _drive(coll, rc_eff, evaluate, extras_len, True, None,
                  on_checkpoint, chunk)


def run_subdivision_map(map_fn: Callable[[np.ndarray], np.ndarray],
                        Q: BoxRegion, rc: RunConfig,
                        excluded: Sequence[BoxRegion] = (),
                        extra_points=None, on_checkpoint=None):
    """Subdivision with an explicit map on R^k instead of the DDE map.

    Same selection logic, no bootstrap payloads. ``extra_points`` are
    injected as additional test points in whichever boxes contain them
    (ahead of the random fills); useful for seeding known orbits.
    """

    def evaluate(zs, extras, hasp):
        imgs = np.atleast_2d(np.asarray(map_fn(zs), dtype=float))
        finite = np.isfinite(imgs).all(axis=1)
        return imgs, None, finite

    coll = BoxCollection.initial(Q, excluded=excluded)
    chunk = rc.chunk_points or 1 << 18
    return _drive(coll, rc, evaluate, 0, False, extra_points,
                  on_checkpoint, chunk)


def synthetic_map(name: str, k: int, **params) -> Callable:
    """Named test maps for the synthetic driver and the CLI."""
    if name == "identity":
        return lambda X: np.array(X, copy=True)
    if name == "contraction":
        factor = float(params.get("factor", 0.5))
        return lambda X: factor * np.asarray(X)
    if name == "constant":
        c = np.asarray(params.get("value", np.zeros(k)), dtype=float)
        if c.shape == ():
            c = np.full(k, float(c))
        return lambda X: np.tile(c, (np.atleast_2d(X).shape[0], 1))
    if name == "diag":
        factors = np.asarray(params.get("factors", [0.5, 1.2]), dtype=float)
        if factors.size != k:
            factors = np.resize(factors, k)
        return lambda X: np.asarray(X) * factors
    if name == "rotation":
        angle = float(params.get("angle", np.pi * (np.sqrt(5.0) - 1.0)))
        ca, sa = np.cos(angle), np.sin(angle)

        def rot(X):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            out = 0.5 * X.copy()
            x, y = X[:, 0], X[:, 1]
            r = np.hypot(x, y)
            rn = 0.5 * (r + 1.0)
            with np.errstate(invalid="ignore", divide="ignore"):
                scale = np.where(r > 0, rn / np.where(r > 0, r, 1.0), 0.0)
            xs = np.where(r > 0, x * scale, rn)
            ys = np.where(r > 0, y * scale, 0.0)
            out[:, 0] = ca * xs - sa * ys
            out[:, 1] = sa * xs + ca * ys
            return out

        return rot
    raise ValueError(f"unknown synthetic map {name!r}")
