"""Hierarchical box collections from cyclic bisection of an initial box.

A leaf at depth d is identified by its bit path: bit i (most significant
first) picks the lower or upper half along coordinate i mod k. Geometry
is recomputed from the root on demand, so a collection stores only the
root box, the depth, and the sorted active paths.

Membership uses half-open cells [lo, hi): a point on a shared face
belongs to the upper box; the outer upper boundary of the root is
closed. Points strictly inside an excluded region report no box.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

_MAX_DEPTH = 62  # bit paths are carried in int64 arrays


def _vector(x, k, name):
    a = np.asarray(x, dtype=float)
    if a.shape == ():
        a = np.full(k, float(a))
    if a.shape != (k,):
        raise ValueError(f"{name} must have length {k}")
    return a


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box given by center and positive half-widths."""

    center: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        radii = _vector(self.radii, center.size, "radii")
        if np.any(radii <= 0):
            raise ValueError("radii must be strictly positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def from_bounds(cls, lower, upper):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        return cls((lower + upper) / 2.0, (upper - lower) / 2.0)

    @property
    def k(self) -> int:
        return self.center.size

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radii

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radii

    def contains_interior(self, points) -> np.ndarray:
        """Strict interior test, rows of ``points``."""
        pts = np.atleast_2d(points)
        return (np.abs(pts - self.center) < self.radii).all(axis=1)


class BoxCollection:
    """Active depth-d leaves of the cyclic bisection tree over a root box."""

    def __init__(self, root: BoxRegion, depth: int, active: Sequence[int],
                 excluded: Sequence[BoxRegion] = (),
                 _stored_geometry=None):
        if depth < 0:
            raise ValueError("depth must be nonnegative")
        if depth > _MAX_DEPTH:
            raise ValueError(f"depth beyond {_MAX_DEPTH} is not supported")
        self.root = root
        self.depth = depth
        arr = np.array(sorted(set(int(p) for p in active)), dtype=np.int64)
        if arr.size and (arr[0] < 0 or arr[-1] >= (1 << depth)):
            raise ValueError("leaf path outside the tree at this depth")
        self._active = arr
        self.excluded = tuple(excluded)
        # geometry parsed verbatim from a covering file (byte-exact rewrite)
        self._stored_geometry = _stored_geometry

    @classmethod
    def initial(cls, root: BoxRegion, excluded: Sequence[BoxRegion] = ()):
        return cls(root, 0, [0], excluded)

    # -- basic queries ----------------------------------------------------

    @property
    def k(self) -> int:
        return self.root.k

    @property
    def count(self) -> int:
        return int(self._active.size)

    @property
    def is_empty(self) -> bool:
        return self._active.size == 0

    def active_paths(self) -> np.ndarray:
        return self._active.copy()

    def __contains__(self, path: int) -> bool:
        i = np.searchsorted(self._active, path)
        return i < self._active.size and self._active[i] == path

    def leaf_radii(self) -> np.ndarray:
        """Half-widths shared by every leaf at this depth.

        Coordinate i is bisected once per full cycle of k steps, plus
        once more when i < depth mod k.
        """
        full, rem = divmod(self.depth, self.k)
        splits = np.full(self.k, full)
        splits[:rem] += 1
        return self.root.radii * np.exp2(-splits.astype(float))

    def diameter(self) -> float:
        """Max-norm diameter of the leaves."""
        return float(2.0 * self.leaf_radii().max())

    def centers(self, paths: Optional[np.ndarray] = None) -> np.ndarray:
        """Centers of the given (default: all active) leaves."""
        if paths is None:
            paths = self._active
        paths = np.asarray(paths, dtype=np.int64)
        k = self.k
        out = np.tile(self.root.center, (paths.size, 1))
        for step in range(self.depth):
            c = step % k
            half = self.root.radii[c] * np.exp2(-float(step // k + 1))
            bits = (paths >> (self.depth - 1 - step)) & 1
            out[:, c] += np.where(bits == 1, half, -half)
        return out

    def leaf_center(self, path: int) -> np.ndarray:
        return self.centers(np.array([path], dtype=np.int64))[0]

    def leaf_box(self, path: int) -> BoxRegion:
        return BoxRegion(self.leaf_center(path), self.leaf_radii())

    # -- subdivision / selection ------------------------------------------

    def subdivide(self) -> "BoxCollection":
        """Split every active leaf in two along coordinate depth mod k."""
        children = np.repeat(self._active << 1, 2)
        children[1::2] |= 1
        return BoxCollection(self.root, self.depth + 1, children, self.excluded)

    def retain(self, hits) -> "BoxCollection":
        """Keep exactly the given active leaves."""
        hits = np.array(sorted(set(int(h) for h in hits)), dtype=np.int64)
        if hits.size:
            if not self._active.size:
                raise ValueError("hits must be a subset of the active leaves")
            pos = np.searchsorted(self._active, hits)
            ok = (pos < self._active.size) & (self._active[np.minimum(
                pos, self._active.size - 1)] == hits)
            if not np.all(ok):
                raise ValueError("hits must be a subset of the active leaves")
        stored = None
        if self._stored_geometry is not None:
            idx = np.searchsorted(self._active, hits)
            stored = self._stored_geometry[idx]
        return BoxCollection(self.root, self.depth, hits, self.excluded,
                             _stored_geometry=stored)

    # -- membership --------------------------------------------------------

    def locate_batch(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Leaf paths for rows of ``points``.

        Returns (paths, found): found is False outside the root, inside
        an excluded region, or where the leaf is not active. Paths are
        meaningful only where the point is inside the root.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.k:
            raise ValueError(f"points must have dimension {self.k}")
        lo = self.root.lower
        hi = self.root.upper
        with np.errstate(invalid="ignore"):
            inside = ((pts >= lo) & ((pts < hi) | (pts == hi))).all(axis=1)
            paths = np.zeros(pts.shape[0], dtype=np.int64)
            cur_lo = np.tile(lo, (pts.shape[0], 1))
            cur_hi = np.tile(hi, (pts.shape[0], 1))
            for step in range(self.depth):
                c = step % self.k
                mid = 0.5 * (cur_lo[:, c] + cur_hi[:, c])
                bits = pts[:, c] >= mid
                paths = (paths << 1) | bits.astype(np.int64)
                cur_lo[bits, c] = mid[bits]
                cur_hi[~bits, c] = mid[~bits]
            found = inside.copy()
            for region in self.excluded:
                found &= ~region.contains_interior(pts)
        pos = np.searchsorted(self._active, paths)
        pos_c = np.minimum(pos, max(self._active.size - 1, 0))
        if self._active.size:
            found &= self._active[pos_c] == paths
        else:
            found[:] = False
        return paths, found

    def locate(self, x) -> Optional[int]:
        """Active leaf containing x, or None."""
        paths, found = self.locate_batch(np.asarray(x, dtype=float)[None])
        return int(paths[0]) if found[0] else None

    # -- text format ---------------------------------------------------------

    def write_text(self, path):
        """Covering file: header then one active leaf per line."""
        radii = self.leaf_radii()
        with open(path, "w") as f:
            f.write(f"k={self.k} depth={self.depth} count={self.count}\n")
            if self.is_empty:
                return
            if self._stored_geometry is not None:
                centers = self._stored_geometry[:, :self.k]
                radii_rows = self._stored_geometry[:, self.k:]
            else:
                centers = self.centers()
                radii_rows = np.tile(radii, (self.count, 1))
            for p, c_row, r_row in zip(self._active, centers, radii_rows):
                bits = format(int(p), f"0{self.depth}b") if self.depth else "-"
                nums = " ".join("%.17g" % v for v in (*c_row, *r_row))
                f.write(f"{bits} {nums}\n")

    @classmethod
    def read_text(cls, path) -> "BoxCollection":
        """Read a covering file; re-writing it reproduces the bytes.

        Excluded regions are not part of the format and come back empty.
        """
        try:
            with open(path) as f:
                header = f.readline().split()
                fields = dict(part.split("=", 1) for part in header
                              if "=" in part)
                k = int(fields["k"])
                depth = int(fields["depth"])
                count = int(fields["count"])
                paths = np.empty(count, dtype=np.int64)
                geom = np.empty((count, 2 * k))
                for i in range(count):
                    parts = f.readline().split()
                    if len(parts) != 1 + 2 * k:
                        raise ValueError(
                            f"box line {i + 1}: expected {1 + 2 * k} fields")
                    paths[i] = 0 if parts[0] == "-" else int(parts[0], 2)
                    geom[i] = [float(x) for x in parts[1:]]
        except (KeyError, IndexError) as exc:
            raise ValueError(f"malformed covering file {path}: {exc}") from exc
        if count == 0:
            raise ValueError("cannot reconstruct the root of an empty covering")
        root = _root_from_leaf(paths[0], geom[0, :k], geom[0, k:], depth, k)
        order = np.argsort(paths)
        return cls(root, depth, paths[order], _stored_geometry=geom[order])


def _root_from_leaf(path, center, radii, depth, k):
    """Walk a leaf back up to the root (exact for dyadic geometry)."""
    c = np.array(center, dtype=float)
    r = np.array(radii, dtype=float)
    for step in range(depth - 1, -1, -1):
        coord = step % k
        bit = (int(path) >> (depth - 1 - step)) & 1
        c[coord] = c[coord] + r[coord] if bit == 0 else c[coord] - r[coord]
        r[coord] *= 2.0
    return BoxRegion(c, r)
