"""Readers for the covering and trajectory text formats.

Covering files: a header ``k=<k> depth=<d> count=<n>`` followed by one
line per box, ``<bitpath> <center_1..k> <radius_1..k>``. Trajectory
files: one ``t v_1 ... v_n`` line per sample.
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class Covering:
    k: int
    depth: int
    centers: np.ndarray   # (count, k)
    radii: np.ndarray     # (count, k)

    @property
    def count(self):
        return self.centers.shape[0]


def read_covering(path):
    with open(path) as f:
        header = f.readline().split()
        fields = dict(part.split("=", 1) for part in header)
        k = int(fields["k"])
        depth = int(fields["depth"])
        count = int(fields["count"])
        centers = np.empty((count, k))
        radii = np.empty((count, k))
        for i in range(count):
            parts = f.readline().split()
            if len(parts) != 1 + 2 * k:
                raise ValueError(f"box line {i + 1} has {len(parts)} fields, "
                                 f"expected {1 + 2 * k}")
            row = np.array([float(x) for x in parts[1:]])
            centers[i] = row[:k]
            radii[i] = row[k:]
    return Covering(k, depth, centers, radii)


def read_points(path):
    """Trajectory-format file as an (n_samples, dim) array (time dropped)."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] < 2:
        raise ValueError("trajectory file needs a time plus value columns")
    return data[:, 1:]
