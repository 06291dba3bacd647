"""Render a 3D projection of a box covering, optionally with an orbit.

Usage: plot-covering covering.txt --proj 1 2 3 --orbit orbit.txt --out fig.png

Projection indices are 1-based. Coverings up to the cuboid threshold are
drawn as translucent boxes, larger ones as center points.
"""
import argparse
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from mpl_toolkits.mplot3d.art3d import Poly3DCollection  # noqa: E402

from .covering import read_covering, read_points  # noqa: E402

CUBOID_LIMIT = 50_000

# faces of the unit cube as corner-index quadruples
_CORNERS = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1)
                     for z in (-1, 1)], dtype=float)
_FACES = [
    (0, 1, 3, 2), (4, 5, 7, 6),
    (0, 1, 5, 4), (2, 3, 7, 6),
    (0, 2, 6, 4), (1, 3, 7, 5),
]


def _cuboids(ax, centers, radii, color, alpha):
    polys = []
    for c, r in zip(centers, radii):
        corners = c + _CORNERS * r
        polys.extend(corners[list(face)] for face in _FACES)
    ax.add_collection3d(Poly3DCollection(
        polys, facecolors=color, edgecolors="k",
        linewidths=0.15, alpha=alpha))


def plot_covering(covering_path, proj=(1, 2, 3), orbit_path=None,
                  out_path="covering.png", cuboid_limit=CUBOID_LIMIT,
                  title=None):
    """File-to-file rendering; returns the number of boxes drawn."""
    cov = read_covering(covering_path)
    if len(proj) != 3:
        raise ValueError("projection needs exactly three coordinate indices")
    idx = [p - 1 for p in proj]
    if any(i < 0 or i >= cov.k for i in idx):
        raise ValueError(f"projection indices must be in 1..{cov.k}")

    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(111, projection="3d")
    if cov.count == 0:
        print("warning: empty covering, drawing blank axes", file=sys.stderr)
    else:
        centers = cov.centers[:, idx]
        radii = cov.radii[:, idx]
        if cov.count <= cuboid_limit:
            _cuboids(ax, centers, radii, "tab:blue", alpha=0.25)
        else:
            ax.scatter(centers[:, 0], centers[:, 1], centers[:, 2],
                       s=1.0, c="tab:blue", alpha=0.5)
        lo = (centers - radii).min(axis=0)
        hi = (centers + radii).max(axis=0)
        ax.set_xlim(lo[0], hi[0])
        ax.set_ylim(lo[1], hi[1])
        ax.set_zlim(lo[2], hi[2])

    if orbit_path is not None:
        pts = read_points(orbit_path)
        if pts.shape[1] < max(idx) + 1:
            raise ValueError("orbit file has fewer coordinates than the "
                             "projection needs")
        ax.plot(pts[:, idx[0]], pts[:, idx[1]], pts[:, idx[2]],
                ".", color="tab:red", markersize=2.0, label="orbit")
        ax.legend(loc="upper right")

    ax.set_xlabel(f"x{proj[0]}")
    ax.set_ylabel(f"x{proj[1]}")
    ax.set_zlabel(f"x{proj[2]}")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return cov.count


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="plot-covering",
        description="3D projection of a box covering, optional orbit overlay")
    ap.add_argument("covering")
    ap.add_argument("--proj", nargs=3, type=int, default=(1, 2, 3),
                    metavar=("I", "J", "K"),
                    help="1-based coordinate indices to project onto")
    ap.add_argument("--orbit", help="trajectory-format point file to overlay")
    ap.add_argument("--out", default="covering.png")
    ap.add_argument("--title")
    ap.add_argument("--max-cuboids", type=int, default=CUBOID_LIMIT,
                    help="draw points instead of cuboids above this count")
    args = ap.parse_args(argv)
    try:
        n = plot_covering(args.covering, tuple(args.proj), args.orbit,
                          args.out, args.max_cuboids, args.title)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({n} boxes)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
