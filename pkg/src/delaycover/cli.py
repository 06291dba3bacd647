"""Command-line entry points: run, simulate, analyze, presets.

Exit codes: 0 success, 2 configuration problem, 3 empty collection.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys as _sys

import numpy as np

from . import __version__
from .analysis import (
    containment,
    estimate_box_dimension,
    hausdorff,
    poincare_slice,
    simulate_embedded_orbit,
)
from .boxes import BoxCollection
from .config import RunSetup, load_setup_file
from .dde import read_trajectory_text, write_trajectory_text
from .errors import ConfigError, DelayCoverError, EmptyCollectionError
from .models import PRESETS, preset
from .subdivision import run_subdivision, run_subdivision_map


def _write_manifest(setup: RunSetup, out_dir, seed, extra=()):
    lines = [
        f"delaycover {__version__}",
        f"system {setup.preset_name}",
        f"seed {seed}",
        *extra,
        "config:",
    ]
    body = "\n".join(lines) + "\n" + setup.raw_text
    if not setup.raw_text.endswith("\n"):
        body += "\n"
    with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
        f.write(body)


def cmd_run(args) -> int:
    try:
        setup = load_setup_file(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    rc = setup.run
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.checkpoint_every is not None:
        overrides["checkpoint_every"] = args.checkpoint_every
    if overrides:
        rc = dataclasses.replace(rc, **overrides)
    out_dir = args.out or setup.out_dir
    os.makedirs(out_dir, exist_ok=True)

    def checkpoint(coll, step):
        coll.write_text(os.path.join(out_dir, f"covering_d{coll.depth:02d}.txt"))

    try:
        if setup.kind == "map":
            coll, report = run_subdivision_map(
                setup.map_fn, setup.Q, rc, excluded=setup.excluded,
                on_checkpoint=checkpoint)
        else:
            coll, report = run_subdivision(
                setup.system, setup.embedding, setup.Q, rc,
                excluded=setup.excluded, on_checkpoint=checkpoint)
    except EmptyCollectionError as exc:
        print(f"empty collection: {exc}", file=_sys.stderr)
        if exc.report is not None and "report" in setup.emit:
            exc.report.write_table(os.path.join(out_dir, "report.txt"))
            exc.report.write_keyvalues(os.path.join(out_dir, "report.kv"))
        _write_manifest(setup, out_dir, rc.seed)
        return 3

    if "covering" in setup.emit:
        coll.write_text(os.path.join(out_dir, "covering.txt"))
    if "report" in setup.emit:
        report.write_table(os.path.join(out_dir, "report.txt"))
        report.write_keyvalues(os.path.join(out_dir, "report.kv"))
    if "manifest" in setup.emit:
        _write_manifest(setup, out_dir, rc.seed)
    print(report.to_table(), end="")
    print(f"final covering: {coll.count} boxes at depth {coll.depth}")
    return 0


def cmd_simulate(args) -> int:
    try:
        setup = load_setup_file(args.config)
        if setup.kind != "dde":
            raise ConfigError("simulate needs a DDE system, not a map")
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return 2
    out_dir = args.out or setup.out_dir
    os.makedirs(out_dir, exist_ok=True)
    cfg = setup.embedding
    h0 = setup.initial
    if args.initial is not None:
        from .dde import HistorySegment
        y = np.array([float(x) for x in args.initial.split(",")])
        h0 = HistorySegment.constant(setup.system.tau, y)

    # durations are integer multiples of the integrator step; round the
    # request and say so
    step = setup.system.tau / cfg.grid_cells()
    requested = args.spacing if args.spacing is not None else cfg.layout.omega
    spacing = max(1, round(requested / step)) * step
    transient = round(args.transient / step) * step
    if abs(spacing - requested) > 1e-12 * max(1.0, requested):
        print(f"note: spacing rounded to {spacing:.12g}")
    if abs(transient - args.transient) > 1e-12 * max(1.0, args.transient):
        print(f"note: transient rounded to {transient:.12g}")

    points, (times, values) = simulate_embedded_orbit(
        setup.system, cfg, h0, transient=transient,
        samples=args.samples, spacing=spacing, return_trace=True)

    write_trajectory_text(os.path.join(out_dir, "trajectory.txt"),
                          times, values)
    sample_times = transient + spacing * np.arange(args.samples)
    write_trajectory_text(os.path.join(out_dir, "orbit.txt"),
                          sample_times, points)
    print(f"wrote {args.samples} embedded samples to {out_dir}/orbit.txt")
    return 0


def cmd_analyze(args) -> int:
    try:
        coverings = [BoxCollection.read_text(p) for p in args.coverings]
    except (OSError, ValueError) as exc:
        print(f"cannot read covering: {exc}", file=_sys.stderr)
        return 2
    ks = {c.k for c in coverings}
    if len(ks) != 1:
        print(f"coverings disagree on k: {sorted(ks)}", file=_sys.stderr)
        return 2
    k = ks.pop()
    finest = max(coverings, key=lambda c: c.depth)
    lines = []
    for c in sorted(coverings, key=lambda c: c.depth):
        lines.append(f"covering.depth.{c.depth}.count={c.count}")
        lines.append(f"covering.depth.{c.depth}.diameter={c.diameter():.17g}")

    if args.points:
        try:
            _, pts = read_trajectory_text(args.points)
        except (OSError, ValueError) as exc:
            print(f"cannot read points: {exc}", file=_sys.stderr)
            return 2
        if pts.shape[1] != k:
            print(f"points have dimension {pts.shape[1]}, coverings k={k}",
                  file=_sys.stderr)
            return 2
        frac = containment(finest, pts)
        lines.append(f"containment.depth.{finest.depth}={frac:.6f}")
        dist = hausdorff(pts, finest.centers())
        lines.append(f"hausdorff.points.centers={dist:.17g}")

    if len(coverings) >= 3:
        try:
            dim = estimate_box_dimension(coverings)
            lines.append(f"dimension.estimate={dim:.6f}")
        except DelayCoverError as exc:
            lines.append(f"dimension.estimate.error={exc}")

    if args.slice is not None:
        coord, value, thickness = args.slice
        sub = poincare_slice(finest, int(coord), value, thickness)
        lines.append(f"slice.coordinate={int(coord)}")
        lines.append(f"slice.count={sub.count}")

    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    return 0


def cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        model = preset(name)
        cfg = model.config
        Q = model.Q
        print(f"{name}: n={model.system.n} tau={model.system.tau:g} "
              f"k={cfg.layout.k} m={cfg.m} K={cfg.layout.K} "
              f"Q=[{', '.join(f'{a:g}..{b:g}' for a, b in zip(Q.lower, Q.upper))}]")
        print(f"    {model.note}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="delaycover",
        description="Box coverings of invariant sets of delay equations",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the subdivision scheme")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--checkpoint-every", type=int)
    p_run.set_defaults(fn=cmd_run)

    p_sim = sub.add_parser("simulate", help="direct simulation, embedded samples")
    p_sim.add_argument("config")
    p_sim.add_argument("--transient", type=float, default=200.0)
    p_sim.add_argument("--samples", type=int, default=500)
    p_sim.add_argument("--spacing", type=float, default=None,
                       help="sample spacing (default: one driver span omega)")
    p_sim.add_argument("--initial", help="constant initial state, comma-separated")
    p_sim.add_argument("--out")
    p_sim.set_defaults(fn=cmd_simulate)

    p_an = sub.add_parser("analyze", help="containment / distances / dimension")
    p_an.add_argument("coverings", nargs="+", metavar="covering.txt")
    p_an.add_argument("--points", help="trajectory-format point file")
    p_an.add_argument("--slice", nargs=3, type=float, default=None,
                      metavar=("COORD", "VALUE", "THICKNESS"))
    p_an.add_argument("--out", help="write the key-value report here")
    p_an.set_defaults(fn=cmd_analyze)

    p_pre = sub.add_parser("presets", help="list built-in systems")
    p_pre.set_defaults(fn=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
