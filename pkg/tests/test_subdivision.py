import numpy as np
import pytest

from delaycover import (
    BoxRegion,
    DdeSystem,
    EmbeddingConfig,
    EmptyCollectionError,
    RunConfig,
    run_subdivision,
    run_subdivision_map,
    scalar_layout,
    synthetic_map,
)
from gridoracle import GridOracle, collection_index_set, within_one_box_layer


def square(half=1.0, k=2):
    return BoxRegion.from_bounds(np.full(k, -half), np.full(k, half))


def run_with_checkpoints(map_fn, Q, steps, ppb, seed, **kw):
    sets = []

    def on_cp(coll, step):
        sets.append(collection_index_set(coll, Q.lower, Q.upper))

    rc = RunConfig(steps=steps, points_per_box=ppb, seed=seed,
                   checkpoint_every=1)
    coll, rep = run_subdivision_map(map_fn, Q, rc, on_checkpoint=on_cp, **kw)
    return coll, rep, sets


class TestSyntheticMaps:
    def test_constant_map_exact(self):
        Q = square()
        target = np.array([0.3, -0.7])
        fn = synthetic_map("constant", 2, value=target)
        coll, rep, sets = run_with_checkpoints(fn, Q, 10, 50, seed=7)
        oracle = GridOracle(Q.lower, Q.upper).run(fn, 10, 23)
        assert sets == oracle
        assert all(len(s) == 1 for s in sets)
        assert coll.locate(target) is not None

    def test_identity_keeps_everything(self):
        Q = square()
        fn = synthetic_map("identity", 2)
        coll, rep, sets = run_with_checkpoints(fn, Q, 8, 50, seed=7)
        oracle = GridOracle(Q.lower, Q.upper).run(fn, 8, 23)
        assert sets == oracle
        assert coll.count == 2 ** 8

    def test_contraction_matches_oracle(self):
        Q = square()
        fn = synthetic_map("contraction", 2)
        coll, rep, sets = run_with_checkpoints(fn, Q, 10, 50, seed=7)
        oracle = GridOracle(Q.lower, Q.upper).run(fn, 10, 23)
        assert sets == oracle
        # everything retained sits near the origin
        dist = np.abs(coll.centers()).max()
        assert dist <= 2 ** -5 + coll.diameter()

    def test_hyperbolic_diag(self):
        Q = square()
        fn = synthetic_map("diag", 2, factors=[0.5, 1.2])
        coll, rep, sets = run_with_checkpoints(fn, Q, 12, 50, seed=7)
        oracle = GridOracle(Q.lower, Q.upper).run(fn, 12, 23)
        for got, want in zip(sets, oracle):
            assert within_one_box_layer(got, want)
        # the unstable axis {x1 = 0} is covered
        xs = np.linspace(-1, 1, 200)
        pts = np.stack([np.zeros_like(xs), xs], 1)
        _, found = coll.locate_batch(pts)
        assert found.all()

    def test_rotation_on_circle(self):
        Q = square(1.5)
        fn = synthetic_map("rotation", 2)
        coll, rep, sets = run_with_checkpoints(fn, Q, 10, 50, seed=7)
        oracle = GridOracle(Q.lower, Q.upper).run(fn, 10, 23)
        for got, want in zip(sets, oracle):
            assert within_one_box_layer(got, want)
        # circle samples are covered at the final depth
        th = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
        circle = np.stack([np.cos(th), np.sin(th)], 1)
        _, found = coll.locate_batch(circle)
        assert found.all()


class TestDriverProperties:
    def test_monotone_coverage(self):
        # every active leaf has an active ancestor at the previous depth
        Q = square(1.5)
        fn = synthetic_map("rotation", 2)
        chain = []

        def on_cp(coll, step):
            chain.append(coll.active_paths())

        rc = RunConfig(steps=9, points_per_box=40, seed=1, checkpoint_every=1)
        run_subdivision_map(fn, Q, rc, on_checkpoint=on_cp)
        for prev, cur in zip(chain, chain[1:]):
            assert np.isin(cur >> 1, prev).all()

    def test_determinism_bytes(self, tmp_path):
        Q = square(1.5)
        files = []
        for run in range(2):
            fn = synthetic_map("rotation", 2)
            rc = RunConfig(steps=8, points_per_box=30, seed=99)
            coll, rep = run_subdivision_map(fn, Q, rc)
            f = tmp_path / f"r{run}.txt"
            coll.write_text(f)
            files.append((f.read_bytes(), rep.to_keyvalues()))
        assert files[0] == files[1]

    def test_thread_count_does_not_change_result(self):
        w = square(2.0, 3)
        sys_ = DdeSystem(1, 1.0, lambda y, yd: -0.5 * yd)
        cfg = EmbeddingConfig(scalar_layout(1.0, 3), m=4,
                              d_bound=1.0, sigma_bound=0.0)
        outs = []
        for threads in (1, 3):
            rc = RunConfig(steps=6, points_per_box=20, seed=5,
                           threads=threads, chunk_points=64)
            coll, rep = run_subdivision(sys_, cfg, w, rc)
            outs.append((tuple(coll.active_paths()), rep.to_keyvalues()))
        assert outs[0] == outs[1]

    def test_accounting_identity(self):
        Q = square(1.5)
        fn = synthetic_map("diag", 2, factors=[0.6, 1.3])
        rc = RunConfig(steps=8, points_per_box=25, seed=3)
        coll, rep = run_subdivision_map(fn, Q, rc)
        for r in rep.records:
            assert r.points_evaluated == (
                r.images_in_active + r.images_outside
                + r.images_excluded + r.points_nonfinite)

    def test_empty_collection_raises(self):
        Q = square()
        fn = synthetic_map("constant", 2, value=[5.0, 5.0])  # outside Q
        rc = RunConfig(steps=3, points_per_box=10, seed=0)
        with pytest.raises(EmptyCollectionError) as exc:
            run_subdivision_map(fn, Q, rc)
        assert exc.value.collection.is_empty
        assert exc.value.report.records

    def test_nonfinite_images_discarded(self):
        Q = square()

        def nasty(X):
            out = np.array(X, copy=True)
            out[np.asarray(X)[:, 0] > 0] = np.nan
            return out

        rc = RunConfig(steps=2, points_per_box=20, seed=0)
        coll, rep = run_subdivision_map(nasty, Q, rc)
        assert any(r.points_nonfinite > 0 for r in rep.records)

    def test_invariant_orbit_boxes_survive(self):
        # boxes hit by images of their own orbit samples are never
        # discarded: inject a rotation orbit as extra test points
        Q = square(1.5)
        angle = np.pi * (np.sqrt(5.0) - 1.0)
        fn = synthetic_map("rotation", 2, angle=angle)
        th = angle * np.arange(400)
        orbit = np.stack([np.cos(th), np.sin(th)], 1)
        survivors = []

        def on_cp(coll, step):
            _, found = coll.locate_batch(orbit[1:])
            survivors.append(found.all())

        rc = RunConfig(steps=10, points_per_box=10, seed=2,
                       checkpoint_every=1)
        run_subdivision_map(fn, Q, rc, extra_points=orbit, on_checkpoint=on_cp)
        assert all(survivors)

    def test_excluded_region_never_hit(self):
        # the rotation attractor (unit circle) survives removal of an
        # origin neighborhood; nothing inside the hole is ever retained
        Q = square(1.5)
        hole = BoxRegion(np.zeros(2), np.full(2, 0.2))
        fn = synthetic_map("rotation", 2)
        rc = RunConfig(steps=8, points_per_box=40, seed=4)
        coll, rep = run_subdivision_map(fn, Q, rc, excluded=[hole])
        assert not coll.is_empty
        centers = coll.centers()
        inside = (np.abs(centers) + coll.leaf_radii() <= 0.2).all(axis=1)
        assert not inside.any()
        assert sum(r.points_skipped_excluded for r in rep.records) > 0

    def test_contraction_into_hole_empties(self):
        # with the only invariant set excluded, selection runs dry
        Q = square()
        hole = BoxRegion(np.zeros(2), np.full(2, 0.2))
        fn = synthetic_map("contraction", 2)
        rc = RunConfig(steps=10, points_per_box=40, seed=4)
        with pytest.raises(EmptyCollectionError):
            run_subdivision_map(fn, Q, rc, excluded=[hole])


class TestReport:
    def test_table_and_keyvalues(self):
        Q = square()
        fn = synthetic_map("contraction", 2)
        rc = RunConfig(steps=4, points_per_box=10, seed=1)
        coll, rep = run_subdivision_map(fn, Q, rc)
        table = rep.to_table()
        assert "boxes_out" in table and len(table.splitlines()) == 5
        kv = rep.to_keyvalues()
        assert "step.1.depth=1" in kv
        assert "wall" not in kv  # timing kept out of the deterministic file

    def test_writers(self, tmp_path):
        Q = square()
        fn = synthetic_map("identity", 2)
        rc = RunConfig(steps=2, points_per_box=5, seed=1)
        _, rep = run_subdivision_map(fn, Q, rc)
        rep.write_table(tmp_path / "r.txt")
        rep.write_keyvalues(tmp_path / "r.kv")
        assert (tmp_path / "r.txt").read_text().startswith("step")
        assert "step.2.boxes_retained=" in (tmp_path / "r.kv").read_text()


class TestBootstrapThreading:
    def test_payloads_flow_and_are_capped(self):
        sys_ = DdeSystem(1, 1.0, lambda y, yd: -0.5 * yd)
        cfg = EmbeddingConfig(scalar_layout(1.0, 3), m=4,
                              d_bound=1.0, sigma_bound=0.0)
        Q = square(1.0, 3)
        rc = RunConfig(steps=5, points_per_box=30, seed=8,
                       max_payloads_per_box=4)
        coll, rep = run_subdivision(sys_, cfg, Q, rc)
        stored = [r.payloads_stored for r in rep.records]
        assert stored[-1] > 0
        assert stored[-1] <= 4 * rep.records[-1].boxes_retained
