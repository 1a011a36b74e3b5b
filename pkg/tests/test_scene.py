import math

import numpy as np
import pytest

from irsloc.scene import (
    DEFAULT_CELL_M,
    Point2D,
    Scene,
    SceneSamplingError,
    as_point,
    bs_distance_difference,
    check_topology,
    distance,
    mirror_across_bs_line,
    nearest_irs,
    sample_targets,
)

BS = (Point2D(100.0, 0.0), Point2D(-100.0, 0.0))


def make_scene(irs, targets, true_irs):
    return Scene(
        bs=BS,
        irs=tuple(as_point(q) for q in irs),
        targets=tuple(as_point(t) for t in targets),
        true_irs=tuple(true_irs),
    )


class TestDistance:
    def test_known_value(self):
        assert distance(Point2D(0, 0), Point2D(3, 4)) == 5.0

    def test_symmetry_and_triangle_property(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-200, 200, size=(50, 3, 2))
        for a, b, c in pts:
            a, b, c = as_point(a), as_point(b), as_point(c)
            assert distance(a, b) == pytest.approx(distance(b, a), abs=0.0)
            assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9
            assert distance(a, a) == 0.0

    def test_accepts_tuples_and_arrays(self):
        assert distance((0, 0), np.array([0.0, 2.0])) == 2.0


class TestNearestIrs:
    def test_picks_closest(self):
        irs = (Point2D(-60, 40), Point2D(70, 40))
        assert nearest_irs(irs, Point2D(-50, 30)) == 0
        assert nearest_irs(irs, Point2D(71, 45)) == 1

    def test_scene_rejects_wrong_assignment(self):
        irs = ((-60.0, 40.0), (70.0, 40.0))
        with pytest.raises(ValueError):
            make_scene(irs, [(-50.0, 30.0)], [1])


class TestTopology:
    def test_mirror_pair_breaks_distinct_differences(self):
        # mirror images across the BS line share their distance difference
        scene = make_scene(((80.0, 60.0), (80.0, -60.0)), [(70.0, 50.0)], [0])
        report = check_topology(scene)
        assert report.c1_ok is True
        assert report.c2_ok is False
        assert report.offending_pairs == ((0, 1),)
        assert report.ok is False

    def test_two_on_perpendicular_bisector(self):
        # both anchors equidistant from the BSs: zero difference twice
        scene = make_scene(((0.0, 60.0), (0.0, 90.0)), [(0.0, 50.0)], [0])
        report = check_topology(scene)
        assert report.c1_ok is False

    def test_broken_pair_fixed_by_moving_one(self):
        scene = make_scene(((0.0, 60.0), (30.0, -60.0)), [(0.0, 50.0)], [0])
        report = check_topology(scene)
        assert report.c1_ok and report.c2_ok
        assert report.offending_pairs == ()

    def test_single_irs_always_fine(self):
        scene = make_scene(((0.0, 40.0),), [(0.0, 30.0)], [0])
        report = check_topology(scene)
        assert report.c1_ok and report.c2_ok

    def test_difference_value(self):
        q = Point2D(30.0, 40.0)
        scene = make_scene((q,), [(20.0, 30.0)], [0])
        expected = distance(BS[0], q) - distance(BS[1], q)
        assert bs_distance_difference(scene, q) == pytest.approx(expected)
        assert bs_distance_difference(BS, q) == pytest.approx(expected)


class TestMirror:
    def test_on_axis_fixed_point(self):
        p = Point2D(10.0, 0.0)
        assert mirror_across_bs_line(BS, p) == pytest.approx((10.0, 0.0))

    def test_preserves_bs_distances(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = Point2D(*rng.uniform(-100, 100, size=2))
            m = mirror_across_bs_line(BS, p)
            for b in BS:
                assert distance(b, m) == pytest.approx(distance(b, p), rel=1e-12)

    def test_involution(self):
        bs = (Point2D(5.0, -3.0), Point2D(-2.0, 11.0))
        p = Point2D(1.0, 7.0)
        back = mirror_across_bs_line(bs, mirror_across_bs_line(bs, p))
        assert back.x == pytest.approx(p.x, abs=1e-12)
        assert back.y == pytest.approx(p.y, abs=1e-12)


class TestSampling:
    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            sample_targets(BS, ((0.0, 40.0),), 0, 50.0, seed=1)
        with pytest.raises(ValueError):
            sample_targets(BS, ((0.0, 40.0),), 2, -1.0, seed=1)

    def test_radius_and_irs_side(self):
        irs = ((-60.0, 40.0), (70.0, 40.0))
        scene = sample_targets(BS, irs, 4, 50.0, seed=9)
        assert scene.n_targets == 4
        for k, t in enumerate(scene.targets):
            g = scene.true_irs[k]
            assert distance(scene.irs[g], t) <= 50.0 + 1e-9
            assert nearest_irs(scene.irs, t) == g
            # half disc opens toward the BS line: sampled y below the IRS row
            assert t.y <= scene.irs[g].y + 1e-9

    def test_half_disc_below_when_irs_under_axis(self):
        irs = ((0.0, -70.0),)
        scene = sample_targets(BS, irs, 6, 50.0, seed=2)
        for t in scene.targets:
            assert t.y >= -70.0 - 1e-9

    def test_deterministic_in_seed(self):
        irs = ((0.0, 40.0),)
        a = sample_targets(BS, irs, 5, 50.0, seed=123)
        b = sample_targets(BS, irs, 5, 50.0, seed=123)
        c = sample_targets(BS, irs, 5, 50.0, seed=124)
        assert a.targets == b.targets
        assert a.targets != c.targets

    def test_no_quantized_echo_collisions(self):
        irs = ((-60.0, 40.0), (70.0, 40.0))
        for seed in range(5):
            scene = sample_targets(BS, irs, 6, 50.0, seed=seed)
            for m, bs_pos in enumerate(scene.bs):
                cells = []
                for q in scene.irs:
                    cells.append(math.floor(2.0 * distance(bs_pos, q) / DEFAULT_CELL_M))
                for k, t in enumerate(scene.targets):
                    g = scene.true_irs[k]
                    direct = 2.0 * distance(bs_pos, t)
                    via = (
                        distance(bs_pos, t)
                        + distance(scene.irs[g], t)
                        + distance(bs_pos, scene.irs[g])
                    )
                    cells.append(math.floor(direct / DEFAULT_CELL_M))
                    cells.append(math.floor(via / DEFAULT_CELL_M))
                assert len(cells) == len(set(cells))

    def test_unquantized_mode_skips_cell_rejection(self):
        irs = ((0.0, 40.0),)
        scene = sample_targets(BS, irs, 3, 50.0, seed=7, cell_m=None)
        assert scene.n_targets == 3

    def test_impossible_scene_raises(self):
        # a tiny disc cannot host many collision-free targets
        irs = ((0.0, 40.0),)
        with pytest.raises(SceneSamplingError):
            sample_targets(BS, irs, 40, 0.5, seed=1, max_attempts_per_target=50)


class TestSceneSerialization:
    def test_round_trip(self):
        scene = sample_targets(BS, ((-60.0, 40.0), (70.0, 40.0)), 3, 50.0, seed=5)
        again = Scene.from_dict(scene.to_dict())
        assert again == scene
