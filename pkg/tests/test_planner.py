import math
import unittest
from unittest import mock
import numpy as np
import weedipp
from weedipp.cmaes import CmaResult
from weedipp.grid_map import LOGODDS_CLAMP
from weedipp.planner import (CLASS, INFO, Selection, choose_objective, ml_measurement_gain, score_chain)


def _small_setup(**overrides):
    """A 20 x 20 m field at 1 m resolution, a sensor blind above 20 m and a cheap planner"""
    sensor = weedipp.SensorModel(h_max=20)
    workspace = weedipp.Workspace(0, 20, 0, 20, 1, 20)
    settings = dict(horizon=3, budget=60, workspace=workspace, cma=weedipp.CmaConfig(max_evals=40), lattice_levels=2)
    settings.update(overrides)
    return sensor, weedipp.PlannerConfig(**settings)


def _random_map(seed, scale=2.0):
    rng = np.random.default_rng(seed)
    return weedipp.GridMap((0, 0), 1, rng.normal(0.0, scale, (20, 20)))


class LatticeTest(unittest.TestCase):
    """
    Tests of the behavior of the build_lattice() function
    """

    def test_field_scale_lattice(self):
        workspace = weedipp.Workspace(0, 50, 0, 50, 1, 45)
        sensor = weedipp.SensorModel()
        lattice = weedipp.build_lattice(workspace, sensor, 3)

        ceiling = 0.95 * 45
        expected_altitudes = [1 + k / 3 * (ceiling - 1) for k in (1, 2, 3)]
        np.testing.assert_allclose(lattice.altitudes, expected_altitudes)
        np.testing.assert_allclose(lattice.spacings, [sensor.footprint_side_at(h) for h in expected_altitudes])

        self.assertEqual([len(lattice.level_points(k)) for k in range(3)], [9, 4, 4])
        self.assertEqual(len(lattice), 17)
        self.assertTrue(np.all(lattice.points >= workspace.lower))
        self.assertTrue(np.all(lattice.points <= workspace.upper))

        # The lowest level tiles the field with abutting footprints, starting half a footprint inside the edge
        lowest = lattice.level_points(0)
        xs = np.unique(lowest[:, 0])
        side = lattice.spacings[0]
        self.assertAlmostEqual(xs[0], side / 2)
        self.assertAlmostEqual(xs[1] - xs[0], side)
        self.assertAlmostEqual(xs[-1], 50 - side / 2)

    def test_single_point_levels(self):
        workspace = weedipp.Workspace(0, 10, 0, 10, 1, 45)
        lattice = weedipp.build_lattice(workspace, weedipp.SensorModel(), 2)
        self.assertEqual(len(lattice), 2)
        np.testing.assert_allclose(lattice.points[:, :2], [[5, 5], [5, 5]])

    def test_argument_validation(self):
        with self.assertRaises(ValueError):
            weedipp.build_lattice(weedipp.Workspace(0, 10, 0, 10, 1, 45), weedipp.SensorModel(), 0)
        with self.assertRaises(ValueError):
            weedipp.build_lattice(weedipp.Workspace(0, 10, 0, 10, 50, 45), weedipp.SensorModel(), 2)


class GainTest(unittest.TestCase):
    """
    Tests of the information and classification gains
    """

    def test_info_gain(self):
        sensor, _ = _small_setup()
        before = weedipp.new_map((20, 20), 1)
        after = sensor.simulate_ml_measurement(before, (10, 10, 5))
        self.assertGreater(weedipp.info_gain(before, after), 0)
        self.assertAlmostEqual(weedipp.info_gain(before, after), before.entropy() - after.entropy())
        self.assertEqual(weedipp.info_gain(before, before.copy()), 0)
        with self.assertRaises(weedipp.GeometryMismatchError):
            weedipp.info_gain(before, weedipp.new_map((10, 20), 1))

    def test_class_gain(self):
        th = weedipp.ClassThresholds()
        before = weedipp.new_map((4, 4), 1)
        after = before.fuse(weedipp.CellIndex(0, 0), 0.9).fuse(weedipp.CellIndex(1, 0), 0.1)
        self.assertEqual(weedipp.class_gain(before, after, th), 2)
        # De-classifying cells is a negative gain
        self.assertEqual(weedipp.class_gain(after, before, th), -2)

    def test_fast_gain_matches_whole_map_gain(self):
        sensor, cfg = _small_setup()
        grid_map = _random_map(0)
        th = cfg.thresholds
        for x in [(10, 10, 5), (2, 3, 12), (19, 19, 8)]:
            after = sensor.simulate_ml_measurement(grid_map, x)
            self.assertAlmostEqual(ml_measurement_gain(grid_map, sensor, x, INFO, th),
                                   weedipp.info_gain(grid_map, after), places=9)
            self.assertEqual(ml_measurement_gain(grid_map, sensor, x, CLASS, th),
                             weedipp.class_gain(grid_map, after, th))

        # apply=True fuses the measurement as well
        scratch = grid_map.copy()
        ml_measurement_gain(scratch, sensor, (10, 10, 5), INFO, th, apply=True)
        self.assertEqual(scratch.fingerprint(), sensor.simulate_ml_measurement(grid_map, (10, 10, 5)).fingerprint())

    def test_choose_objective(self):
        self.assertEqual(choose_objective('info_only', 90, 100, 0.0), INFO)
        self.assertEqual(choose_objective('class_only', 0, 100, 1.0), CLASS)
        self.assertEqual(choose_objective('time_varying', 10, 100, 0.5), INFO)
        self.assertEqual(choose_objective('time_varying', 60, 100, 0.5), CLASS)


class SelectNextViewpointTest(unittest.TestCase):
    """
    Tests of the behavior of the select_next_viewpoint() function
    """

    def setUp(self) -> None:
        super().setUp()
        self._sensor, self._cfg = _small_setup(lattice_levels=3)
        self._lattice = weedipp.build_lattice(self._cfg.workspace, self._sensor, 3)
        self._state = weedipp.PlanState(0.0, np.array([3.0, 17.0, 12.0]))

    def _oracle(self, grid_map, objective_mode, cfg=None):
        """Best (index, rate) by brute force over whole-map gains"""
        cfg = (cfg or self._cfg)._replace(objective_mode=objective_mode)
        last = self._state.last_point
        best_key, best = None, None
        for index, candidate in enumerate(self._lattice.points):
            after = self._sensor.simulate_ml_measurement(grid_map, candidate)
            info = weedipp.info_gain(grid_map, after)
            time = weedipp.travel_time([last, candidate], cfg.limits)
            if objective_mode == 'info_only':
                key = (-info / time, 0.0, time, index)
            else:
                gain = weedipp.class_gain(grid_map, after, cfg.thresholds)
                key = (-gain / time, -info / time, time, index)
            if best_key is None or key < best_key:
                best_key, best = key, (index, -key[0])
        return best

    def test_matches_brute_force_on_random_maps(self):
        rng = np.random.default_rng(2024)
        for instance in range(50):
            grid_map = _random_map(instance, scale=rng.uniform(0.5, 4.0))
            mode = ['info_only', 'class_only'][instance % 2]
            cfg = self._cfg._replace(objective_mode=mode)
            selection = weedipp.select_next_viewpoint(grid_map, self._state, self._lattice, cfg, self._sensor,
                                                      np.random.default_rng(instance))
            index, rate = self._oracle(grid_map, mode)
            self.assertIsInstance(selection, Selection)
            self.assertEqual(selection.index, index, f"instance {instance}, {mode}")
            self.assertAlmostEqual(selection.rate, rate, places=9)
            np.testing.assert_array_equal(selection.viewpoint, self._lattice.points[index])

    def test_uniform_map(self):
        grid_map = weedipp.new_map((20, 20), 1)
        cfg = self._cfg._replace(objective_mode='info_only')
        selection = weedipp.select_next_viewpoint(grid_map, self._state, self._lattice, cfg, self._sensor,
                                                  np.random.default_rng(0))
        _, rate = self._oracle(grid_map, 'info_only')
        self.assertLessEqual(abs(selection.rate - rate), 1e-9 * rate)
        self.assertEqual(selection.objective, INFO)

    def test_skips_the_current_point(self):
        state = weedipp.PlanState(0.0, self._lattice.points[0].copy())
        selection = weedipp.select_next_viewpoint(_random_map(1), state, self._lattice, self._cfg, self._sensor,
                                                  np.random.default_rng(0))
        self.assertNotEqual(selection.index, 0)

        only_point = weedipp.Lattice(self._lattice.points[:1], (self._lattice.altitudes[0],),
                                     (self._lattice.spacings[0],), np.array([0]))
        self.assertIsNone(weedipp.select_next_viewpoint(_random_map(1), state, only_point, self._cfg, self._sensor,
                                                        np.random.default_rng(0)))

    def test_draws_one_number_per_call(self):
        rng = np.random.default_rng(11)
        weedipp.select_next_viewpoint(_random_map(2), self._state, self._lattice, self._cfg, self._sensor, rng)
        reference = np.random.default_rng(11)
        reference.random()
        self.assertEqual(rng.random(), reference.random())

    def test_zero_gain_picks_the_closest_candidate(self):
        # A map saturated at the clamp offers no gain of either kind anywhere
        grid_map = weedipp.GridMap((0, 0), 1, np.full((20, 20), LOGODDS_CLAMP))
        cfg = self._cfg._replace(objective_mode='class_only')
        selection = weedipp.select_next_viewpoint(grid_map, self._state, self._lattice, cfg, self._sensor,
                                                  np.random.default_rng(0))
        times = [weedipp.travel_time([self._state.pose, c], cfg.limits) for c in self._lattice.points]
        self.assertEqual(selection.gain, 0)
        self.assertEqual(selection.index, int(np.argmin(times)))

    def test_equal_classification_rates_go_to_the_information_rate(self):
        # No single measurement can push a prior cell past these thresholds
        cfg = self._cfg._replace(objective_mode='class_only', thresholds=weedipp.ClassThresholds(0.01, 0.99))
        grid_map = weedipp.new_map((20, 20), 1)
        selection = weedipp.select_next_viewpoint(grid_map, self._state, self._lattice, cfg, self._sensor,
                                                  np.random.default_rng(0))
        info_selection = weedipp.select_next_viewpoint(grid_map, self._state, self._lattice,
                                                       cfg._replace(objective_mode='info_only'), self._sensor,
                                                       np.random.default_rng(0))
        self.assertEqual(selection.objective, CLASS)
        self.assertEqual(selection.gain, 0)
        self.assertEqual(selection.index, info_selection.index)
        self.assertEqual(selection.index, self._oracle(grid_map, 'class_only', cfg)[0])

    def test_classification_objective_prefers_classifying_cells(self):
        # The left half is nearly decided, so a low measurement over it classifies cells
        logodds = np.zeros((20, 20))
        logodds[:, :10] = 1.0
        grid_map = weedipp.GridMap((0, 0), 1, logodds)
        picks = {}
        for mode in ['info_only', 'class_only']:
            cfg = self._cfg._replace(objective_mode=mode, thresholds=weedipp.ClassThresholds(0.2, 0.8))
            picks[mode] = weedipp.select_next_viewpoint(grid_map, self._state, self._lattice, cfg, self._sensor,
                                                        np.random.default_rng(0))
            self.assertEqual(picks[mode].index, self._oracle(grid_map, mode, cfg)[0])
        self.assertGreater(picks['class_only'].gain, 0)


class ReplanTest(unittest.TestCase):
    """
    Tests of the behavior of the replan() function
    """

    def setUp(self) -> None:
        super().setUp()
        self._sensor, self._cfg = _small_setup(horizon=5)
        self._map = _random_map(3, scale=0.5)
        self._state = weedipp.PlanState(10.0, np.array([10.0, 10.0, 15.0]))

    def test_chain_structure(self):
        cfg = self._cfg._replace(cmaes_mode='none')
        plan = weedipp.replan(self._map, self._state, cfg, self._sensor, np.random.default_rng(0))

        self.assertEqual(plan.kinds, ['start', 'global', 'intermediate', 'global', 'intermediate', 'global'])
        self.assertEqual(len(plan.viewpoints), 6)
        np.testing.assert_array_equal(plan.viewpoints[0], self._state.pose)
        # Intermediate points sit halfway between their neighbours before refinement
        for i in (2, 4):
            np.testing.assert_allclose(plan.viewpoints[i], (plan.viewpoints[i - 1] + plan.viewpoints[i + 1]) / 2)
            self.assertEqual(plan.objectives[i], plan.objectives[i + 1])
        self.assertIsNone(plan.objectives[0])
        self.assertEqual(plan.rate, plan.greedy_rate)

        # The start is never measured, and only scheduled viewpoints contribute
        scheduled = {i for i, _ in plan.schedule}
        self.assertNotIn(0, scheduled)
        self.assertEqual(plan.gains[0], 0.0)
        for i, gain in enumerate(plan.gains):
            if i not in scheduled:
                self.assertEqual(gain, 0.0)
        self.assertAlmostEqual(plan.rate, sum(plan.gains) / plan.trajectory.duration)

        times = [t for _, t in plan.schedule]
        self.assertTrue(np.all(np.diff(times) >= self._sensor.min_meas_interval - 1e-9))
        self.assertLessEqual(times[-1], plan.trajectory.duration + 1e-9)

    def test_horizon_controls_chain_length(self):
        for horizon, length in [(1, 2), (2, 4), (3, 4), (4, 6)]:
            cfg = self._cfg._replace(horizon=horizon, cmaes_mode='none')
            plan = weedipp.replan(self._map, self._state, cfg, self._sensor, np.random.default_rng(0))
            self.assertEqual(len(plan.viewpoints), length, f"horizon {horizon}")

    def test_leaves_the_map_untouched(self):
        before = self._map.fingerprint()
        for mode in weedipp.planner.CMAES_MODES:
            weedipp.replan(self._map, self._state, self._cfg._replace(cmaes_mode=mode), self._sensor,
                           np.random.default_rng(0))
        self.assertEqual(self._map.fingerprint(), before)

    def test_global_refinement_never_loses(self):
        plan = weedipp.replan(self._map, self._state, self._cfg, self._sensor, np.random.default_rng(1))
        self.assertGreaterEqual(plan.rate, plan.greedy_rate - 1e-12)
        np.testing.assert_array_equal(plan.viewpoints[0], self._state.pose)
        ws = self._cfg.workspace
        self.assertTrue(np.all(plan.viewpoints[1:] >= ws.lower - 1e-12))
        self.assertTrue(np.all(plan.viewpoints[1:] <= ws.upper + 1e-12))

    def test_local_refinement_moves_intermediates_only(self):
        greedy = weedipp.replan(self._map, self._state, self._cfg._replace(cmaes_mode='none'), self._sensor,
                                np.random.default_rng(2))
        local = weedipp.replan(self._map, self._state, self._cfg._replace(cmaes_mode='local'), self._sensor,
                               np.random.default_rng(2))
        for i, kind in enumerate(local.kinds):
            if kind != 'intermediate':
                np.testing.assert_array_equal(local.viewpoints[i], greedy.viewpoints[i])
        self.assertGreaterEqual(local.rate, greedy.rate - 1e-12)
        self.assertAlmostEqual(local.greedy_rate, greedy.rate)

    def test_worse_refinement_is_discarded(self):
        greedy = weedipp.replan(self._map, self._state, self._cfg._replace(cmaes_mode='none'), self._sensor,
                                np.random.default_rng(4))

        def lower_every_point(f, x0, cfg):
            # Moves every point to the workspace floor, where the footprint is tiny
            x = np.array(x0, dtype=float).reshape(-1, 3)
            x[:, 2] = self._cfg.workspace.h_min
            return CmaResult(x.ravel(), float(f(x.ravel())), 1, 'max_evals', [])

        with mock.patch('weedipp.planner.minimize', lower_every_point):
            plan = weedipp.replan(self._map, self._state, self._cfg, self._sensor, np.random.default_rng(4))
        np.testing.assert_array_equal(plan.viewpoints, greedy.viewpoints)
        self.assertEqual(plan.rate, plan.greedy_rate)

    def test_measurements_past_the_budget_do_not_score(self):
        chain = np.array([[10.0, 10.0, 15.0], [3.0, 3.0, 8.0], [17.0, 3.0, 8.0], [17.0, 17.0, 8.0]])
        objectives = [None, INFO, INFO, INFO]
        full = score_chain(chain, objectives, self._map, self._sensor, self._cfg)
        self.assertEqual([i for i, _ in full.schedule], [1, 2, 3])

        last_time = full.schedule[-1][1]
        cut = score_chain(chain, objectives, self._map, self._sensor, self._cfg, time_left=last_time - 1.0)
        self.assertEqual([i for i, _ in cut.schedule], [1, 2])
        self.assertEqual(cut.gains[3], 0.0)
        self.assertAlmostEqual(cut.rate, sum(cut.gains) / (last_time - 1.0))
        self.assertEqual(cut.gains[:3], full.gains[:3])

    def test_is_deterministic(self):
        first = weedipp.replan(self._map, self._state, self._cfg, self._sensor, np.random.default_rng(5))
        second = weedipp.replan(self._map, self._state, self._cfg, self._sensor, np.random.default_rng(5))
        np.testing.assert_array_equal(first.viewpoints, second.viewpoints)
        self.assertEqual(first.rate, second.rate)

    def test_no_selectable_viewpoint(self):
        lattice = weedipp.build_lattice(weedipp.Workspace(0, 20, 0, 20, 1, 20), self._sensor, 1)
        state = weedipp.PlanState(0.0, lattice.points[0].copy())
        self.assertEqual(len(lattice), 1)
        self.assertIsNone(weedipp.replan(self._map, state, self._cfg, self._sensor, np.random.default_rng(0), lattice))

    def test_score_chain(self):
        chain = np.array([[10.0, 10.0, 15.0], [5.0, 5.0, 8.0], [15.0, 15.0, 8.0]])
        score = score_chain(chain, [None, INFO, INFO], self._map, self._sensor, self._cfg)
        self.assertGreater(score.rate, 0)
        self.assertEqual(score.gains[0], 0.0)

        degenerate = np.array([[10.0, 10.0, 15.0], [5.0, 5.0, 8.0], [5.0, 5.0, 8.0]])
        score = score_chain(degenerate, [None, INFO, INFO], self._map, self._sensor, self._cfg)
        self.assertEqual(score.rate, -math.inf)
        self.assertIsNone(score.trajectory)


class PlannerConfigTest(unittest.TestCase):
    """
    Tests of the PlannerConfig, PlanState and Workspace helpers
    """

    def test_validation(self):
        weedipp.PlannerConfig().validate()
        invalid = [
            {'horizon': 0},
            {'budget': 0},
            {'objective_mode': 'both'},
            {'cmaes_mode': 'full'},
            {'lattice_levels': 0},
            {'thresholds': weedipp.ClassThresholds(0.6, 0.75)},
            {'workspace': weedipp.Workspace(0, 0, 0, 50, 1, 45)},
            {'limits': weedipp.DynamicLimits(0, 1)},
        ]
        for overrides in invalid:
            with self.assertRaises(ValueError):
                weedipp.PlannerConfig(**overrides).validate()

    def test_plan_state_chain(self):
        state = weedipp.PlanState(0.0, np.zeros(3))
        self.assertEqual(state.point_count, 1)
        np.testing.assert_array_equal(state.last_point, np.zeros(3))

        state.global_points += [np.ones(3), np.full(3, 3.0)]
        state.intermediate_points.append(np.full(3, 2.0))
        self.assertEqual(state.point_count, 4)
        np.testing.assert_array_equal(state.chain()[:, 0], [0, 1, 2, 3])
        np.testing.assert_array_equal(state.last_point, np.full(3, 3.0))

    def test_workspace_over_map(self):
        grid_map = weedipp.new_map((30, 20), 0.5, origin=(5, 10))
        workspace = weedipp.Workspace.over_map(grid_map, 1, 45)
        self.assertEqual(workspace, weedipp.Workspace(5, 35, 10, 30, 1, 45))
        np.testing.assert_array_equal(workspace.center, [20, 20, 23])


if __name__ == '__main__':  # pragma: no cover
    unittest.main()
