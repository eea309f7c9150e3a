import math
import unittest
import numpy as np
import pandas as pd
import weedipp
from weedipp.run_mission import DEFAULT_START_ALTITUDE, MeasurementRunner, initial_viewpoint_for


def _mission_setup(**overrides):
    truth = weedipp.generate_environment((20, 20), 1, 20, seed=1)
    sensor = weedipp.SensorModel(h_max=20)
    settings = dict(horizon=3, budget=60, workspace=weedipp.Workspace(0, 20, 0, 20, 1, 20),
                    cma=weedipp.CmaConfig(max_evals=40), lattice_levels=2)
    settings.update(overrides)
    return truth, sensor, weedipp.PlannerConfig(**settings)


class RunMissionTest(unittest.TestCase):
    """
    Tests of the behavior of the run_mission() function
    """

    def _run(self, seed=0, **kwargs):
        truth, sensor, cfg = _mission_setup()
        kwargs.setdefault('initial_viewpoint', (10, 10, 15))
        return weedipp.run_mission(truth, sensor, cfg, np.random.default_rng(seed),
                                   noise_rng=np.random.default_rng(seed + 100), **kwargs)

    def test_metrics_log(self):
        result = self._run()
        df = result.log.to_frame()

        self.assertEqual(list(df['t_s'].iloc[:2]), [0.0, 0.0])
        self.assertTrue(np.all(np.diff(df['t_s']) >= 0))
        np.testing.assert_array_equal(df['measurements'], np.arange(len(df)))
        self.assertLessEqual(df['t_s'].iloc[-1], 60 + 1e-9)
        self.assertGreater(len(df), 2)

        initial_entropy = 400 * math.log(2)
        self.assertLess(df['entropy_nats'].iloc[-1], initial_entropy)
        self.assertAlmostEqual(df['entropy_nats'].iloc[-1], result.final_map.entropy(), places=9)
        self.assertTrue(df['class_rate'].between(0, 1).all())
        self.assertTrue(df['f2'].between(0, 1).all())

    def test_start_is_measured(self):
        result = self._run()
        prior, scan = result.log.records[:2]
        self.assertEqual((prior.t, prior.measurements), (0.0, 0))
        self.assertAlmostEqual(prior.entropy, 400 * math.log(2))
        # The scan from the start reduces the entropy at t = 0 and is logged after the prior
        self.assertEqual((scan.t, scan.measurements), (0.0, 1))
        self.assertLess(scan.entropy, prior.entropy)

    def test_measurements_respect_the_interval(self):
        result = self._run()
        times = result.log.to_frame()['t_s'].to_numpy()[1:]
        self.assertTrue(np.all(np.diff(times) >= 5.0 - 1e-9))

    def test_is_deterministic(self):
        first = self._run(seed=3)
        second = self._run(seed=3)
        pd.testing.assert_frame_equal(first.log.to_frame(), second.log.to_frame())
        self.assertEqual(first.final_map.fingerprint(), second.final_map.fingerprint())

    def test_replan_records(self):
        result = self._run()
        self.assertGreater(len(result.replans), 0)
        first_plan = [r for r in result.replans if r.replan == 0]
        self.assertEqual(first_plan[0].kind, 'start')
        self.assertEqual((first_plan[0].x, first_plan[0].y, first_plan[0].z), (10, 10, 15))
        self.assertTrue(all(r.kind in ('start', 'global', 'intermediate') for r in result.replans))
        self.assertLessEqual(result.elapsed, 60)

    def test_planning_time_exhausts_the_budget(self):
        result = self._run(planning_time=60)
        self.assertEqual(len(result.log), 2)
        self.assertEqual(result.replans, [])

    def test_noise_free_low_mission_finds_weeds(self):
        truth, sensor, cfg = _mission_setup(objective_mode='class_only', cmaes_mode='none')
        result = weedipp.run_mission(truth, sensor, cfg, np.random.default_rng(0),
                                     noise=weedipp.NoiseConfig(enabled=False), initial_viewpoint=(10, 10, 15))
        # Without noise every classified cell is correct
        p = result.final_map.probabilities
        th = cfg.thresholds
        self.assertFalse(np.any((p >= th.delta_w) & ~truth.weeds))
        self.assertFalse(np.any((p <= th.delta_nw) & truth.weeds))

    def test_invalid_arguments(self):
        truth, sensor, cfg = _mission_setup()
        with self.assertRaises(ValueError):
            weedipp.run_mission(truth, sensor, cfg._replace(budget=0), np.random.default_rng(0))
        with self.assertRaises(ValueError):
            weedipp.run_mission(truth, sensor, cfg, np.random.default_rng(0), planning_time=-1)


class MeasurementRunnerTest(unittest.TestCase):
    """
    Tests of the behavior of the MeasurementRunner class
    """

    def test_measure(self):
        truth, sensor, cfg = _mission_setup()
        runner = MeasurementRunner(truth, sensor, cfg, weedipp.NoiseConfig(), np.random.default_rng(0))
        self.assertEqual(len(runner.log), 1)

        self.assertTrue(runner.measure(0.0, (10, 10, 10)))
        # A measurement at t = 0 is logged after the prior
        self.assertEqual(len(runner.log), 2)
        self.assertLess(runner.log.records[1].entropy, runner.log.records[0].entropy)
        self.assertTrue(runner.measure(30.0, (5, 5, 5)))
        self.assertTrue(runner.measure(60.0, (15, 15, 5)))
        self.assertFalse(runner.measure(61.0, (15, 15, 5)))
        self.assertEqual(len(runner.log), 4)

    def test_default_noise_generator_is_seeded(self):
        truth, sensor, cfg = _mission_setup()
        noise = weedipp.NoiseConfig(rng_seed=4)
        first = MeasurementRunner(truth, sensor, cfg, noise)
        second = MeasurementRunner(truth, sensor, cfg, noise)
        for runner in (first, second):
            runner.measure(0.0, (10, 10, 10))
        self.assertEqual(first.grid_map.fingerprint(), second.grid_map.fingerprint())

    def test_initial_viewpoint(self):
        truth, _, _ = _mission_setup()
        np.testing.assert_array_equal(initial_viewpoint_for(truth, None), [10, 10, DEFAULT_START_ALTITUDE])
        np.testing.assert_array_equal(initial_viewpoint_for(truth, (1, 2, 3)), [1, 2, 3])


if __name__ == '__main__':  # pragma: no cover
    unittest.main()
