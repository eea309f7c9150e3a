import os
import tempfile
import unittest
import numpy as np
import yaml
import weedipp
from weedipp.experiment_config import packaged_config_path


class ExperimentConfigTest(unittest.TestCase):
    """
    Tests of the behavior of the experiment configuration loader
    """

    def test_packaged_configs(self):
        cfg = weedipp.load_experiment_config(packaged_config_path('full_evaluation'))
        self.assertEqual(cfg.trials, 100)
        self.assertEqual(cfg.environment.extent, (50.0, 50.0))
        self.assertEqual(cfg.environment.resolution, 0.5)
        self.assertIsNone(cfg.environment.weeds_mean)
        self.assertEqual(cfg.environment.weeds_mean_range, (50.0, 250.0))
        self.assertEqual(cfg.mission.initial_viewpoint, (25.0, 25.0, 40.0))
        self.assertEqual(cfg.planner.horizon, 5)
        self.assertEqual(cfg.noise.fp_cell_cap, 800)
        self.assertEqual(cfg.rig_tree.max_evals, None)

        # The protocol file spells out the defaults
        defaults = weedipp.parse_experiment_config({})
        for section in ['sensor', 'noise', 'planner', 'rig_tree', 'coverage']:
            self.assertEqual(getattr(cfg, section), getattr(defaults, section), section)

        quick = weedipp.load_experiment_config(packaged_config_path('quick'))
        self.assertEqual(quick.trials, 2)
        self.assertEqual(quick.planner.lattice_levels, 2)

    def test_partial_sections_take_defaults(self):
        cfg = weedipp.parse_experiment_config({'planner': {'horizon': 3}, 'sensor': None})
        self.assertEqual(cfg.planner.horizon, 3)
        self.assertEqual(cfg.planner.objective_mode, 'time_varying')
        self.assertEqual(cfg.sensor.h_max, 45.0)
        # YAML integers are accepted for real-valued fields
        self.assertIsInstance(weedipp.parse_experiment_config({'mission': {'budget': 120}}).mission.budget, float)
        self.assertEqual(weedipp.parse_experiment_config(None), weedipp.parse_experiment_config({}))

    def test_invalid_configs(self):
        invalid = [
            [],
            {'trails': 3},
            {'planner': {'horizon': 3, 'depth': 2}},
            {'trials': 0},
            {'trials': 2.5},
            {'seed': -1},
            {'variant': 'greedy'},
            {'planner': {'objective_mode': 'info'}},
            {'planner': {'cmaes_mode': True}},
            {'planner': {'thresholds': [0.25]}},
            {'planner': {'thresholds': [0.6, 0.75]}},
            {'planner': {'cma_population': 2}},
            {'planner': {'cma_population': 20, 'cma_max_evals': 10}},
            {'sensor': {'fov_deg': 200}},
            {'sensor': {'curve': 'step'}},
            {'sensor': {'h_max': 'high'}},
            {'noise': {'enabled': 'yes'}},
            {'noise': {'fp_cell_cap': -1}},
            {'environment': {'extent': [50, 50], 'resolution': 0.3}},
            {'environment': {'weeds_mean_range': [250, 50]}},
            {'environment': {'prior': 1.0}},
            {'mission': {'budget': 0}},
            {'mission': {'initial_viewpoint': [25, 25]}},
            {'mission': {'altitude_min': 50}},
            {'coverage': {'forward_overlap': 1.0}},
            {'rig_tree': {'step_size': 0}},
            {'planner': 'fast'},
        ]
        for data in invalid:
            with self.assertRaises(weedipp.ConfigError, msg=str(data)):
                weedipp.parse_experiment_config(data)

    def test_config_errors_are_value_errors(self):
        with self.assertRaises(ValueError):
            weedipp.parse_experiment_config({'trials': -3})

    def test_load_errors(self):
        with self.assertRaises(weedipp.ConfigError):
            weedipp.load_experiment_config('/nonexistent/experiment.yaml')

        with tempfile.TemporaryDirectory() as config_dir:
            path = os.path.join(config_dir, 'broken.yaml')
            with open(path, 'w') as f:
                f.write('planner: [horizon: 3\n')
            with self.assertRaises(weedipp.ConfigError):
                weedipp.load_experiment_config(path)

    def test_round_trip_through_yaml(self):
        data = {'trials': 4, 'seed': 11, 'environment': {'weeds_mean': 80}, 'planner': {'cmaes_mode': 'local'}}
        with tempfile.TemporaryDirectory() as config_dir:
            path = os.path.join(config_dir, 'experiment.yaml')
            with open(path, 'w') as f:
                yaml.safe_dump(data, f)
            cfg = weedipp.load_experiment_config(path)
        self.assertEqual(cfg, weedipp.parse_experiment_config(data))
        self.assertEqual(cfg.environment.weeds_mean, 80.0)

    def test_overrides(self):
        cfg = weedipp.parse_experiment_config({'trials': 4, 'seed': 11})
        overridden = cfg.with_overrides(trials=2, seed=None, output_dir='elsewhere')
        self.assertEqual((overridden.trials, overridden.seed, overridden.output_dir), (2, 11, 'elsewhere'))
        self.assertEqual(cfg.trials, 4)

        local = cfg.with_planner(cmaes_mode='local')
        self.assertEqual(local.planner.cmaes_mode, 'local')
        self.assertEqual(local.planner.horizon, cfg.planner.horizon)

    def test_derived_settings(self):
        cfg = weedipp.parse_experiment_config({
            'environment': {'extent': [40, 30]},
            'mission': {'budget': 200, 'altitude_min': 2},
            'planner': {'v_ref': 2, 'cma_max_evals': 150},
        })
        planner_cfg = cfg.planner_config()
        self.assertEqual(planner_cfg.budget, 200)
        self.assertEqual(planner_cfg.workspace, weedipp.Workspace(0, 40, 0, 30, 2, 45))
        self.assertEqual(planner_cfg.limits, weedipp.DynamicLimits(2, 1.5))
        self.assertEqual(planner_cfg.cma.max_evals, 150)
        planner_cfg.validate()

        rig_cfg = cfg.rig_tree_config()
        self.assertEqual(rig_cfg.max_evals, 150)
        self.assertEqual(rig_cfg.workspace, planner_cfg.workspace)

        sensor = cfg.sensor.sensor_model()
        self.assertEqual(sensor.h_max, 45)
        self.assertEqual(cfg.noise.noise_config(9), weedipp.NoiseConfig(True, 800, 9))

    def test_weeds_mean(self):
        fixed = weedipp.parse_experiment_config({'environment': {'weeds_mean': 80}})
        self.assertEqual(fixed.environment.draw_weeds_mean(np.random.default_rng(0)), 80)

        drawn = weedipp.parse_experiment_config({}).environment
        values = [drawn.draw_weeds_mean(np.random.default_rng(s)) for s in range(50)]
        self.assertTrue(all(50 <= v <= 250 for v in values))

    def test_trial_seeds(self):
        cfg = weedipp.parse_experiment_config({'seed': 3})
        first = np.random.default_rng(cfg.trial_seed_sequence(2, 0)).random()
        again = np.random.default_rng(cfg.trial_seed_sequence(2, 0)).random()
        other_stream = np.random.default_rng(cfg.trial_seed_sequence(2, 1)).random()
        self.assertEqual(first, again)
        self.assertNotEqual(first, other_stream)
        # Trial 2 with seed 3 is trial 0 with seed 5
        shifted = weedipp.parse_experiment_config({'seed': 5})
        self.assertEqual(first, np.random.default_rng(shifted.trial_seed_sequence(0, 0)).random())


if __name__ == '__main__':  # pragma: no cover
    unittest.main()
