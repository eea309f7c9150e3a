import math
import os
import tempfile
import unittest
import numpy as np
import pandas as pd
import weedipp
from weedipp.cmaes import CmaEvolutionStrategy, default_population


def _sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def _rosenbrock(x):
    return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


class CmaesTest(unittest.TestCase):
    """
    Tests of the behavior of the minimize() function and the CMA-ES it drives
    """

    def setUp(self) -> None:
        super().setUp()
        self._bounds = (np.full(5, -5.0), np.full(5, 5.0))

    def test_default_population(self):
        self.assertEqual(default_population(2), 6)
        self.assertEqual(default_population(5), 8)
        self.assertEqual(default_population(15), 12)

    def test_converges_on_sphere(self):
        cfg = weedipp.CmaConfig(max_evals=4000, seed=1, bounds=self._bounds)
        result = weedipp.minimize(_sphere, np.full(5, 3.0), cfg)
        self.assertLess(result.value, 1e-6)
        self.assertLessEqual(result.evaluations, 4000)
        self.assertIn(result.termination, ('tolfun', 'tolx', 'max_evals'))
        self.assertAlmostEqual(_sphere(result.x), result.value)

    def test_converges_on_small_sphere(self):
        for seed in range(3):
            cfg = weedipp.CmaConfig(max_evals=2000, seed=seed, bounds=(np.full(4, -5.0), np.full(4, 5.0)))
            result = weedipp.minimize(_sphere, np.full(4, 3.0), cfg)
            self.assertLess(result.value, 1e-6, f"seed {seed}")
            self.assertLessEqual(result.evaluations, 2000)

    def test_converges_on_rosenbrock(self):
        for seed in range(3):
            cfg = weedipp.CmaConfig(sigma0=0.5, max_evals=5000, seed=seed)
            result = weedipp.minimize(_rosenbrock, np.array([-1.2, 1.0]), cfg)
            self.assertLess(result.value, 1e-3, f"seed {seed}")
            self.assertLessEqual(result.evaluations, 5000)
            np.testing.assert_allclose(result.x, [1.0, 1.0], atol=0.1)

    def test_unbounded_search(self):
        cfg = weedipp.CmaConfig(sigma0=1.0, max_evals=3000, seed=2)
        result = weedipp.minimize(lambda x: _sphere(np.asarray(x) - 10.0), np.zeros(3), cfg)
        np.testing.assert_allclose(result.x, 10.0, atol=1e-2)

    def test_is_deterministic(self):
        cfg = weedipp.CmaConfig(max_evals=200, seed=4, bounds=self._bounds)
        first = weedipp.minimize(_sphere, np.full(5, 3.0), cfg)
        second = weedipp.minimize(_sphere, np.full(5, 3.0), cfg)
        np.testing.assert_array_equal(first.x, second.x)
        self.assertEqual(first.trace, second.trace)

        other = weedipp.minimize(_sphere, np.full(5, 3.0), cfg._replace(seed=5))
        self.assertFalse(np.array_equal(first.x, other.x))

    def test_respects_budget_and_bounds(self):
        evaluated = []

        def f(x):
            evaluated.append(np.array(x))
            return _sphere(np.asarray(x) - 4.9)

        cfg = weedipp.CmaConfig(sigma0=0.8, max_evals=100, seed=0, bounds=self._bounds)
        result = weedipp.minimize(f, np.zeros(5), cfg)

        self.assertEqual(len(evaluated), result.evaluations)
        self.assertLessEqual(result.evaluations, 100)
        # Only whole generations are evaluated after the initial point
        self.assertEqual((result.evaluations - 1) % default_population(5), 0)
        for x in evaluated:
            self.assertTrue(np.all(x >= -5.0) and np.all(x <= 5.0))

    def test_never_worse_than_start(self):
        x0 = np.full(5, 0.01)
        cfg = weedipp.CmaConfig(sigma0=0.5, max_evals=default_population(5) + 1, seed=0, bounds=self._bounds)
        result = weedipp.minimize(_sphere, x0, cfg)
        self.assertEqual(result.evaluations, default_population(5) + 1)
        self.assertLessEqual(result.value, _sphere(x0))

    def test_budget_below_one_generation(self):
        # The initial point is the answer when no generation fits in the budget
        cfg = weedipp.CmaConfig(population=8, max_evals=8, seed=0, bounds=self._bounds)
        result = weedipp.minimize(_sphere, np.full(5, 1.0), cfg)
        self.assertEqual(result.evaluations, 1)
        np.testing.assert_array_equal(result.x, np.full(5, 1.0))

    def test_non_finite_values(self):
        def f(x):
            if x[0] > 0:
                return math.nan
            if x[1] > 0:
                return math.inf
            return _sphere(np.asarray(x) + 1.0)

        cfg = weedipp.CmaConfig(max_evals=300, seed=3, bounds=self._bounds)
        x0 = np.full(5, -0.5)
        result = weedipp.minimize(f, x0, cfg)
        self.assertTrue(math.isfinite(result.value))
        self.assertLessEqual(result.value, f(x0))
        self.assertLessEqual(result.x[0], 0)

    def test_flat_objective_stops_early(self):
        cfg = weedipp.CmaConfig(max_evals=1000, seed=0, bounds=self._bounds)
        result = weedipp.minimize(lambda x: 1.0, np.zeros(5), cfg)
        self.assertEqual(result.termination, 'tolfun')
        self.assertEqual(result.evaluations, 1 + default_population(5))

    def test_argument_validation(self):
        invalid = [
            (np.zeros(0), weedipp.CmaConfig()),
            (np.zeros(5), weedipp.CmaConfig(population=3)),
            (np.zeros(5), weedipp.CmaConfig(sigma0=0)),
            (np.zeros(5), weedipp.CmaConfig(max_evals=5)),
            (np.zeros(5), weedipp.CmaConfig(bounds=(np.zeros(4), np.ones(4)))),
            (np.zeros(5), weedipp.CmaConfig(bounds=(np.ones(5), np.ones(5)))),
            (np.full(5, 6.0), weedipp.CmaConfig(bounds=self._bounds)),
        ]
        for x0, cfg in invalid:
            with self.assertRaises(ValueError):
                weedipp.minimize(_sphere, x0, cfg)

        with self.assertRaises(ValueError):
            weedipp.minimize(lambda x: math.inf, np.zeros(5), weedipp.CmaConfig())

    def test_ask_clamps_into_bounds(self):
        # A huge step size makes almost every draw leave the box
        es = CmaEvolutionStrategy(np.zeros(3), weedipp.CmaConfig(sigma0=100.0, bounds=(np.full(3, -1.0), np.ones(3))))
        candidates = es.ask()
        self.assertEqual(candidates.shape, (es.population, 3))
        self.assertTrue(np.all(np.abs(candidates) <= 1.0))

    def test_trace_to_csv(self):
        cfg = weedipp.CmaConfig(max_evals=50, seed=0, bounds=self._bounds)
        result = weedipp.minimize(_sphere, np.full(5, 2.0), cfg)
        with tempfile.TemporaryDirectory() as output_dir:
            path = os.path.join(output_dir, 'trace.csv')
            result.trace_to_csv(path)
            df = pd.read_csv(path)
        self.assertEqual(list(df.columns), ['generation', 'evals', 'best_value', 'sigma'])
        self.assertEqual(df['evals'].iloc[0], 1)
        self.assertTrue(np.all(np.diff(df['best_value']) <= 0))


if __name__ == '__main__':  # pragma: no cover
    unittest.main()
