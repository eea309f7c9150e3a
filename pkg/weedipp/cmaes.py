import math
import numpy as np
import pandas as pd
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

from ._logging import _logger

# Out-of-bounds candidates are redrawn this many times before being clamped into the box
MAX_RESAMPLES = 10

_TOLFUN = 1e-12
_TOLX = 1e-11


def default_population(n: int) -> int:
    return 4 + int(3 * math.log(n))


class CmaConfig(NamedTuple):
    """
    Settings of a CMA-ES run.

    population: Candidates per generation; None uses 4 + floor(3 ln n)
    sigma0: Initial step size as a fraction of the mean width of the bounding box, or in absolute units when
        there are no bounds
    max_evals: Evaluation budget, including the evaluation of the initial point
    seed: Seed of the run's random generator
    bounds: (lower, upper) arrays, or None for an unbounded search
    """
    population: Optional[int] = None
    sigma0: float = 0.3
    max_evals: int = 300
    seed: int = 0
    bounds: Optional[Tuple[Sequence[float], Sequence[float]]] = None


class CmaResult(NamedTuple):
    x: np.ndarray
    value: float
    evaluations: int
    termination: str
    trace: List[Tuple[int, int, float, float]]

    def trace_to_csv(self, path: str):
        """Write the per-generation trace as (generation, evals, best_value, sigma)"""
        df = pd.DataFrame(self.trace, columns=['generation', 'evals', 'best_value', 'sigma'])
        df.to_csv(path, index=False, float_format='%.10g')


class _Parameters:
    """Static strategy parameters for an n-dimensional problem with population lam"""

    def __init__(self, n: int, lam: int):
        self.n = n
        self.lam = lam
        self.mu = lam // 2
        weights = math.log(lam / 2 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = weights / weights.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)

        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))


class CmaEvolutionStrategy:
    """
    (mu/mu_w, lambda) CMA-ES with box constraints, driven through ask() and tell()
    """

    def __init__(self, x0: np.ndarray, cfg: CmaConfig):
        self._n = len(x0)
        self._lam = cfg.population if cfg.population is not None else default_population(self._n)
        self._params = _Parameters(self._n, self._lam)
        self._rng = np.random.default_rng(cfg.seed)

        if cfg.bounds is not None:
            self._lower = np.asarray(cfg.bounds[0], dtype=float)
            self._upper = np.asarray(cfg.bounds[1], dtype=float)
            self.sigma = cfg.sigma0 * float(np.mean(self._upper - self._lower))
        else:
            self._lower = self._upper = None
            self.sigma = float(cfg.sigma0)

        self.mean = np.array(x0, dtype=float)
        self._pc = np.zeros(self._n)
        self._ps = np.zeros(self._n)
        self._c = np.eye(self._n)
        self._eigenbasis = np.eye(self._n)
        self._eigenvalues = np.ones(self._n)
        self._generation = 0

    @property
    def population(self) -> int:
        return self._lam

    @property
    def generation(self) -> int:
        return self._generation

    def _in_bounds(self, x: np.ndarray) -> bool:
        return self._lower is None or bool(np.all((x >= self._lower) & (x <= self._upper)))

    def _draw(self) -> np.ndarray:
        z = self._rng.standard_normal(self._n)
        return self.mean + self.sigma * (self._eigenbasis @ (np.sqrt(self._eigenvalues) * z))

    def ask(self) -> np.ndarray:
        candidates = np.empty((self._lam, self._n))
        for k in range(self._lam):
            x = self._draw()
            for _ in range(MAX_RESAMPLES):
                if self._in_bounds(x):
                    break
                x = self._draw()
            if self._lower is not None:
                x = np.clip(x, self._lower, self._upper)
            candidates[k] = x
        return candidates

    def tell(self, candidates: np.ndarray, values: np.ndarray):
        par = self._params
        n = self._n
        self._generation += 1

        order = np.argsort(values, kind='stable')
        selected = candidates[order[:par.mu]]
        old_mean = self.mean
        self.mean = par.weights @ selected

        y = (self.mean - old_mean) / self.sigma
        c_inv_sqrt = self._eigenbasis @ np.diag(1.0 / np.sqrt(self._eigenvalues)) @ self._eigenbasis.T
        self._ps = (1 - par.cs) * self._ps + math.sqrt(par.cs * (2 - par.cs) * par.mueff) * (c_inv_sqrt @ y)
        ps_norm = np.linalg.norm(self._ps)
        hsig = (
            ps_norm / math.sqrt(1 - (1 - par.cs) ** (2 * self._generation)) / par.chi_n
            < 1.4 + 2 / (n + 1)
        )
        self._pc = (1 - par.cc) * self._pc + hsig * math.sqrt(par.cc * (2 - par.cc) * par.mueff) * y

        steps = (selected - old_mean) / self.sigma
        rank_mu = (steps * par.weights[:, None]).T @ steps
        c1a = par.c1 * (1 - (1 - hsig) * par.cc * (2 - par.cc))
        self._c = (
            (1 - c1a - par.cmu) * self._c
            + par.c1 * np.outer(self._pc, self._pc)
            + par.cmu * rank_mu
        )

        self.sigma *= math.exp(min(1.0, (par.cs / par.damps) * (ps_norm / par.chi_n - 1)))

        self._c = np.triu(self._c) + np.triu(self._c, 1).T
        eigenvalues, eigenbasis = np.linalg.eigh(self._c)
        self._eigenvalues = np.maximum(eigenvalues, 1e-20)
        self._eigenbasis = eigenbasis

    def step_size_exhausted(self) -> bool:
        return self.sigma * math.sqrt(float(self._eigenvalues.max())) < _TOLX


def minimize(f: Callable[[np.ndarray], float], x0: Sequence[float], cfg: CmaConfig) -> CmaResult:
    """
    Minimise f with CMA-ES starting from x0.

    :param f: Objective. Non-finite values (e.g. for infeasible candidates) rank below every finite value.
    :param x0: Initial mean; must lie within cfg.bounds. Its evaluation is the first incumbent and counts
        against the budget.
    :param cfg: Run settings
    :return: The best point evaluated, which never scores worse than x0
    """
    x0 = np.array(x0, dtype=float).ravel()
    if x0.size == 0:
        raise ValueError("Cannot minimise over an empty decision vector")

    es = CmaEvolutionStrategy(x0, cfg)
    if cfg.population is not None and cfg.population < 4:
        raise ValueError(f"population must be at least 4, got {cfg.population}")
    if cfg.sigma0 <= 0:
        raise ValueError(f"sigma0 must be positive, got {cfg.sigma0}")
    if cfg.max_evals < es.population:
        raise ValueError(f"max_evals ({cfg.max_evals}) must be at least the population size ({es.population})")
    if cfg.bounds is not None:
        lower, upper = (np.asarray(b, dtype=float) for b in cfg.bounds)
        if lower.shape != x0.shape or upper.shape != x0.shape:
            raise ValueError(f"Bounds must have the dimension of x0 ({x0.size})")
        if np.any(lower >= upper):
            raise ValueError("Every lower bound must be below its upper bound")
        if np.any(x0 < lower) or np.any(x0 > upper):
            raise ValueError(f"x0 {x0.tolist()} is outside the bounds")

    best_value = float(f(x0))
    if not math.isfinite(best_value):
        raise ValueError(f"The objective is not finite at x0 (got {best_value})")
    best_x = x0.copy()
    evaluations = 1
    trace = [(0, evaluations, best_value, es.sigma)]
    termination = 'max_evals'

    while evaluations + es.population <= cfg.max_evals:
        candidates = es.ask()
        values = np.array([f(x) for x in candidates], dtype=float)
        evaluations += len(values)
        values = np.where(np.isnan(values), np.inf, values)

        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value, best_x = float(values[k]), candidates[k].copy()

        es.tell(candidates, values)
        trace.append((es.generation, evaluations, best_value, es.sigma))

        finite = values[np.isfinite(values)]
        if len(finite) == len(values) and finite.max() - finite.min() < _TOLFUN:
            termination = 'tolfun'
            break
        if es.step_size_exhausted():
            termination = 'tolx'
            break

    _logger.debug(f"CMA-ES stopped ({termination}) after {evaluations} evaluations, best value {best_value:.6g}")
    return CmaResult(best_x, best_value, evaluations, termination, trace)
