"""Real-coded genetic algorithm with box constraints.

Tournament selection, BLX-alpha crossover, Gaussian mutation scaled to the
box width, clamping to bounds and elitist survival.  The random stream
belongs to the loop; the objective is only ever called with feasible
points, one generation at a time.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["SearchSpace", "GaConfig", "GaResult", "minimize", "SEED_ENV"]

SEED_ENV = "NYQTUNE_SEED"


@dataclass(frozen=True)
class SearchSpace:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if not lo or len(lo) != len(hi):
            raise ValueError("search space bounds must be non-empty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError(f"need lower < upper componentwise, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    elitism: int = 2
    seed: int = 0
    tournament: int = 3
    blx_alpha: float = 0.5
    mutation_scale: float = 0.1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 <= self.elitism < self.population:
            raise ValueError("need 0 <= elitism < population")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GaConfig":
        return cls(**json.loads(text))

    def with_seed(self, seed: int) -> "GaConfig":
        return GaConfig(**{**asdict(self), "seed": int(seed)})

    @classmethod
    def seed_from_env(cls, default: int | None = None) -> int | None:
        raw = os.environ.get(SEED_ENV)
        return int(raw) if raw not in (None, "") else default


@dataclass
class GaResult:
    best_x: np.ndarray
    best_f: float
    history: list[float] = field(default_factory=list)
    evaluations: int = 0

    def __eq__(self, other):
        return (isinstance(other, GaResult)
                and np.array_equal(self.best_x, other.best_x)
                and self.best_f == other.best_f
                and self.history == other.history
                and self.evaluations == other.evaluations)


def _evaluate(f, pop):
    return np.array([float(f(x)) for x in pop])


def minimize(f: Callable[[np.ndarray], float], space: SearchSpace, cfg: GaConfig | None = None,
             initial: Sequence[Sequence[float]] | None = None,
             evaluate: Callable | None = None) -> GaResult:
    """Minimize ``f`` over the box ``space``.

    Parameters
    ----------
    f
        Objective over 1-D float arrays.  It must return a real for every
        point of the box; non-finite values are treated as ``+inf``.
    space
        Box constraints.
    cfg
        GA settings; the seed makes the run fully deterministic.
    initial
        Optional points injected into the first generation (clipped to the box).
    evaluate
        Optional ``evaluate(f, population) -> array`` hook, e.g. a process
        pool map.  Must return values in population order.

    Returns
    -------
    GaResult
        ``history[g]`` is the best objective after generation ``g``.
    """
    cfg = cfg or GaConfig()
    evaluate = evaluate or _evaluate
    rng = np.random.default_rng(cfg.seed)
    lo, hi = np.array(space.lower), np.array(space.upper)
    width = hi - lo
    n, dim = cfg.population, space.dim

    pop = lo + rng.random((n, dim)) * width
    if initial is not None:
        seeds = np.atleast_2d(np.asarray(initial, dtype=float))[:n]
        pop[: len(seeds)] = np.clip(seeds, lo, hi)
    fit = _sanitize(evaluate(f, pop))
    evals = n
    history: list[float] = []

    for _ in range(cfg.generations):
        order = np.argsort(fit, kind="stable")
        elite = pop[order[: cfg.elitism]]
        elite_fit = fit[order[: cfg.elitism]]

        n_child = n - cfg.elitism
        parents_a = _tournament(rng, fit, n_child, cfg.tournament)
        parents_b = _tournament(rng, fit, n_child, cfg.tournament)
        a, b = pop[parents_a], pop[parents_b]

        do_cx = rng.random(n_child) < cfg.crossover_rate
        cmin, cmax = np.minimum(a, b), np.maximum(a, b)
        span = cmax - cmin
        blend = cmin - cfg.blx_alpha * span + rng.random((n_child, dim)) * (1 + 2 * cfg.blx_alpha) * span
        children = np.where(do_cx[:, None], blend, a)

        do_mut = rng.random((n_child, dim)) < cfg.mutation_rate
        noise = rng.normal(0.0, cfg.mutation_scale, (n_child, dim)) * width
        children = np.clip(children + np.where(do_mut, noise, 0.0), lo, hi)

        child_fit = _sanitize(evaluate(f, children))
        evals += n_child
        pop = np.vstack([elite, children])
        fit = np.concatenate([elite_fit, child_fit])
        history.append(float(np.min(fit)))

    best = int(np.argmin(fit))
    return GaResult(pop[best].copy(), float(fit[best]), history, evals)


def _sanitize(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.where(np.isfinite(v), v, np.inf)


def _tournament(rng, fit, count, size):
    picks = rng.integers(0, len(fit), size=(count, size))
    winners = np.argmin(fit[picks], axis=1)
    return picks[np.arange(count), winners]
