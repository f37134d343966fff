"""Hybrid particle-swarm / differential-evolution minimiser over a box.

Each iteration flips one coin for the whole population: with probability
``mutate_prob`` every particle takes a PSO velocity step, otherwise every
particle proposes a DE mutant/crossover candidate and keeps it only if it
is strictly cheaper.  ``mutate_prob = 1`` is plain PSO, ``0`` plain DE.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


class SearchConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    n_particles: int = 20
    iterations: int = 30
    mutation_factor: float = 0.8
    cross_p: float = 0.7
    mutate_prob: float = 0.5
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1 or self.iterations < 1:
            raise SearchConfigError("n_particles and iterations must be positive")
        for name in ("cross_p", "mutate_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SearchConfigError(f"{name}={v} is not a probability")
        if self.mutate_prob < 1.0 and self.n_particles < 4:
            raise SearchConfigError("DE steps need at least 4 particles")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    particle: int
    position: tuple
    cost: float
    is_global_best: bool


@dataclass
class SearchResult:
    best_position: np.ndarray
    best_cost: float
    trace: list[TraceRow] = field(default_factory=list)
    best_history: list[float] = field(default_factory=list)
    n_evaluations: int = 0
    steps: list[str] = field(default_factory=list)

    @property
    def evaluated_costs(self) -> list[float]:
        return [r.cost for r in self.trace]


def de_mutant(xa: np.ndarray, xb: np.ndarray, xc: np.ndarray, alpha: float) -> np.ndarray:
    return np.asarray(xa) + alpha * (np.asarray(xb) - np.asarray(xc))


def optimize(cost_fn: Callable[[np.ndarray], float], box: tuple[Sequence[float], Sequence[float]],
             cfg: SearchConfig = SearchConfig(), initial: np.ndarray | None = None,
             map_fn: Callable[[Callable, Iterable], Iterable] = map) -> SearchResult:
    """Minimise ``cost_fn`` over the box ``(lo, hi)``.

    Every random number is drawn from one generator in a fixed order, so a
    parallel ``map_fn`` gives the same result as the serial default.
    """
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    d = lo.size
    n = cfg.n_particles
    rng = np.random.default_rng(cfg.seed)
    X = lo + rng.random((n, d)) * (hi - lo)
    if initial is not None:
        X = np.clip(np.array(initial, dtype=float).reshape(n, d), lo, hi)
    V = np.zeros((n, d))

    def evaluate(P: np.ndarray) -> np.ndarray:
        return np.array(list(map_fn(cost_fn, [p.copy() for p in P])), dtype=float)

    cost = evaluate(X)
    n_eval = n
    pbest, pcost = X.copy(), cost.copy()
    g = int(np.argmin(cost))
    gbest, gcost = X[g].copy(), float(cost[g])
    result = SearchResult(gbest, gcost)

    for it in range(cfg.iterations):
        improved = None
        better = cost < pcost
        pbest[better], pcost[better] = X[better], cost[better]
        i_min = int(np.argmin(cost))
        if cost[i_min] < gcost or it == 0:
            gbest, gcost = X[i_min].copy(), float(cost[i_min])
            improved = i_min
        for i in range(n):
            result.trace.append(TraceRow(it, i, tuple(float(v) for v in X[i]), float(cost[i]), i == improved))
        result.best_history.append(gcost)
        if it == cfg.iterations - 1:
            break

        if rng.random() < cfg.mutate_prob:
            r1 = rng.random((n, d))
            r2 = rng.random((n, d))
            V = (cfg.inertia * V + cfg.cognitive * r1 * (pbest - X)
                 + cfg.social * r2 * (gbest - X))
            X = X + V
            clamped = (X < lo) | (X > hi)
            X = np.clip(X, lo, hi)
            V[clamped] = 0.0
            cost = evaluate(X)
            n_eval += n
            result.steps.append("pso")
        else:
            cand = np.empty_like(X)
            for i in range(n):
                others = [j for j in range(n) if j != i]
                a, b, c = rng.choice(others, size=3, replace=False)
                m = de_mutant(X[a], X[b], X[c], cfg.mutation_factor)
                mask = rng.random(d) < cfg.cross_p
                mask[rng.integers(d)] = True
                cand[i] = np.clip(np.where(mask, m, X[i]), lo, hi)
            cand_cost = evaluate(cand)
            n_eval += n
            take = cand_cost < cost
            X = np.where(take[:, None], cand, X)
            cost = np.where(take, cand_cost, cost)
            result.steps.append("de")

    result.best_position = gbest
    result.best_cost = gcost
    result.n_evaluations = n_eval
    return result


TRACE_COLUMNS = ("iteration", "particle", "t_m", "n_c", "s_c", "cost", "is_global_best")


def emit_trace(result: SearchResult, path: str | Path, extra: dict | None = None) -> None:
    """Write one row per evaluated particle position.

    Positions use the search coordinates; the t_m column holds the delay
    offset from the packet's own arrival.  ``extra`` adds constant leading
    columns (e.g. the packet index) to every row.
    """
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(extra) + list(TRACE_COLUMNS))
        write_trace_rows(w, result, list(extra.values()))


def write_trace_rows(writer, result: SearchResult, prefix: list) -> None:
    for r in result.trace:
        pos = list(r.position) + [""] * (3 - len(r.position))
        writer.writerow(prefix + [r.iteration, r.particle]
                        + [repr(v) if v != "" else "" for v in pos[:3]]
                        + [repr(r.cost), int(r.is_global_best)])


# ------------------------------------------------------------- benchmarks

MUTATION_BOX = (np.array([0.0, 0.0, 0.0]), np.array([1.0, 5.0, 1460.0]))


def bowl(center: Sequence[float], scale: Sequence[float] | None = None) -> Callable:
    c = np.asarray(center, dtype=float)
    s = np.ones_like(c) if scale is None else np.asarray(scale, dtype=float)
    return lambda x: float((((np.asarray(x) - c) / s) ** 2).sum())


def rastrigin(box) -> Callable:
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)

    def f(x):
        z = -5.12 + 10.24 * (np.asarray(x) - lo) / (hi - lo) + 0.5
        return float(10 * z.size + (z * z - 10 * np.cos(2 * math.pi * z)).sum())

    return f


def ua_plateau(x) -> float:
    """Piecewise-constant stand-in for a uniform-assignment cost surface.

    Smooth in the delay, constant on each integer cell of n_c, and constant
    on 100-byte bands of s_c.
    """
    t, n_c, s_c = float(x[0]), float(x[1]), float(x[2])
    k = math.floor(n_c + 0.5)
    band = math.floor(s_c / 100.0)
    return (t - 0.37) ** 2 + 0.1 * abs(k - 3) + 0.02 * abs(band - 8)


def sa_plateau(x) -> float:
    """Two-dimensional cost that is deterministic within each n_c rounding cell."""
    t, n_c = float(x[0]), float(x[1])
    k = math.floor(n_c + 0.5)
    jitter = np.random.default_rng(k).random()
    return (t - 0.62) ** 2 + 0.05 * abs(k - 4) + 0.01 * jitter


def benchmark_suite() -> dict[str, tuple[Callable, tuple]]:
    box3 = MUTATION_BOX
    box2 = (box3[0][:2], box3[1][:2])
    span3 = box3[1] - box3[0]
    return {
        "bowl": (bowl([0.3, 2.2, 700.0], span3), box3),
        "rastrigin": (rastrigin(box2), box2),
        "ua_plateau": (ua_plateau, box3),
        "sa_plateau": (sa_plateau, box2),
    }


OPTIMIZERS = {"pso": 1.0, "pso-de": 0.5, "de": 0.0}


def run_benchmarks(seeds: Iterable[int] = range(30), names: Sequence[str] | None = None,
                   cfg: SearchConfig = SearchConfig()) -> dict[str, dict[str, float]]:
    """Mean best cost per (benchmark, optimiser) over ``seeds``."""
    seeds = list(seeds)
    suite = benchmark_suite()
    table: dict[str, dict[str, float]] = {}
    for name in names or suite:
        fn, box = suite[name]
        table[name] = {}
        for opt, prob in OPTIMIZERS.items():
            costs = [optimize(fn, box, replace(cfg, mutate_prob=prob, seed=s)).best_cost for s in seeds]
            table[name][opt] = float(np.mean(costs))
    return table

