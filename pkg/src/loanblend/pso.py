"""Particle swarm optimisation for hyperparameter tuning.

Velocity update with inertia, cognitive and social pulls; positions are
clamped to the search box and velocities clipped to v_max after each
move. Randomness is pre-drawn per iteration from a seeded stream so
results cannot depend on the evaluation schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import learners, metrics
from .dataset import stratified_kfold
from .learners import SEARCH_SPACES, ClassifierSpec


@dataclass
class SearchSpace:
    dimensions: list  # (name, "integer"|"real", lower, upper)

    def __post_init__(self):
        for name, kind, lo, hi in self.dimensions:
            if kind not in ("integer", "real"):
                raise ValueError(f"dimension {name!r}: bad kind {kind!r}")
            if not lo < hi:
                raise ValueError(f"dimension {name!r}: lower must be < upper")

    @property
    def names(self):
        return [d[0] for d in self.dimensions]

    @property
    def lower(self):
        return np.asarray([d[2] for d in self.dimensions], dtype=np.float64)

    @property
    def upper(self):
        return np.asarray([d[3] for d in self.dimensions], dtype=np.float64)

    @property
    def integer_mask(self):
        return np.asarray([d[1] == "integer" for d in self.dimensions])

    @classmethod
    def for_model(cls, kind: str) -> "SearchSpace":
        return cls(dimensions=list(SEARCH_SPACES[kind]))


@dataclass
class SwarmConfig:
    n_particles: int = 10
    c1: float = 1.5
    c2: float = 1.5
    inertia: float = 0.5
    v_max: np.ndarray | None = None  # per dimension; None -> 0.2 * range
    iterations: int = 10
    seed: int = 0

    def validate(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if min(self.c1, self.c2, self.inertia) < 0:
            raise ValueError("c1, c2 and inertia must be >= 0")


@dataclass
class Swarm:
    positions: np.ndarray  # N x d
    velocities: np.ndarray
    personal_best: np.ndarray
    personal_best_fitness: np.ndarray
    global_best: np.ndarray
    global_best_fitness: float
    lower: np.ndarray
    upper: np.ndarray
    v_max: np.ndarray
    rng: np.random.Generator


def _resolve_vmax(space: SearchSpace, config: SwarmConfig) -> np.ndarray:
    if config.v_max is None:
        return 0.2 * (space.upper - space.lower)
    v = np.broadcast_to(np.asarray(config.v_max, dtype=np.float64),
                        (len(space.dimensions),)).copy()
    if np.any(v <= 0):
        raise ValueError("v_max must be positive")
    return v


def init_swarm(space: SearchSpace, config: SwarmConfig) -> Swarm:
    """Uniform positions in the box, velocities uniform in [-v_max, v_max],
    personal bests at the initial positions."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    lower, upper = space.lower, space.upper
    d = lower.size
    v_max = _resolve_vmax(space, config)
    positions = lower + rng.random((config.n_particles, d)) * (upper - lower)
    velocities = rng.uniform(-v_max, v_max, size=(config.n_particles, d))
    return Swarm(
        positions=positions,
        velocities=velocities,
        personal_best=positions.copy(),
        personal_best_fitness=np.full(config.n_particles, -np.inf),
        global_best=positions[0].copy(),
        global_best_fitness=-np.inf,
        lower=lower,
        upper=upper,
        v_max=v_max,
        rng=rng,
    )


def _evaluate(swarm: Swarm, fitness):
    for i in range(swarm.positions.shape[0]):
        value = fitness(swarm.positions[i])
        if not np.isfinite(value):
            value = -np.inf
        if value > swarm.personal_best_fitness[i]:
            swarm.personal_best_fitness[i] = value
            swarm.personal_best[i] = swarm.positions[i].copy()
        if value > swarm.global_best_fitness:
            swarm.global_best_fitness = float(value)
            swarm.global_best = swarm.positions[i].copy()


def _move(swarm: Swarm, config: SwarmConfig):
    shape = swarm.positions.shape
    rand1 = swarm.rng.random(shape)
    rand2 = swarm.rng.random(shape)
    swarm.velocities = (
        config.inertia * swarm.velocities
        + config.c1 * rand1 * (swarm.personal_best - swarm.positions)
        + config.c2 * rand2 * (swarm.global_best - swarm.positions)
    )
    swarm.positions = swarm.positions + swarm.velocities
    swarm.velocities = np.clip(swarm.velocities, -swarm.v_max, swarm.v_max)
    swarm.positions = np.clip(swarm.positions, swarm.lower, swarm.upper)


def step(swarm: Swarm, fitness, config: SwarmConfig) -> Swarm:
    """One iteration: evaluate current positions (maximisation, strict
    improvement updates the bests), then move, clip and clamp."""
    _evaluate(swarm, fitness)
    _move(swarm, config)
    return swarm


def optimize(space: SearchSpace, fitness, config: SwarmConfig):
    """Run the configured number of iterations and return
    (best_position, best_fitness, per-evaluation best trace)."""
    swarm = init_swarm(space, config)
    trace = []
    for _ in range(config.iterations):
        step(swarm, fitness, config)
        trace.append(swarm.global_best_fitness)
    _evaluate(swarm, fitness)
    trace.append(swarm.global_best_fitness)
    return swarm.global_best.copy(), swarm.global_best_fitness, np.asarray(trace)


def position_to_spec(kind: str, space: SearchSpace, position) -> ClassifierSpec:
    """Round integer dimensions and clamp into bounds."""
    hp = {}
    for (name, dkind, lo, hi), value in zip(space.dimensions, position):
        if dkind == "integer":
            value = int(math.floor(value + 0.5))
        hp[name] = min(max(value, lo), hi)
    return ClassifierSpec(kind=kind, hyperparameters=hp)


def _stratified_subsample(y, max_rows, seed):
    if max_rows is None or max_rows >= y.size:
        return np.arange(y.size)
    rng = np.random.default_rng(seed)
    keep = []
    frac = max_rows / y.size
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        keep.extend(idx[: max(2, int(round(frac * idx.size)))])
    return np.sort(np.asarray(keep, dtype=np.int64))


def cv_auc(spec: ClassifierSpec, X, y, cv_folds: int, seed: int) -> float:
    """Mean stratified-CV AUC; the tuning fitness function."""
    aucs = []
    for train_idx, test_idx in stratified_kfold(y, cv_folds, seed):
        model = learners.fit(spec, X[train_idx], y[train_idx], seed=seed)
        probs = learners.predict_proba(model, X[test_idx])
        aucs.append(metrics.roc_auc(y[test_idx], probs)[1])
    return float(np.mean(aucs))


def tune_model(kind: str, X, y, space: SearchSpace | None = None,
               config: SwarmConfig | None = None, cv_folds: int = 3,
               max_rows: int | None = None, with_trace: bool = False):
    """PSO search over the model's declared space; fitness is the mean
    stratified-CV AUC on (optionally subsampled) training data only."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if space is None:
        space = SearchSpace.for_model(kind)
    if config is None:
        config = SwarmConfig()
    sub = _stratified_subsample(y, max_rows, [config.seed, 31])
    Xs, ys = X[sub], y[sub]
    cache = {}

    def fitness(position):
        spec = position_to_spec(kind, space, position)
        key = tuple(sorted(spec.hyperparameters.items()))
        if key not in cache:
            cache[key] = cv_auc(spec, Xs, ys, cv_folds, config.seed)
        return cache[key]

    best_position, _, trace = optimize(space, fitness, config)
    best = position_to_spec(kind, space, best_position)
    if with_trace:
        return best, trace
    return best
