"""Real-coded genetic algorithm for tuning PD gains or fuzzy set right vertices.

Operators: tournament selection, BLX-0.5 crossover, Gaussian mutation, and
elitism. Each offspring pair draws from its own random stream seeded by
``(seed, generation, pair index)``, so results do not depend on the order in
which fitness evaluations run.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .controllers import PDGains, make_controller
from .fuzzy import FLCDefinition, default_definition
from .integrator import DivergedError, SimConfig, SimTrace, simulate
from .metrics import ALPHA, BETA, overshoot_pct, trace_fitness
from .plant import PlantParams

PENALTY = 1e9
OVERSHOOT_PENALTY = 1e6
TORQUE_RIGHT_CAP = 50.0


@dataclass(frozen=True)
class PDTask:
    """Genes ``(kp1, kd1, kp2, kd2)``."""

    name = "ga-pd"
    kp_bounds: tuple[float, float] = (1.0, 400.0)
    kd_bounds: tuple[float, float] = (0.1, 60.0)

    def bounds(self) -> np.ndarray:
        return np.array([self.kp_bounds, self.kd_bounds] * 2)

    def repair(self, genes) -> np.ndarray:
        b = self.bounds()
        return np.clip(np.asarray(genes, dtype=float), b[:, 0], b[:, 1])

    def is_valid(self, genes) -> bool:
        b = self.bounds()
        return bool(np.all((genes >= b[:, 0]) & (genes <= b[:, 1])))

    def decode(self, genes) -> PDGains:
        return PDGains.from_genes(genes)

    def encode(self, gains: PDGains) -> np.ndarray:
        return gains.as_genes()


@dataclass(frozen=True)
class FLCTask:
    """Genes are the 15 right vertices (error, rate, torque; NL..PL each).

    Left vertices and peaks stay at their values in ``base``. A right vertex
    may move anywhere in ``(peak, peak + 2 * half_width]``; the torque PL
    right vertex is additionally capped at 50.
    """

    name = "ga-flc"
    base: FLCDefinition = field(default_factory=default_definition)

    def _peaks_and_widths(self):
        verts = np.concatenate([v.vertices() for v in self.base.variables])
        return verts[:, 1], verts[:, 1] - verts[:, 0]

    def bounds(self) -> np.ndarray:
        peaks, hw = self._peaks_and_widths()
        high = peaks + 2 * hw
        high[-1] = min(high[-1], TORQUE_RIGHT_CAP)
        return np.column_stack([peaks, high])

    def repair(self, genes) -> np.ndarray:
        b = self.bounds()
        g = np.clip(np.asarray(genes, dtype=float), b[:, 0], b[:, 1])
        bad = g <= b[:, 0]
        g[bad] = b[bad, 0] + 1e-3 * (b[bad, 1] - b[bad, 0])
        return g

    def is_valid(self, genes) -> bool:
        b = self.bounds()
        return bool(np.all((genes > b[:, 0]) & (genes <= b[:, 1])))

    def decode(self, genes) -> FLCDefinition:
        return self.base.with_right_vertices(genes)

    def encode(self, fdef: FLCDefinition) -> np.ndarray:
        return fdef.right_vertices()


def make_task(name: str, base: FLCDefinition | None = None):
    if name == "ga-pd":
        return PDTask()
    if name == "ga-flc":
        return FLCTask(base) if base is not None else FLCTask()
    raise ValueError(f"unknown tuning task {name!r}")


def encode_bounds(task) -> np.ndarray:
    """``(n_genes, 2)`` array of per-gene ``(low, high)``."""
    return task.bounds()


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 50
    generations: int = 100
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    mutation_sigma: float = 0.1
    tournament_size: int = 3
    elite_count: int = 2
    seed: int = 42
    workers: int = 1
    max_overshoot_pct: float | None = 0.0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must be in [0, population_size)")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not self.mutation_sigma >= 0:
            raise ValueError("mutation_sigma must be >= 0")
        if not 1 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must be in [1, population_size]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_overshoot_pct is not None and not self.max_overshoot_pct >= 0:
            raise ValueError("max_overshoot_pct must be >= 0 or None")


@dataclass
class FitnessReport:
    value: float
    trace: SimTrace | None
    feasible: bool


def _worst_overshoot(trace: SimTrace, theta_d) -> float:
    return max(
        overshoot_pct(trace.theta[:, j], theta_d[j]) for j in range(2) if theta_d[j] != 0
    )


def evaluate_fitness(genes, task, plant: PlantParams, sim_cfg: SimConfig,
                     alpha: float = ALPHA, beta: float = BETA,
                     max_overshoot_pct: float | None = None) -> FitnessReport:
    """Weighted absolute-error integral of the closed loop built from ``genes``.

    A diverged run scores ``PENALTY`` plus the number of steps it fell short.
    With ``max_overshoot_pct`` set, a response overshooting the target by more
    than that is infeasible and scores ``OVERSHOOT_PENALTY`` plus its overshoot.
    """
    genes = task.repair(genes)
    controller = make_controller(task.name, task.decode(genes))
    try:
        trace = simulate(plant, controller, sim_cfg)
    except DivergedError as exc:
        return FitnessReport(PENALTY + (sim_cfg.n_steps - exc.step), None, False)
    if max_overshoot_pct is not None:
        over = _worst_overshoot(trace, sim_cfg.theta_desired)
        if over > max_overshoot_pct:
            return FitnessReport(OVERSHOOT_PENALTY + over, trace, False)
    return FitnessReport(trace_fitness(trace, sim_cfg.reference, alpha, beta), trace, True)


def select_tournament(fitnesses, tournament_size: int, rng: np.random.Generator) -> int:
    """Index of the fittest of ``tournament_size`` draws with replacement; ties go to the lower index.

    A tournament as large as the population is exhaustive and returns the
    global best without drawing.
    """
    fit = np.asarray(fitnesses)
    if tournament_size >= len(fit):
        return int(np.argmin(fit))
    picks = rng.integers(0, len(fit), size=tournament_size)
    best = picks[0]
    for i in picks[1:]:
        if fit[i] < fit[best] or (fit[i] == fit[best] and i < best):
            best = i
    return int(best)


def crossover_blx(parent_a, parent_b, rate: float, rng: np.random.Generator, task=None, alpha: float = 0.5):
    a = np.asarray(parent_a, dtype=float)
    b = np.asarray(parent_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("parents must have the same length")
    if rng.random() >= rate:
        return a.copy(), b.copy()
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    d = hi - lo
    c1 = rng.uniform(lo - alpha * d, hi + alpha * d)
    c2 = rng.uniform(lo - alpha * d, hi + alpha * d)
    if task is not None:
        c1, c2 = task.repair(c1), task.repair(c2)
    return c1, c2


def mutate_gaussian(genes, rate: float, sigma_fraction: float, rng: np.random.Generator, task) -> np.ndarray:
    g = np.asarray(genes, dtype=float).copy()
    b = task.bounds()
    hit = rng.random(g.shape) < rate
    noise = rng.normal(0.0, 1.0, g.shape) * sigma_fraction * (b[:, 1] - b[:, 0])
    g[hit] += noise[hit]
    return task.repair(g)


@dataclass
class GAResult:
    best: np.ndarray
    best_fitness: float
    history: list[float]
    mean_history: list[float]
    task: object

    @property
    def best_params(self):
        return self.task.decode(self.best)


def _evaluate_all(population, task, plant, sim_cfg, ga_cfg, pool) -> np.ndarray:
    args = [(g, task, plant, sim_cfg, ALPHA, BETA, ga_cfg.max_overshoot_pct) for g in population]
    if pool is None:
        return np.array([_fitness_value(a) for a in args])
    return np.array(list(pool.map(_fitness_value, args, chunksize=max(1, len(args) // 16))))


def _fitness_value(args) -> float:
    return evaluate_fitness(*args).value


def _stream(seed: int, generation: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, generation, index])


def optimize(task, plant: PlantParams, sim_cfg: SimConfig, ga_cfg: GAConfig, log=None) -> GAResult:
    """Generational GA with elitism; returns the best individual ever evaluated.

    ``history[g]`` is the best fitness seen up to generation ``g`` (generation
    0 is the initial population), so it never increases.
    """
    bounds = task.bounds()
    n = ga_cfg.population_size
    pop = np.array([
        task.repair(_stream(ga_cfg.seed, 0, i).uniform(bounds[:, 0], bounds[:, 1]))
        for i in range(n)
    ])
    pool = ProcessPoolExecutor(ga_cfg.workers) if ga_cfg.workers > 1 else None
    try:
        fit = _evaluate_all(pop, task, plant, sim_cfg, ga_cfg, pool)
        best_i = int(np.argmin(fit))
        best, best_fit = pop[best_i].copy(), float(fit[best_i])
        history, mean_history = [best_fit], [float(np.mean(fit))]
        if log:
            log(0, best_fit, mean_history[-1])
        for gen in range(1, ga_cfg.generations + 1):
            order = np.argsort(fit, kind="stable")
            children = [pop[i].copy() for i in order[: ga_cfg.elite_count]]
            pair = 0
            while len(children) < n:
                rng = _stream(ga_cfg.seed, gen, pair)
                pa = select_tournament(fit, ga_cfg.tournament_size, rng)
                pb = select_tournament(fit, ga_cfg.tournament_size, rng)
                for child in crossover_blx(pop[pa], pop[pb], ga_cfg.crossover_rate, rng, task):
                    children.append(mutate_gaussian(child, ga_cfg.mutation_rate, ga_cfg.mutation_sigma, rng, task))
                pair += 1
            pop = np.array(children[:n])
            fit = np.concatenate([
                fit[order[: ga_cfg.elite_count]],
                _evaluate_all(pop[ga_cfg.elite_count:], task, plant, sim_cfg, ga_cfg, pool),
            ])
            i = int(np.argmin(fit))
            if fit[i] < best_fit:
                best, best_fit = pop[i].copy(), float(fit[i])
            history.append(best_fit)
            mean_history.append(float(np.mean(fit)))
            if log:
                log(gen, best_fit, mean_history[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return GAResult(best, best_fit, history, mean_history, task)


GENERATION_LOG_COLUMNS = ("generation", "best_fitness", "mean_fitness")


def write_generation_log(result: GAResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GENERATION_LOG_COLUMNS)
        for g, (b, m) in enumerate(zip(result.history, result.mean_history)):
            w.writerow([g, repr(b), repr(m)])


def read_generation_log(path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != GENERATION_LOG_COLUMNS:
        raise ValueError(f"{path}: not a generation log")
    return [(int(r[0]), float(r[1]), float(r[2])) for r in rows[1:]]
