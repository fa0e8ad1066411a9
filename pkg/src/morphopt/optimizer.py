"""Search over designs: CMA-ES on the continuous genome, GA baseline on the
discretized space.

The CMA-ES follows the standard (mu/mu_w, lambda) strategy with the usual
default weights, cumulation, and damping constants; it works in unit-box
coordinates (every genome dimension scaled to [0, 1]) so a single sigma
fits module states and pose alike, and samples are clamped to the box.
The GA encodes a chromosome as (module-id permutation, pose-grid index
triple) with ordered crossover and transposition mutation, which keep the
permutation valid by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .morphology import MountedPose, Workcell

__all__ = [
    "CmaesConfig",
    "GaConfig",
    "GenerationRecord",
    "PoseGrid",
    "pose_grid",
    "discretize_pose",
    "cmaes_optimize",
    "ga_optimize",
    "genome_bounds",
]


@dataclass(frozen=True)
class CmaesConfig:
    lower: np.ndarray
    upper: np.ndarray
    population: int = 20
    generations: int = 100
    sigma0: float = 0.25
    seed: int = 0
    x0: np.ndarray | None = None

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or (lower >= upper).any():
            raise ValueError("bounds must satisfy lower < upper elementwise")
        if self.population < 4:
            raise ValueError("population must be at least 4")
        if self.sigma0 <= 0.0:
            raise ValueError("sigma0 must be positive")

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class GaConfig:
    num_modules: int  # m+1, permutation length
    population: int = 20
    generations: int = 100
    mutation_prob: float = 0.5
    crossover_prob: float = 0.1
    seed: int = 0
    workcell: Workcell = field(default_factory=Workcell)
    steps: tuple = (0.2, 0.2, np.pi / 2)

    def __post_init__(self):
        if not (0.0 <= self.mutation_prob <= 1.0 and 0.0 <= self.crossover_prob <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.population < 2:
            raise ValueError("population must be at least 2")


@dataclass
class GenerationRecord:
    generation: int
    best_e: float  # best-so-far, non-increasing by construction
    mean_e: float
    best_vector: np.ndarray | None
    evaluations: int


def genome_bounds(num_states: int, workcell: Workcell):
    """Box bounds for the concatenated (module states, pose) vector."""
    lower = np.concatenate([np.zeros(num_states), [workcell.x_range[0], workcell.y_range[0], workcell.theta_range[0]]])
    upper = np.concatenate([np.ones(num_states), [workcell.x_range[1], workcell.y_range[1], workcell.theta_range[1]]])
    return lower, upper


class _CmaesState:
    """Distribution state plus the standard strategy constants."""

    def __init__(self, n: int, lam: int, sigma0: float, z0: np.ndarray):
        self.n = n
        self.lam = lam
        mu = lam // 2
        weights = np.log(lam / 2 + 0.5) - np.log(np.arange(1, mu + 1))
        self.weights = weights / weights.sum()
        self.mu = mu
        self.mueff = float(self.weights.sum() ** 2 / (self.weights**2).sum())
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, np.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = np.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.reset(z0, sigma0)

    def reset(self, z0: np.ndarray, sigma0: float):
        self.mean = z0.copy()
        self.sigma = sigma0
        self.cov = np.eye(self.n)
        self.pc = np.zeros(self.n)
        self.ps = np.zeros(self.n)
        self.counteval = 0

    def ask(self, rng) -> np.ndarray:
        vals, basis = np.linalg.eigh(self.cov)
        vals = np.maximum(vals, 1e-30)
        self._transform = basis * np.sqrt(vals)
        z = rng.standard_normal((self.lam, self.n))
        samples = self.mean + self.sigma * z @ self._transform.T
        return np.clip(samples, 0.0, 1.0)

    def tell(self, samples: np.ndarray, costs: np.ndarray):
        order = np.argsort(costs, kind="stable")
        elite = samples[order[: self.mu]]
        old_mean = self.mean
        self.mean = self.weights @ elite
        self.counteval += self.lam
        y = (self.mean - old_mean) / self.sigma
        vals, basis = np.linalg.eigh(self.cov)
        vals = np.maximum(vals, 1e-30)
        inv_sqrt = (basis / np.sqrt(vals)) @ basis.T
        self.ps = (1 - self.cs) * self.ps + np.sqrt(self.cs * (2 - self.cs) * self.mueff) * (
            inv_sqrt @ y
        )
        gens = self.counteval / self.lam
        hsig = float(
            np.dot(self.ps, self.ps) / self.n / (1 - (1 - self.cs) ** (2 * gens))
            < 2 + 4.0 / (self.n + 1)
        )
        self.pc = (1 - self.cc) * self.pc + hsig * np.sqrt(
            self.cc * (2 - self.cc) * self.mueff
        ) * y
        deltas = (elite - old_mean) / self.sigma
        rank_mu = np.einsum("k,ki,kj->ij", self.weights, deltas, deltas)
        c1a = self.c1 * (1 - (1 - hsig**2) * self.cc * (2 - self.cc))
        self.cov = (1 - c1a - self.cmu) * self.cov + self.c1 * np.outer(self.pc, self.pc) + self.cmu * rank_mu
        self.sigma *= np.exp(
            (self.cs / self.damps) * (np.linalg.norm(self.ps) / self.chi_n - 1)
        )

    def degenerated(self) -> bool:
        if not (np.isfinite(self.cov).all() and np.isfinite(self.mean).all() and np.isfinite(self.sigma)):
            return True
        vals = np.linalg.eigvalsh(self.cov)
        return vals[0] <= 0.0 or vals[-1] / max(vals[0], 1e-300) > 1e14


def cmaes_optimize(eval_fn, config: CmaesConfig, map_fn=None) -> dict:
    """Minimize report.E over the bounded genome space.

    ``eval_fn`` maps a native-coordinates vector to an object with an
    ``E`` attribute (an EvaluationReport in the design pipeline).
    ``map_fn`` lets callers inject a parallel map over the population.
    Runs the full generation budget and returns the best-ever solution,
    its report, and per-generation logs. Covariance degeneration triggers
    a restart from the best-so-far point at the initial step size.
    """
    if map_fn is None:
        map_fn = lambda fn, xs: [fn(x) for x in xs]
    rng = np.random.default_rng(config.seed)
    span = config.upper - config.lower

    def to_native(z):
        return config.lower + z * span

    if config.x0 is not None:
        z0 = (np.asarray(config.x0, dtype=float) - config.lower) / span
    else:
        z0 = rng.random(config.dimension)
    state = _CmaesState(config.dimension, config.population, config.sigma0, z0)
    best_vec = None
    best_report = None
    logs = []
    evaluations = 0
    restarts = 0
    for gen in range(config.generations):
        z_samples = state.ask(rng)
        natives = [to_native(z) for z in z_samples]
        reports = list(map_fn(eval_fn, natives))
        costs = np.array([r.E for r in reports])
        evaluations += len(natives)
        gen_best = int(np.argmin(costs))
        if best_report is None or costs[gen_best] < best_report.E:
            best_report = reports[gen_best]
            best_vec = natives[gen_best].copy()
        state.tell(z_samples, costs)
        if state.degenerated():
            restarts += 1
            state.reset((best_vec - config.lower) / span, config.sigma0)
        logs.append(
            GenerationRecord(
                generation=gen,
                best_e=float(best_report.E),
                mean_e=float(costs.mean()),
                best_vector=best_vec.copy(),
                evaluations=evaluations,
            )
        )
    return {"best_vector": best_vec, "best_report": best_report, "logs": logs, "restarts": restarts}


@dataclass(frozen=True)
class PoseGrid:
    xs: tuple
    ys: tuple
    thetas: tuple

    @property
    def shape(self):
        return (len(self.xs), len(self.ys), len(self.thetas))

    def pose(self, ix: int, iy: int, ith: int) -> MountedPose:
        return MountedPose(self.xs[ix], self.ys[iy], self.thetas[ith])

    def poses(self) -> list:
        return [
            MountedPose(x, y, th) for x in self.xs for y in self.ys for th in self.thetas
        ]


def _axis_states(lo: float, hi: float, step: float):
    # integer multiples of the step strictly inside the open interval
    k_lo = int(np.floor(lo / step)) + 1
    k_hi = int(np.ceil(hi / step)) - 1
    return tuple(k * step for k in range(k_lo, k_hi + 1))


def pose_grid(workcell: Workcell = Workcell(), steps=(0.2, 0.2, np.pi / 2)) -> PoseGrid:
    """Candidate mounted poses on the discretization grid.

    Position states are step multiples strictly inside the workcell (the
    default 1.2 m x 0.6 m cell at 0.2 m gives 5 x 3 states); yaw states
    are step multiples over [-pi, pi), four at the pi/2 default.
    """
    if min(steps) <= 0.0:
        raise ValueError("steps must be positive")
    xs = _axis_states(*workcell.x_range, steps[0])
    ys = _axis_states(*workcell.y_range, steps[1])
    k = int(round(2 * np.pi / steps[2]))
    thetas = tuple(-np.pi + i * steps[2] for i in range(max(k, 0)))
    thetas = tuple(t for t in thetas if t < np.pi)
    grid = PoseGrid(xs=xs, ys=ys, thetas=thetas)
    if 0 in grid.shape:
        raise ValueError("pose discretization produced an empty grid")
    return grid


def discretize_pose(workcell: Workcell = Workcell(), steps=(0.2, 0.2, np.pi / 2)) -> list:
    return pose_grid(workcell, steps).poses()


def _ordered_crossover(parent_a, parent_b, rng):
    n = len(parent_a)
    i, j = sorted(rng.integers(0, n, size=2))
    j += 1
    child = [-1] * n
    child[i:j] = parent_a[i:j]
    kept = set(parent_a[i:j])
    fill = [g for g in parent_b if g not in kept]
    pos = 0
    for idx in list(range(0, i)) + list(range(j, n)):
        child[idx] = fill[pos]
        pos += 1
    return tuple(child)


def ga_optimize(eval_fn, config: GaConfig, map_fn=None) -> dict:
    """Permutation-encoded GA over (assembly order, pose-grid cell).

    ``eval_fn(permutation, pose)`` returns a report; phenotypes repeat
    often under selection, so results are memoized on the truncated
    permutation plus grid cell (evaluation counts still tally one per
    individual per generation, keeping budget parity with CMA-ES).
    """
    if map_fn is None:
        map_fn = lambda fn, xs: [fn(x) for x in xs]
    rng = np.random.default_rng(config.seed)
    grid = pose_grid(config.workcell, config.steps)
    shape = grid.shape
    n = config.num_modules
    eom = n  # highest id terminates assembly

    def random_chromosome():
        perm = tuple(int(v) for v in rng.permutation(n) + 1)
        cell = tuple(int(rng.integers(0, s)) for s in shape)
        return perm, cell

    def phenotype_key(chrom):
        perm, cell = chrom
        cut = perm.index(eom)
        return perm[: cut + 1], cell

    cache = {}

    def evaluate_population(pop):
        missing = []
        keys = []
        for chrom in pop:
            key = phenotype_key(chrom)
            keys.append(key)
            if key not in cache:
                cache[key] = None
                missing.append((key, chrom))
        results = map_fn(_GaEval(eval_fn, grid), [c for _, c in missing])
        for (key, _), rep in zip(missing, results):
            cache[key] = rep
        return [cache[k] for k in keys]

    population = [random_chromosome() for _ in range(config.population)]
    best_chrom = None
    best_report = None
    logs = []
    evaluations = 0
    for gen in range(config.generations):
        reports = evaluate_population(population)
        evaluations += len(population)
        costs = np.array([r.E for r in reports])
        gen_best = int(np.argmin(costs))
        if best_report is None or costs[gen_best] < best_report.E:
            best_report = reports[gen_best]
            best_chrom = population[gen_best]
        logs.append(
            GenerationRecord(
                generation=gen,
                best_e=float(best_report.E),
                mean_e=float(costs.mean()),
                best_vector=None,
                evaluations=evaluations,
            )
        )
        next_pop = [best_chrom]  # elitism of one
        while len(next_pop) < config.population:
            a = _tournament(population, costs, rng)
            b = _tournament(population, costs, rng)
            perm, cell = a
            if rng.random() < config.crossover_prob:
                perm = _ordered_crossover(a[0], b[0], rng)
                cell = tuple(a[1][k] if rng.random() < 0.5 else b[1][k] for k in range(3))
            if rng.random() < config.mutation_prob:
                perm = list(perm)
                i, j = rng.integers(0, n, size=2)
                perm[i], perm[j] = perm[j], perm[i]
                perm = tuple(perm)
                cell = list(cell)
                axis = int(rng.integers(0, 3))
                cell[axis] = int(rng.integers(0, shape[axis]))
                cell = tuple(cell)
            next_pop.append((perm, cell))
        population = next_pop
    pose = grid.pose(*best_chrom[1])
    return {
        "best_chromosome": best_chrom,
        "best_pose": pose,
        "best_report": best_report,
        "logs": logs,
    }


class _GaEval:
    """Picklable adapter turning chromosomes into eval_fn(perm, pose) calls."""

    def __init__(self, eval_fn, grid: PoseGrid):
        self.eval_fn = eval_fn
        self.grid = grid

    def __call__(self, chromosome):
        perm, cell = chromosome
        return self.eval_fn(perm, self.grid.pose(*cell))


def _tournament(population, costs, rng, size: int = 2):
    idx = rng.integers(0, len(population), size=size)
    winner = idx[np.argmin(costs[idx])]
    return population[int(winner)]
