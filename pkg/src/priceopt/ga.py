"""Penalty-method genetic algorithm over premium changes.

Each chromosome is one string for the whole portfolio. In continuous mode
every customer contributes ``bits_per_gene`` bits read as a fixed-point
number between that customer's bounds; in discrete mode every customer
contributes one index into the shared grid. Bounds therefore hold by
construction and never need repairing.

A generation is: roulette-wheel reproduction on shifted penalized values,
single-point crossover of consecutive pairs, independent mutation, then the
best member seen so far is copied into slot 0 (elitism). All randomness comes
from one ``numpy.random.Generator`` (PCG64) consumed in a fixed order, so a
seed fully determines the run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conversion import ConversionModel, probabilities
from .exceptions import ValidationError
from .market import DeltaDomain, Portfolio
from .objectives import (
    VOLUME,
    PenaltyConfig,
    ProblemSpec,
    batch_evaluate,
    count_of,
    is_feasible,
    penalty_function,
)
from .results import SolverResult

FITNESS_EPS = 1e-12


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 100
    crossover_prob: float = 0.8
    mutation_prob: float = 0.01
    max_generations: int = 500
    bits_per_gene: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValidationError("must be >= 2", "population_size")
        for name in ("crossover_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError("must lie in [0, 1]", name)
        if self.max_generations < 1:
            raise ValidationError("must be >= 1", "max_generations")
        if not 4 <= self.bits_per_gene <= 30:
            raise ValidationError("must lie in [4, 30]", "bits_per_gene")


class Encoding:
    """Maps chromosome strings to premium-change vectors for one portfolio.

    Genes only take finitely many values (``2**bits`` levels or the grid size),
    so :meth:`levels_of` turns a chromosome into one level index per customer
    and :meth:`level_deltas` lists the premium change behind every level.
    """

    def __init__(self, portfolio: Portfolio, domain: DeltaDomain, bits_per_gene: int = 12):
        self.portfolio = portfolio
        self.domain = domain
        self.n = portfolio.n
        if domain.is_discrete:
            domain.check(portfolio)
            self.bits = None
            self.values = np.asarray(domain.values)
            self.length = self.n
        else:
            self.bits = int(bits_per_gene)
            self.weights = 2.0 ** np.arange(self.bits - 1, -1, -1)
            self.levels = float(2 ** self.bits - 1)
            self.length = self.n * self.bits

    @property
    def n_levels(self) -> int:
        return self.values.size if self.bits is None else 2 ** self.bits

    def levels_of(self, genes) -> np.ndarray:
        genes = np.asarray(genes)
        if self.bits is None:
            return genes
        v = genes.reshape(genes.shape[:-1] + (self.n, self.bits)) @ self.weights
        return v.astype(np.int64)

    def level_deltas(self) -> np.ndarray:
        """``(N, n_levels)`` premium change of every customer at every level."""
        if self.bits is None:
            return np.broadcast_to(self.values, (self.n, self.values.size))
        lo, hi = self.portfolio.lower[:, None], self.portfolio.upper[:, None]
        v = np.arange(2 ** self.bits)[None, :]
        return np.clip(lo + (hi - lo) * (v / self.levels), lo, hi)

    def random(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.bits is None:
            return rng.integers(0, self.values.size, size=(size, self.length))
        return rng.integers(0, 2, size=(size, self.length), dtype=np.uint8)

    def decode(self, genes) -> np.ndarray:
        genes = np.asarray(genes)
        if self.bits is None:
            return self.values[genes]
        v = self.levels_of(genes)
        lo, hi = self.portfolio.lower, self.portfolio.upper
        return np.clip(lo + (hi - lo) * (v / self.levels), lo, hi)

    def encode(self, delta) -> np.ndarray:
        """Nearest chromosome for ``delta`` (rounded to the grid)."""
        delta = np.asarray(delta, dtype=float)
        if self.bits is None:
            return np.abs(delta[..., None] - self.values).argmin(axis=-1)
        lo, hi = self.portfolio.lower, self.portfolio.upper
        v = np.rint((delta - lo) / (hi - lo) * self.levels).astype(np.int64)
        v = np.clip(v, 0, int(self.levels))
        bits = (v[..., None] // self.weights.astype(np.int64)) % 2
        return bits.reshape(delta.shape[:-1] + (self.length,)).astype(np.uint8)


def decode(chromosome, portfolio: Portfolio, domain: DeltaDomain,
           bits_per_gene: int = 12) -> np.ndarray:
    """Premium changes encoded by ``chromosome``.

    A continuous gene holding the integer ``v`` decodes to
    ``m + (M - m) * v / (2**b - 1)``; a discrete gene is an index into
    ``domain.values``.
    """
    return Encoding(portfolio, domain, bits_per_gene).decode(chromosome)


def scale_fitness(penalized) -> np.ndarray:
    """Non-negative roulette weights from penalized values (lower is better)."""
    penalized = np.asarray(penalized, dtype=float)
    return (penalized.max() - penalized) + FITNESS_EPS


def roulette_probabilities(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0:
        return np.full(weights.shape, 1.0 / weights.size)
    return weights / total


def select_parents(population, penalized, rng: np.random.Generator) -> np.ndarray:
    """Spin the roulette wheel once per member and return the selected copies."""
    population = np.asarray(population)
    probs = roulette_probabilities(scale_fitness(penalized))
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    picks = np.searchsorted(cdf, rng.random(len(population)), side="right")
    return population[np.minimum(picks, len(population) - 1)].copy()


def crossover(parent_a, parent_b, p_c: float, rng: np.random.Generator, cut: Optional[int] = None):
    """Single-point crossover: with probability ``p_c`` swap the tails after ``cut``.

    The cut is drawn uniformly from the string interior ``1 .. L-1``.
    """
    a = np.array(parent_a, copy=True)
    b = np.array(parent_b, copy=True)
    length = a.shape[-1]
    mate = rng.random() < p_c
    if cut is None:
        cut = int(rng.integers(1, length)) if length > 1 else 0
    if mate and 0 < cut < length:
        a[cut:], b[cut:] = parent_b[cut:], parent_a[cut:]
    return a, b


def _crossover_population(pop, p_c, rng):
    n_pairs = len(pop) // 2
    length = pop.shape[1]
    if n_pairs == 0 or length < 2:
        return pop
    mate = rng.random(n_pairs) < p_c
    cuts = rng.integers(1, length, size=n_pairs)
    first, second = pop[0:2 * n_pairs:2], pop[1:2 * n_pairs:2]
    swap = mate[:, None] & (np.arange(length)[None, :] >= cuts[:, None])
    new_first = np.where(swap, second, first)
    new_second = np.where(swap, first, second)
    out = pop.copy()
    out[0:2 * n_pairs:2] = new_first
    out[1:2 * n_pairs:2] = new_second
    return out


def _bernoulli_hits(size: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Flat indices of independent Bernoulli(p) successes among ``size`` trials."""
    if p <= 0.0 or size == 0:
        return np.empty(0, dtype=np.int64)
    if p >= 0.05:
        return np.flatnonzero(rng.random(size) < p)
    # Gaps between successes are geometric; draw them in batches.
    expected = size * p
    batch = int(expected + 6.0 * np.sqrt(expected) + 16)
    hits, last = [], -1
    while True:
        pos = last + np.cumsum(rng.geometric(p, size=batch))
        if pos[-1] >= size:
            hits.append(pos[pos < size])
            break
        hits.append(pos)
        last = int(pos[-1])
    return np.concatenate(hits)


def mutate(chromosome, p_m: float, rng: np.random.Generator, n_values: Optional[int] = None):
    """Bit-flip mutation, or uniform index redraw when ``n_values`` is given.

    Works on a single chromosome or a whole population; every position mutates
    independently with probability ``p_m``.
    """
    genes = np.array(chromosome, copy=True)
    flat = genes.reshape(-1)
    hits = _bernoulli_hits(flat.size, p_m, rng)
    if n_values is None:
        flat[hits] = 1 - flat[hits]
    else:
        flat[hits] = rng.integers(0, n_values, size=hits.size)
    return genes


TABLE_LIMIT = 1 << 22


class _Scorer:
    """Objective and residuals for a population of chromosomes.

    When the per-customer tables of acceptance probability and volume fit in
    memory they are precomputed for every gene level and scoring becomes a
    gather plus a row sum, with the same values ``batch_evaluate`` produces.
    """

    def __init__(self, spec, portfolio, model, encoding):
        self.spec, self.portfolio, self.model, self.encoding = spec, portfolio, model, encoding
        self.tables = None
        if portfolio.n * encoding.n_levels <= TABLE_LIMIT:
            deltas = encoding.level_deltas()
            probs = probabilities(model, portfolio, deltas.T).T
            vols = portfolio.base[:, None] * (1.0 + deltas) * probs
            self.tables = (probs, vols)
            self.rows = np.arange(portfolio.n)

    def __call__(self, genes):
        if self.tables is None:
            delta = self.encoding.decode(genes)
            return batch_evaluate(self.spec, self.portfolio, self.model, delta)
        levels = self.encoding.levels_of(genes)
        probs, vols = self.tables
        count = count_of(probs[self.rows, levels])
        volume = np.sum(vols[self.rows, levels], axis=-1)
        lo, hi = self.spec.bounds
        if self.spec.objective == VOLUME:
            share = count / self.portfolio.n
            return volume, share - hi, lo - share
        return count, volume - hi, lo - volume

    @staticmethod
    def penalized(obj, h1, h2, r):
        return -obj + r * (penalty_function(h1) + penalty_function(h2))


def run_ga(spec: ProblemSpec, portfolio: Portfolio, model: ConversionModel,
           config: GaConfig = GaConfig(), penalty: PenaltyConfig = PenaltyConfig(),
           initial_population=None) -> SolverResult:
    """Evolve premium changes that maximise ``spec``'s objective.

    ``initial_population`` optionally supplies premium-change vectors (rows)
    that replace the first random members.

    The returned point is the best-ever member by penalized value. If that
    member is infeasible but a feasible member was met at some point, the best
    feasible one is returned instead; ``feasible`` is False only if no
    feasible member was ever seen.
    """
    rng = np.random.Generator(np.random.PCG64(config.seed))
    encoding = Encoding(portfolio, spec.delta_domain, config.bits_per_gene)
    score = _Scorer(spec, portfolio, model, encoding)
    n_values = encoding.values.size if encoding.bits is None else None
    r = penalty.initial_r(spec, portfolio, model)

    pop = encoding.random(rng, config.population_size)
    if initial_population is not None:
        seeds = encoding.encode(np.atleast_2d(initial_population))
        pop[: len(seeds)] = seeds[: len(pop)]

    best = None          # (genes, obj, h1, h2)
    best_feasible = None  # (genes, obj, h1, h2)
    trace, r_history = [], []

    for gen in range(config.max_generations):
        obj, h1, h2 = score(pop)
        vals = score.penalized(obj, h1, h2, r)
        feas = is_feasible(spec, h1, h2)

        i = int(np.argmin(vals))
        if best is None or vals[i] < score.penalized(best[1], best[2], best[3], r):
            best = (pop[i].copy(), obj[i], h1[i], h2[i])
        if feas.any():
            fi = int(np.flatnonzero(feas)[np.argmax(obj[feas])])
            if best_feasible is None or obj[fi] > best_feasible[1]:
                best_feasible = (pop[fi].copy(), obj[fi], h1[fi], h2[fi])

        best_val = score.penalized(best[1], best[2], best[3], r)
        trace.append({"generation": gen, "best": float(best_val), "mean": float(vals.mean()),
                      "feasible_count": int(feas.sum())})
        r_history.append(r)
        if gen == config.max_generations - 1:
            break

        if not is_feasible(spec, best[2], best[3]) and penalty.growth > 1 and r < penalty.cap:
            r = min(r * penalty.growth, penalty.cap)
            vals = score.penalized(obj, h1, h2, r)

        pop = select_parents(pop, vals, rng)
        pop = _crossover_population(pop, config.crossover_prob, rng)
        pop = mutate(pop, config.mutation_prob, rng, n_values)
        pop[0] = best[0]

    chosen = best
    if not is_feasible(spec, best[2], best[3]) and best_feasible is not None:
        chosen = best_feasible
    genes, obj, h1, h2 = chosen
    return SolverResult(
        solver="ga",
        delta=encoding.decode(genes),
        objective=float(obj),
        residuals=(float(h1), float(h2)),
        feasible=bool(is_feasible(spec, h1, h2)),
        status="completed",
        iterations=len(trace),
        best_fitness=float(score.penalized(obj, h1, h2, r)),
        trace=trace,
        info={"penalty_r": r_history, "seed": config.seed, "rng": "PCG64"},
    )
