"""Wrapper feature selection: a generational GA over column bitmasks.

Fitness is the pooled k-fold accuracy of an SVM trained on the selected
columns, evaluated on one fold plan frozen for the whole run.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np
import yaml

from .dataset import ColumnMeta, EncodedDataset, FoldPlan, stratified_kfold
from .evaluation import NO_NORMALIZATION, EvalReport, evaluate_folds
from .kernels import ANOVA, ColumnTerms, KernelSpec
from .svm import SvmConfig

HISTORY_FORMAT = "gsvma-ga-history"
HISTORY_VERSION = 1


class GeneticError(ValueError):
    pass


class EmptyPopulation(GeneticError):
    pass


class LengthMismatch(GeneticError):
    pass


def _default_svm() -> SvmConfig:
    return SvmConfig(kernel=KernelSpec(ANOVA))


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 10
    crossover_p: float = 0.75
    mutation_p: float = 1.0
    selection: str = "roulette"
    crossover: str = "shuffle"
    elitism: int = 1
    seed: int = 0
    fold_seed: int = 1
    inner_cv_folds: int = 10
    svm: SvmConfig = field(default_factory=_default_svm)
    inject_full_mask: bool = True
    memoize: bool = True
    gene_level: str = "column"

    def __post_init__(self):
        if self.population_size < 2:
            raise GeneticError("population_size must be >= 2")
        if self.generations < 1:
            raise GeneticError("generations must be >= 1")
        for name in ("crossover_p", "mutation_p"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise GeneticError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism < self.population_size:
            raise GeneticError("elitism must be in [0, population_size)")
        if self.selection != "roulette":
            raise GeneticError(f"unsupported selection scheme {self.selection!r}")
        if self.crossover != "shuffle":
            raise GeneticError(f"unsupported crossover {self.crossover!r}")
        if self.gene_level not in ("column", "feature"):
            raise GeneticError("gene_level must be 'column' or 'feature'")
        if self.inner_cv_folds < 2:
            raise GeneticError("inner_cv_folds must be >= 2")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "svm"}
        d["svm"] = self.svm.to_dict()
        return d


@dataclass
class Chromosome:
    mask: np.ndarray
    fitness: float | None = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def key(self) -> bytes:
        return np.packbits(self.mask).tobytes() + self.mask.size.to_bytes(4, "little")

    def bits(self) -> str:
        return "".join("1" if b else "0" for b in self.mask)


def _repair(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if not mask.any():
        mask[rng.integers(mask.size)] = True
    return mask


def init_population(L: int, config: GaConfig, rng: np.random.Generator) -> list[Chromosome]:
    if L < 1:
        raise GeneticError("chromosome length must be >= 1")
    pop = []
    for _ in range(config.population_size):
        pop.append(Chromosome(_repair(rng.random(L) < 0.5, rng)))
    if config.inject_full_mask:
        pop[0] = Chromosome(np.ones(L, dtype=bool))
    return pop


def roulette_select(fitnesses, rng: np.random.Generator) -> int:
    """Index ``i`` drawn with probability ``f_i / sum(f)``; uniform if the sum is 0."""
    f = np.asarray(fitnesses, dtype=float)
    if f.size == 0:
        raise EmptyPopulation("cannot select from an empty population")
    if np.any(f < 0):
        raise GeneticError("roulette selection needs nonnegative fitness")
    total = f.sum()
    if total <= 0:
        return int(rng.integers(f.size))
    u = rng.random() * total
    return int(min(np.searchsorted(np.cumsum(f), u, side="right"), f.size - 1))


def two_point_swap(a: np.ndarray, b: np.ndarray, p1: int, p2: int) -> tuple[np.ndarray, np.ndarray]:
    c1, c2 = a.copy(), b.copy()
    c1[p1:p2], c2[p1:p2] = b[p1:p2], a[p1:p2]
    return c1, c2


def crossover(parent_a: Chromosome, parent_b: Chromosome, config: GaConfig,
              rng: np.random.Generator) -> tuple[Chromosome, Chromosome]:
    """Two-point ("shuffle") crossover applied with probability ``crossover_p``."""
    a, b = parent_a.mask, parent_b.mask
    if a.size != b.size:
        raise LengthMismatch(f"parents of length {a.size} and {b.size}")
    if rng.random() >= config.crossover_p:
        return Chromosome(a.copy(), parent_a.fitness), Chromosome(b.copy(), parent_b.fitness)
    p1, p2 = sorted(int(p) for p in rng.choice(a.size + 1, 2, replace=False))
    c1, c2 = two_point_swap(a, b, p1, p2)
    return Chromosome(_repair(c1, rng)), Chromosome(_repair(c2, rng))


def flip_bit(mask: np.ndarray, index: int) -> np.ndarray:
    out = mask.copy()
    out[index] = not out[index]
    return out


def mutate(chromosome: Chromosome, config: GaConfig, rng: np.random.Generator) -> Chromosome:
    """Flip one uniformly chosen bit with probability ``mutation_p``.

    A flip that would empty the mask is redirected to a uniformly chosen
    other bit.
    """
    mask = chromosome.mask
    if not mask.any():
        raise GeneticError("cannot mutate an empty mask")
    if rng.random() >= config.mutation_p:
        return Chromosome(mask.copy(), chromosome.fitness)
    L = mask.size
    idx = int(rng.integers(L))
    if mask[idx] and mask.sum() == 1:
        if L == 1:
            return Chromosome(mask.copy(), chromosome.fitness)
        other = int(rng.integers(L - 1))
        idx = other if other < idx else other + 1
    return Chromosome(flip_bit(mask, idx))


def gene_groups(columns: Sequence[ColumnMeta], level: str = "column") -> list[np.ndarray]:
    """Column indices controlled by each gene.

    ``column``: one gene per encoded column. ``feature``: one gene per source
    feature, toggling all of its one-hot columns together.
    """
    if level == "column":
        return [np.array([i]) for i in range(len(columns))]
    order: dict[str, list[int]] = {}
    for i, c in enumerate(columns):
        order.setdefault(c.source, []).append(i)
    return [np.array(ix) for ix in order.values()]


def expand_genes(genes: np.ndarray, groups: Sequence[np.ndarray], n_columns: int) -> np.ndarray:
    mask = np.zeros(n_columns, dtype=bool)
    for on, cols in zip(genes, groups):
        if on:
            mask[cols] = True
    return mask


class FitnessEvaluator:
    """Memoized k-fold accuracy of column subsets on a fixed fold plan.

    Per-column kernel terms are computed once, so each subset costs only a
    sum of precomputed matrices plus the SVM solves. Lookups and inserts are
    lock-protected; reports are pure functions of the mask.
    """

    def __init__(self, dataset: EncodedDataset, folds: FoldPlan, svm_config: SvmConfig,
                 memoize: bool = True):
        self.dataset = dataset
        self.folds = folds
        self.svm_config = svm_config
        self.memoize = memoize
        self.terms = ColumnTerms(svm_config.kernel, dataset.matrix)
        self._cache: dict[bytes, EvalReport] = {}
        self._lock = threading.Lock()
        self.evaluations = 0
        self.hits = 0

    def _key(self, mask: np.ndarray) -> bytes:
        return Chromosome(mask).key

    def _compute(self, mask: np.ndarray) -> EvalReport:
        K = self.terms.gram(mask)
        echo = {"columns": [c.name for c, keep in zip(self.dataset.columns, mask) if keep]}
        return evaluate_folds(lambda f: K, self.dataset.labels, self.folds, self.svm_config, echo)

    def report(self, mask) -> EvalReport:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise GeneticError("fitness of an empty mask")
        key = self._key(mask)
        if self.memoize:
            with self._lock:
                if key in self._cache:
                    self.hits += 1
                    return self._cache[key]
        rep = self._compute(mask)
        with self._lock:
            self.evaluations += 1
            if self.memoize:
                rep = self._cache.setdefault(key, rep)
        return rep

    def __call__(self, mask) -> float:
        return self.report(mask).accuracy

    def evaluate_many(self, masks: Sequence[np.ndarray], threads: int = 1) -> list[EvalReport]:
        """Reports for ``masks`` in order; distinct uncached masks run in parallel.

        Hit and evaluation counts do not depend on ``threads``.
        """
        if not self.memoize:
            if threads > 1:
                with ThreadPoolExecutor(threads) as pool:
                    return list(pool.map(self.report, masks))
            return [self.report(m) for m in masks]
        keys = [self._key(np.asarray(m, dtype=bool)) for m in masks]
        todo: dict[bytes, np.ndarray] = {}
        with self._lock:
            for k, m in zip(keys, masks):
                if k not in self._cache and k not in todo:
                    todo[k] = np.asarray(m, dtype=bool)
        pending = list(todo.values())
        if threads > 1 and len(pending) > 1:
            with ThreadPoolExecutor(threads) as pool:
                fresh = list(pool.map(self._compute, pending))
        else:
            fresh = [self._compute(m) for m in pending]
        with self._lock:
            for k, rep in zip(todo, fresh):
                self._cache[k] = rep
            self.evaluations += len(fresh)
            self.hits += len(keys) - len(fresh)
            return [self._cache[k] for k in keys]


def fitness_eval(mask, dataset: EncodedDataset, folds: FoldPlan, svm_config: SvmConfig,
                 evaluator: FitnessEvaluator | None = None) -> float:
    """Pooled k-fold accuracy of an SVM on the masked columns of ``dataset``.

    The data is used as given (no per-fold rescaling). Pass a shared
    ``evaluator`` to reuse its kernel terms and memo table.
    """
    if evaluator is None:
        evaluator = FitnessEvaluator(dataset, folds, svm_config)
    return evaluator(mask)


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_so_far: float
    best_mask: list[str]
    best_metrics: dict

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "best_so_far": self.best_so_far,
            "best_mask": self.best_mask,
            "best_metrics": self.best_metrics,
        }


@dataclass
class GaHistory:
    records: list[GenerationRecord] = field(default_factory=list)
    best: Chromosome | None = None
    best_columns: list[str] = field(default_factory=list)
    evaluations: int = 0
    cache_hits: int = 0
    config: dict = field(default_factory=dict)

    @property
    def best_fitness_curve(self) -> list[float]:
        return [r.best_fitness for r in self.records]

    def to_dict(self) -> dict:
        return {
            "format": HISTORY_FORMAT,
            "version": HISTORY_VERSION,
            "config": self.config,
            "generations": [r.to_dict() for r in self.records],
            "best": None if self.best is None else {
                "fitness": self.best.fitness,
                "bits": self.best.bits(),
                "columns": self.best_columns,
            },
            "evaluations": self.evaluations,
            "cache_hits": self.cache_hits,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _summary(report: EvalReport) -> dict:
    d = {name: getattr(report.micro, name) for name in
         ("accuracy", "ppv", "recall", "specificity", "f_measure")}
    d["auc"] = report.auc
    return d


def run_ga(dataset: EncodedDataset, config: GaConfig = GaConfig(), threads: int = 1,
           folds: FoldPlan | None = None, evaluator: FitnessEvaluator | None = None,
           on_generation: Callable[[GaHistory], None] | None = None
           ) -> tuple[Chromosome, GaHistory]:
    """Evolve feature masks; return the best chromosome ever seen and the history.

    Generation 1 is the initial population. Each later generation keeps the
    ``elitism`` fittest members and fills the rest with roulette-selected,
    crossed-over and mutated children. Every stochastic draw comes from a
    stream keyed by ``(seed, generation, pair)``.
    """
    if folds is None:
        folds = stratified_kfold(dataset.labels, config.inner_cv_folds, config.fold_seed)
    if evaluator is None:
        evaluator = FitnessEvaluator(dataset, folds, config.svm, config.memoize)
    groups = gene_groups(dataset.columns, config.gene_level)
    n_cols = dataset.matrix.shape[1]
    L = len(groups)
    names = dataset.column_names

    def columns_of(ch: Chromosome) -> np.ndarray:
        return expand_genes(ch.mask, groups, n_cols)

    history = GaHistory(config=config.to_dict())
    best: Chromosome | None = None
    pop = init_population(L, config, _stream(config.seed, 0))
    for gen in range(1, config.generations + 1):
        if gen > 1:
            fits = np.array([c.fitness for c in pop])
            order = np.argsort(-fits, kind="stable")
            nxt = [Chromosome(pop[i].mask.copy(), pop[i].fitness) for i in order[:config.elitism]]
            pair = 0
            while len(nxt) < config.population_size:
                rng = _stream(config.seed, gen, pair)
                a = pop[roulette_select(fits, rng)]
                b = pop[roulette_select(fits, rng)]
                for child in crossover(a, b, config, rng):
                    nxt.append(mutate(child, config, rng))
                pair += 1
            pop = nxt[:config.population_size]

        reports = evaluator.evaluate_many([columns_of(c) for c in pop], threads)
        for c, rep in zip(pop, reports):
            c.fitness = rep.accuracy
        fits = np.array([c.fitness for c in pop])
        top = int(np.argmax(fits))
        if best is None or fits[top] > best.fitness:
            best = Chromosome(pop[top].mask.copy(), float(fits[top]))
        history.records.append(GenerationRecord(
            generation=gen,
            best_fitness=float(fits[top]),
            mean_fitness=float(fits.mean()),
            best_so_far=float(best.fitness),
            best_mask=[n for n, keep in zip(names, columns_of(pop[top])) if keep],
            best_metrics=_summary(reports[top]),
        ))
        history.evaluations = evaluator.evaluations
        history.cache_hits = evaluator.hits
        if on_generation is not None:
            on_generation(history)

    history.best = best
    history.best_columns = [n for n, keep in zip(names, columns_of(best)) if keep]
    return best, history


def load_presets() -> dict[str, list[str]]:
    text = resources.files("gsvma.data").joinpath("presets.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def preset_mask(name: str, columns: Sequence[ColumnMeta]) -> np.ndarray:
    presets = load_presets()
    if name not in presets:
        raise GeneticError(f"unknown preset mask {name!r}; known: {', '.join(sorted(presets))}")
    return mask_from_names(presets[name], columns)


def mask_from_names(selected: Sequence[str], columns: Sequence[ColumnMeta]) -> np.ndarray:
    index = {c.name: i for i, c in enumerate(columns)}
    missing = [s for s in selected if s not in index]
    if missing:
        raise GeneticError(f"unknown column(s) in mask: {', '.join(missing)}")
    mask = np.zeros(len(columns), dtype=bool)
    mask[[index[s] for s in selected]] = True
    return mask
