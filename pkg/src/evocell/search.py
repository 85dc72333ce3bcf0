"""Elitist evolutionary search driven by a forest surrogate.

One cycle: refit the predictor on the full history, pick a tournament
parent, sample a budgeted batch of one-step children, predict them all,
pick percentile representatives, obtain ground truth for the
representatives only, compare predicted vs true ranking (Spearman), grow
the mutation budget when the predictor improved, then add the best
representative to the population and drop the worst member.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import stats
from .evaluator import (
    EvalKind,
    OracleEvaluator,
    SyntheticLandscape,
    load_benchmark,
)
from .genotype import Genotype, SearchSpace, make_space, random_genotype
from .mutation import MutationRecord, ParentExhaustedError, sample_children
from .predictor import ForestRegressor, GenotypeFeaturizer

logger = logging.getLogger(__name__)

__all__ = [
    "SearchConfigError",
    "SearchConfig",
    "PopulationMember",
    "CycleReport",
    "HistoryLog",
    "SearchReport",
    "EvolutionSearch",
    "build_evaluator",
    "run_search",
]


class SearchConfigError(ValueError):
    """A search configuration value is out of contract."""


@dataclass
class SearchConfig:
    """Full description of one search run; everything needed to reproduce it."""

    # [search]
    space: str = "nb201"
    population_size: int = 20
    cycles: int = 20
    sample_size: int = 10
    initial_mutation_times: int | None = None  # None: equal to sample_size
    mutation_factor: float = 1.2
    representative_quantiles: tuple[float, ...] = (1.0, 0.75, 0.5, 0.25, 0.0)
    strategy: str = "percentile"  # percentile | topk:K | random:N
    allow_none_mutation: bool = False
    seed: int = 0
    # [predictor]
    n_trees: int = 100
    min_samples_leaf: int = 1
    max_features: int | None = None
    bootstrap: bool = True
    encoding: str = "onehot"
    # [evaluator]
    evaluator: str = "oracle"  # oracle | synthetic | trainer
    benchmark: str | None = None
    dataset: str = "cifar10"
    landscape_seed: int = 0
    landscape_interaction: float = 0.3
    landscape_noise: float = 0.0
    trainer_width: int = 16
    trainer_dataset_seed: int = 0
    scratch_epochs: int = 40
    inherit_epochs: int | None = None  # None: half of scratch_epochs

    def validate(self) -> None:
        if self.space not in ("nb201", "darts"):
            raise SearchConfigError(f"unknown space {self.space!r}")
        if self.population_size < 1:
            raise SearchConfigError("population_size must be >= 1")
        if self.cycles < 0:
            raise SearchConfigError("cycles must be >= 0")
        if not 1 <= self.sample_size <= self.population_size:
            raise SearchConfigError(
                f"sample_size must satisfy 1 <= S <= population_size, got "
                f"{self.sample_size} vs {self.population_size}"
            )
        if self.cycles > 0 and self.population_size < 2:
            raise SearchConfigError("population_size must be >= 2 to fit the predictor")
        if self.initial_mutation_times is not None and self.initial_mutation_times < 1:
            raise SearchConfigError("initial_mutation_times must be >= 1")
        if self.mutation_factor < 1.0:
            raise SearchConfigError("mutation_factor must be >= 1.0")
        qs = tuple(self.representative_quantiles)
        if not qs or any(not 0.0 <= q <= 1.0 for q in qs):
            raise SearchConfigError("representative_quantiles must lie in [0, 1]")
        if list(qs) != sorted(qs, reverse=True):
            raise SearchConfigError("representative_quantiles must be sorted descending")
        parse_strategy(self.strategy, qs)  # raises on malformed strategy
        if self.evaluator not in ("oracle", "synthetic", "trainer"):
            raise SearchConfigError(f"unknown evaluator {self.evaluator!r}")
        if self.encoding not in ("onehot", "ordinal"):
            raise SearchConfigError(f"unknown encoding {self.encoding!r}")
        if self.n_trees < 1:
            raise SearchConfigError("n_trees must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["representative_quantiles"] = list(self.representative_quantiles)
        return d


@dataclass
class PopulationMember:
    genotype: Genotype
    true_fitness: float
    test_fitness: float | None
    predicted_fitness: float | None
    birth_cycle: int
    eval_kind: EvalKind
    parent: str | None = None
    cost: float = 0.0

    @property
    def key(self) -> str:
        return self.genotype.key

    def to_json_dict(self) -> dict:
        return {
            "kind": "member",
            "genotype": self.key,
            "true_fitness": self.true_fitness,
            "test_fitness": self.test_fitness,
            "predicted_fitness": self.predicted_fitness,
            "birth_cycle": self.birth_cycle,
            "eval_kind": self.eval_kind.value,
            "parent": self.parent,
            "cost": self.cost,
        }


@dataclass
class CycleReport:
    cycle: int
    parent: str | None
    children: int
    spearman: float | None
    mutation_times: int
    best_child: float | None
    pop_best: float
    pop_mean: float

    def to_json_dict(self) -> dict:
        return {"kind": "cycle", **asdict(self)}


class HistoryLog:
    """Append-only, duplicate-free record of every true evaluation."""

    def __init__(self):
        self.members: list[PopulationMember] = []
        self.cycles: list[CycleReport] = []
        self._events: list[dict] = []
        self._keys: set[str] = set()

    def __contains__(self, key: str) -> bool:
        return key in self._keys

    @property
    def keys(self) -> set[str]:
        return self._keys

    def add_member(self, member: PopulationMember) -> None:
        if member.key in self._keys:
            raise ValueError(f"genotype {member.key} already in history")
        self._keys.add(member.key)
        self.members.append(member)
        self._events.append(member.to_json_dict())

    def add_cycle(self, report: CycleReport) -> None:
        self.cycles.append(report)
        self._events.append(report.to_json_dict())

    def write_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for event in self._events:
                fh.write(json.dumps(event, separators=(",", ":")) + "\n")


@dataclass
class SearchReport:
    best: PopulationMember
    history: HistoryLog
    cycles: list[CycleReport]
    config: SearchConfig

    @property
    def true_evaluations(self) -> int:
        return len(self.history.members)

    def summary_rows(self) -> list[tuple]:
        return [
            (c.cycle, c.spearman, c.mutation_times, c.pop_best, c.pop_mean)
            for c in self.cycles
        ]

    def write_summary_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write("cycle,spearman,mutation_times,pop_best,pop_mean\n")
            for cycle, rho, mt, best, mean in self.summary_rows():
                rho_s = "" if rho is None else f"{rho:.6f}"
                fh.write(f"{cycle},{rho_s},{mt},{best:.6f},{mean:.6f}\n")


class PercentileSelector:
    """Representatives at fixed quantiles of predicted fitness (max..min)."""

    def __init__(self, quantiles: tuple[float, ...]):
        self.quantiles = quantiles

    def select(self, predictions: np.ndarray, rng: np.random.Generator) -> list[int]:
        order = np.argsort(predictions, kind="stable")
        picked: list[int] = []
        for q in self.quantiles:
            idx = int(order[stats.quantile_index(len(predictions), q)])
            if idx not in picked:
                picked.append(idx)
        return picked


class TopKSelector:
    def __init__(self, k: int):
        if k < 1:
            raise SearchConfigError("topk needs k >= 1")
        self.k = k

    def select(self, predictions: np.ndarray, rng: np.random.Generator) -> list[int]:
        order = np.argsort(predictions, kind="stable")[::-1]
        return [int(i) for i in order[: self.k]]


class RandomSelector:
    def __init__(self, n: int):
        if n < 1:
            raise SearchConfigError("random selection needs n >= 1")
        self.n = n

    def select(self, predictions: np.ndarray, rng: np.random.Generator) -> list[int]:
        take = min(self.n, len(predictions))
        return [int(i) for i in rng.choice(len(predictions), size=take, replace=False)]


def parse_strategy(text: str, quantiles: tuple[float, ...]):
    """Build a representative selector from its config string."""
    if text == "percentile":
        return PercentileSelector(tuple(quantiles))
    head, sep, tail = text.partition(":")
    if sep and head in ("topk", "random"):
        try:
            n = int(tail)
        except ValueError:
            raise SearchConfigError(f"bad strategy parameter in {text!r}") from None
        return TopKSelector(n) if head == "topk" else RandomSelector(n)
    raise SearchConfigError(
        f"unknown strategy {text!r} (expected percentile, topk:K or random:N)"
    )


def select_parent(
    population: list[PopulationMember], sample_size: int, rng: np.random.Generator
) -> PopulationMember:
    """Tournament: uniform sample of ``sample_size`` members, best true fitness wins.

    Ties break by earliest birth cycle, then canonical string order.
    """
    if sample_size > len(population):
        raise ValueError("sample_size exceeds population size")
    picks = rng.choice(len(population), size=sample_size, replace=False)
    candidates = [population[int(i)] for i in picks]
    return min(candidates, key=lambda m: (-m.true_fitness, m.birth_cycle, m.key))


class EvolutionSearch:
    """One search run; owns the rng, population, history and budget state."""

    def __init__(self, config: SearchConfig, evaluator=None):
        config.validate()
        self.config = config
        self.space: SearchSpace = make_space(config.space, config.allow_none_mutation)
        self.evaluator = evaluator if evaluator is not None else build_evaluator(config, self.space)
        self.featurizer = GenotypeFeaturizer(self.space, encoding=config.encoding)
        self.selector = parse_strategy(config.strategy, tuple(config.representative_quantiles))
        self.rng = np.random.default_rng(config.seed)
        self.population: list[PopulationMember] = []
        self.history = HistoryLog()
        self.mutation_times = config.initial_mutation_times or config.sample_size
        self.prev_spearman: float | None = None
        self.cycle_index = 0

    # -- phases -----------------------------------------------------------

    def initialize(self) -> None:
        """Random distinct genotypes, each truly evaluated (birth cycle 0)."""
        cfg = self.config
        attempts = 0
        while len(self.population) < cfg.population_size:
            g = random_genotype(self.space, self.rng)
            if g.key in self.history:
                attempts += 1
                if attempts > 1000 * cfg.population_size:
                    raise RuntimeError("space too small to draw a distinct population")
                continue
            result = self.evaluator.evaluate(g, self.rng)
            member = PopulationMember(
                genotype=g,
                true_fitness=result.val_acc,
                test_fitness=result.test_acc,
                predicted_fitness=None,
                birth_cycle=0,
                eval_kind=self.evaluator.init_kind,
                cost=result.cost,
            )
            self.population.append(member)
            self.history.add_member(member)

    def _fit_predictor(self) -> ForestRegressor:
        cfg = self.config
        X = self.featurizer.transform([m.genotype for m in self.history.members])
        y = np.array([m.true_fitness for m in self.history.members])
        forest = ForestRegressor(
            n_trees=cfg.n_trees,
            min_samples_leaf=cfg.min_samples_leaf,
            max_features=cfg.max_features,
            bootstrap=cfg.bootstrap,
            random_state=int(self.rng.integers(2**31)),
        )
        return forest.fit(X, y)

    def _sample_from_some_parent(self):
        """Parent plus its child batch; retries other parents when one is exhausted."""
        tried: set[str] = set()
        for _ in range(self.config.sample_size):
            pool = [m for m in self.population if m.key not in tried]
            if not pool:
                break
            parent = select_parent(pool, min(self.config.sample_size, len(pool)), self.rng)
            tried.add(parent.key)
            try:
                children = sample_children(
                    parent.genotype, self.mutation_times, self.rng, self.history.keys
                )
                return parent, children
            except ParentExhaustedError:
                continue
        return None, []

    def run_cycle(self) -> CycleReport:
        self.cycle_index += 1
        cycle = self.cycle_index
        cfg = self.config

        forest = self._fit_predictor()
        parent, children = self._sample_from_some_parent()
        if parent is None:
            logger.warning("cycle %d: every candidate parent is exhausted; skipping", cycle)
            report = CycleReport(
                cycle=cycle,
                parent=None,
                children=0,
                spearman=None,
                mutation_times=self.mutation_times,
                best_child=None,
                pop_best=max(m.true_fitness for m in self.population),
                pop_mean=float(np.mean([m.true_fitness for m in self.population])),
            )
            self.prev_spearman = None
            self.history.add_cycle(report)
            return report

        genotypes = [child for child, _ in children]
        predictions = forest.predict(self.featurizer.transform(genotypes))
        picked = self.selector.select(predictions, self.rng)

        representatives: list[PopulationMember] = []
        for idx in picked:
            child, record = children[idx]
            result = self.evaluator.evaluate_child(child, record, parent.genotype, self.rng)
            member = PopulationMember(
                genotype=child,
                true_fitness=result.val_acc,
                test_fitness=result.test_acc,
                predicted_fitness=float(predictions[idx]),
                birth_cycle=cycle,
                eval_kind=self.evaluator.child_kind,
                parent=parent.key,
                cost=result.cost,
            )
            representatives.append(member)
            self.history.add_member(member)

        if len(representatives) >= 2:
            rho = stats.spearman(
                [m.predicted_fitness for m in representatives],
                [m.true_fitness for m in representatives],
            )
        else:
            rho = None
        if rho is not None and self.prev_spearman is not None and rho > self.prev_spearman:
            self.mutation_times = min(
                math.ceil(self.mutation_times * cfg.mutation_factor),
                self.space.max_neighborhood_size(),
            )
        self.prev_spearman = rho

        best_child = min(representatives, key=lambda m: (-m.true_fitness, m.key))
        self.population.append(best_child)
        worst = min(self.population, key=lambda m: (m.true_fitness, m.birth_cycle, m.key))
        self.population.remove(worst)

        report = CycleReport(
            cycle=cycle,
            parent=parent.key,
            children=len(children),
            spearman=rho,
            mutation_times=self.mutation_times,
            best_child=best_child.true_fitness,
            pop_best=max(m.true_fitness for m in self.population),
            pop_mean=float(np.mean([m.true_fitness for m in self.population])),
        )
        self.history.add_cycle(report)
        return report

    def run(self) -> SearchReport:
        self.initialize()
        for _ in range(self.config.cycles):
            self.run_cycle()
        best = self.history.members[0]
        for member in self.history.members[1:]:
            if member.true_fitness > best.true_fitness:
                best = member
        return SearchReport(
            best=best, history=self.history, cycles=list(self.history.cycles), config=self.config
        )


def build_evaluator(config: SearchConfig, space: SearchSpace):
    """Construct the ground-truth fitness provider a config asks for."""
    if config.evaluator == "oracle":
        if not config.benchmark:
            raise SearchConfigError("oracle evaluator needs a benchmark path")
        table = load_benchmark(config.benchmark)
        return OracleEvaluator(table, config.dataset)
    if config.evaluator == "synthetic":
        return SyntheticLandscape(
            space,
            seed=config.landscape_seed,
            interaction_strength=config.landscape_interaction,
            noise_sigma=config.landscape_noise,
        )
    from .cellnet import BlobsDataset, TrainConfig, TrainerEvaluator

    scratch = TrainConfig.scratch(epochs=config.scratch_epochs)
    inherit_epochs = config.inherit_epochs or max(1, config.scratch_epochs // 2)
    data = BlobsDataset.make(width=config.trainer_width, seed=config.trainer_dataset_seed)
    return TrainerEvaluator(
        data,
        width=config.trainer_width,
        scratch=scratch,
        inherit=TrainConfig.inherit(epochs=inherit_epochs),
    )


def run_search(config: SearchConfig, evaluator=None) -> SearchReport:
    """Run one full search described by ``config``; reproducible from its seed."""
    return EvolutionSearch(config, evaluator=evaluator).run()
