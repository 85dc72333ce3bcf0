"""Ground-truth fitness providers behind one evaluation contract.

Every evaluator exposes ``evaluate`` (full evaluation, used for the
initial population) and ``evaluate_child`` (evaluation of a one-step
child, which the toy trainer implements with weight inheritance; table
and landscape evaluators just look the child up). All results are
``EvalResult`` values with accuracies as fractions in [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .genotype import Genotype, SearchSpace, canonical_string
from .mutation import MutationRecord
from .predictor import GenotypeFeaturizer

__all__ = [
    "EvalKind",
    "EvalResult",
    "BenchmarkFormatError",
    "MissingGenotypeError",
    "OracleTable",
    "load_benchmark",
    "OracleEvaluator",
    "SyntheticLandscape",
]

BENCHMARK_KEYS = ("genotype", "dataset", "val_acc", "test_acc")


class BenchmarkFormatError(ValueError):
    """A benchmark file violates the JSONL schema."""


class MissingGenotypeError(KeyError):
    """A genotype was looked up that the benchmark table does not contain."""


class EvalKind(str, Enum):
    INIT_TRAIN = "init_train"
    INHERIT_TRAIN = "inherit_train"
    ORACLE_QUERY = "oracle_query"


@dataclass(frozen=True)
class EvalResult:
    val_acc: float
    test_acc: float | None = None
    cost: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.val_acc <= 1.0:
            raise ValueError(f"val_acc {self.val_acc} outside [0, 1]")
        if self.test_acc is not None and not 0.0 <= self.test_acc <= 1.0:
            raise ValueError(f"test_acc {self.test_acc} outside [0, 1]")


class OracleTable:
    """Benchmark accuracies keyed by (canonical genotype string, dataset)."""

    def __init__(self):
        self._rows: dict[tuple[str, str], tuple[float, float]] = {}
        self._datasets: set[str] = set()

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def datasets(self) -> tuple[str, ...]:
        return tuple(sorted(self._datasets))

    def add(self, genotype: str, dataset: str, val_acc: float, test_acc: float) -> None:
        key = (genotype, dataset)
        if key in self._rows:
            raise BenchmarkFormatError(
                f"duplicate entry for genotype {genotype!r} on dataset {dataset!r}"
            )
        self._rows[key] = (val_acc, test_acc)
        self._datasets.add(dataset)

    def genotypes(self, dataset: str) -> list[str]:
        return [g for g, d in self._rows if d == dataset]

    def lookup(self, genotype: str, dataset: str) -> tuple[float, float]:
        """Stored (val, test) accuracy fractions for a genotype."""
        try:
            return self._rows[(genotype, dataset)]
        except KeyError:
            raise MissingGenotypeError(
                f"genotype {genotype!r} not in table for dataset {dataset!r}"
            ) from None


def load_benchmark(path: str | Path) -> OracleTable:
    """Parse a benchmark JSONL dump into an :class:`OracleTable`.

    Each line is one object with exactly the keys genotype, dataset,
    val_acc, test_acc; accuracies are percentages in [0, 100] and are
    stored as fractions. Errors report the offending line number.
    """
    path = Path(path)
    table = OracleTable()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BenchmarkFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict) or sorted(obj) != sorted(BENCHMARK_KEYS):
                raise BenchmarkFormatError(
                    f"line {lineno}: expected exactly the keys {', '.join(BENCHMARK_KEYS)}"
                )
            genotype, dataset = obj["genotype"], obj["dataset"]
            if not isinstance(genotype, str) or not genotype:
                raise BenchmarkFormatError(f"line {lineno}: genotype must be a non-empty string")
            if not isinstance(dataset, str) or not dataset:
                raise BenchmarkFormatError(f"line {lineno}: dataset must be a non-empty string")
            accs = []
            for field_name in ("val_acc", "test_acc"):
                v = obj[field_name]
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise BenchmarkFormatError(f"line {lineno}: {field_name} must be a number")
                if not 0.0 <= v <= 100.0:
                    raise BenchmarkFormatError(
                        f"accuracy out of range at line {lineno}: {field_name}={v}"
                    )
                accs.append(float(v) / 100.0)
            try:
                table.add(genotype, dataset, accs[0], accs[1])
            except BenchmarkFormatError as exc:
                raise BenchmarkFormatError(f"line {lineno}: {exc}") from None
    return table


class OracleEvaluator:
    """Pure lookup evaluation against a benchmark table (cost 0)."""

    init_kind = EvalKind.ORACLE_QUERY
    child_kind = EvalKind.ORACLE_QUERY

    def __init__(self, table: OracleTable, dataset: str):
        if dataset not in table.datasets:
            raise MissingGenotypeError(
                f"dataset {dataset!r} not in table (has: {', '.join(table.datasets) or 'none'})"
            )
        self.table = table
        self.dataset = dataset

    def evaluate(self, genotype: Genotype, rng=None) -> EvalResult:
        val, test = self.table.lookup(canonical_string(genotype), self.dataset)
        return EvalResult(val_acc=val, test_acc=test, cost=0.0)

    def evaluate_child(
        self, child: Genotype, record: MutationRecord, parent: Genotype, rng=None
    ) -> EvalResult:
        return self.evaluate(child, rng)


class SyntheticLandscape:
    """Deterministic fitness surface over a search space, for data-free runs.

    The raw score is a base term plus per-edge-slot op scores plus pairwise
    interaction bonuses between hot feature bits, all drawn once from the
    landscape seed, then squashed through a logistic into [0, 1]. Optional
    Gaussian observation noise uses the per-call rng.
    """

    init_kind = EvalKind.ORACLE_QUERY
    child_kind = EvalKind.ORACLE_QUERY

    def __init__(
        self,
        space: SearchSpace,
        seed: int = 0,
        interaction_strength: float = 0.3,
        noise_sigma: float = 0.0,
    ):
        self.space = space
        self.seed = seed
        self.interaction_strength = interaction_strength
        self.noise_sigma = noise_sigma
        self._feat = GenotypeFeaturizer(space)
        p = self._feat.feature_length
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(0xEC0CE11, seed)))
        self._base = float(rng.normal(0.8, 0.2))
        self._edge_scores = rng.normal(0.0, 1.0, size=p)
        pair = rng.normal(0.0, 1.0, size=(p, p))
        self._pair_bonus = np.triu(pair, k=1)
        n_edges = self.space.num_edges
        self._edge_scale = 1.0 / np.sqrt(n_edges)
        self._pair_scale = interaction_strength / np.sqrt(n_edges * (n_edges - 1) / 2)

    def fitness(self, genotype: Genotype) -> float:
        """Noise-free fitness in (0, 1)."""
        x = self._feat.transform(genotype)[0]
        raw = self._base
        raw += self._edge_scale * float(x @ self._edge_scores)
        raw += self._pair_scale * float(x @ self._pair_bonus @ x)
        return float(1.0 / (1.0 + np.exp(-raw)))

    def evaluate(self, genotype: Genotype, rng: np.random.Generator | None = None) -> EvalResult:
        v = self.fitness(genotype)
        if self.noise_sigma > 0.0:
            if rng is None:
                raise ValueError("noise_sigma > 0 requires an rng per call")
            v = float(np.clip(v + rng.normal(0.0, self.noise_sigma), 0.0, 1.0))
        return EvalResult(val_acc=v, test_acc=v, cost=0.0)

    def evaluate_child(
        self, child: Genotype, record: MutationRecord, parent: Genotype, rng=None
    ) -> EvalResult:
        return self.evaluate(child, rng)
