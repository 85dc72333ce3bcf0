"""One-step mutation operators and neighborhood enumeration.

Two operators exist: operation mutation replaces one edge's op with a
different legal op; connection mutation rewires one edge to a different
legal predecessor (defined only on fixed-in-degree spaces; complete DAGs
have nothing to rewire). Every child differs from its parent in exactly
one edge attribute.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .genotype import Edge, Genotype, InDegreeRule, canonical_string

__all__ = [
    "MutationKind",
    "MutationRecord",
    "ParentExhaustedError",
    "apply_record",
    "op_mutations",
    "conn_mutations",
    "neighborhood",
    "sample_children",
]


class ParentExhaustedError(RuntimeError):
    """Every one-step child of the parent is already in the history."""


class MutationKind(str, Enum):
    OP = "op"
    CONN = "conn"


@dataclass(frozen=True)
class MutationRecord:
    """One attribute change: which edge, what kind, old and new value."""

    kind: MutationKind
    edge_index: int  # position in the parent's canonical edge list
    old_value: int  # op index (OP) or src node (CONN)
    new_value: int


def apply_record(parent: Genotype, record: MutationRecord) -> Genotype:
    """Child genotype produced by applying ``record`` to ``parent``."""
    if not 0 <= record.edge_index < len(parent.edges):
        raise ValueError(f"edge index {record.edge_index} out of range")
    e = parent.edges[record.edge_index]
    if record.kind is MutationKind.OP:
        if e.op != record.old_value:
            raise ValueError(f"record old op {record.old_value} != edge op {e.op}")
        return parent.replace_edge(record.edge_index, Edge(e.src, e.dst, record.new_value))
    if e.src != record.old_value:
        raise ValueError(f"record old src {record.old_value} != edge src {e.src}")
    return parent.replace_edge(record.edge_index, Edge(record.new_value, e.dst, e.op))


def op_mutations(parent: Genotype) -> list[tuple[Genotype, MutationRecord]]:
    """One child per (edge, alternative op) pair."""
    children = []
    for idx, e in enumerate(parent.edges):
        for op in parent.space.edge_ops:
            if op == e.op:
                continue
            rec = MutationRecord(MutationKind.OP, idx, e.op, op)
            children.append((apply_record(parent, rec), rec))
    return children


def conn_mutations(parent: Genotype) -> list[tuple[Genotype, MutationRecord]]:
    """One child per (edge, alternative predecessor) pair; empty on complete DAGs."""
    if parent.space.in_degree_rule is InDegreeRule.COMPLETE:
        return []
    children = []
    for idx, e in enumerate(parent.edges):
        for src in range(e.dst):
            if src == e.src:
                continue
            rec = MutationRecord(MutationKind.CONN, idx, e.src, src)
            children.append((apply_record(parent, rec), rec))
    return children


def neighborhood(parent: Genotype) -> list[tuple[Genotype, MutationRecord]]:
    """All one-step children, deduplicated by canonical string.

    Operation mutations come first, then connection mutations; when two
    mutations collide on the same child genotype the first record is kept.
    """
    seen = {canonical_string(parent)}
    out = []
    for child, rec in op_mutations(parent) + conn_mutations(parent):
        key = canonical_string(child)
        if key in seen:
            continue
        seen.add(key)
        out.append((child, rec))
    return out


def sample_children(
    parent: Genotype,
    budget: int,
    rng: np.random.Generator,
    history: set[str] | frozenset[str] = frozenset(),
) -> list[tuple[Genotype, MutationRecord]]:
    """Uniform sample without replacement from the parent's unseen neighborhood.

    Returns min(budget, available) children; raises ParentExhaustedError
    when every neighbor is already in ``history`` so the caller can pick a
    different parent.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    available = [
        (child, rec)
        for child, rec in neighborhood(parent)
        if canonical_string(child) not in history
    ]
    if not available:
        raise ParentExhaustedError(
            f"all one-step children of {canonical_string(parent)} already evaluated"
        )
    take = min(budget, len(available))
    picks = rng.choice(len(available), size=take, replace=False)
    return [available[int(i)] for i in picks]
