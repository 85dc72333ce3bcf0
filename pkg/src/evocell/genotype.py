"""Cell-based search spaces and the genotype encoding.

A genotype is an ordered list of typed, directed edges over a small DAG of
nodes. Two space families are supported:

* ``nb201``: 4 nodes (1 input, 2 intermediate, 1 output), a complete DAG of
  6 edges, and 5 operations per edge. 5**6 = 15625 architectures.
* ``darts``: 7 nodes (2 inputs, 4 intermediates, 1 implicit output). Each
  intermediate node receives exactly 2 edges from earlier nodes, each
  carrying one of 7 non-none operations. The output node aggregates all
  intermediates and is never part of the searchable genotype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

__all__ = [
    "SpaceKind",
    "InDegreeRule",
    "SearchSpace",
    "Edge",
    "Genotype",
    "GenotypeError",
    "ParseError",
    "MatrixEncodingError",
    "make_space",
    "validate",
    "to_matrix",
    "from_matrix",
    "canonical_string",
    "parse_string",
    "random_genotype",
]


class GenotypeError(ValueError):
    """A genotype or encoding violates its space's structural rules."""


class ParseError(GenotypeError):
    """A genotype string could not be parsed."""


class MatrixEncodingError(GenotypeError):
    """A genotype cannot be represented as (or read from) an adjacency matrix."""


class SpaceKind(str, Enum):
    NB201 = "nb201"
    DARTS = "darts"


class InDegreeRule(str, Enum):
    #: every earlier node connects to every later node
    COMPLETE = "complete"
    #: each intermediate node has exactly two incoming edges
    FIXED_TWO = "fixed_two"


NB201_OPS = ("none", "skip_connect", "conv_1x1", "conv_3x3", "avg_pool_3x3")
DARTS_OPS = (
    "sep_conv_3x3",
    "sep_conv_5x5",
    "dil_conv_3x3",
    "dil_conv_5x5",
    "max_pool_3x3",
    "avg_pool_3x3",
    "skip_connect",
    "none",
)


class Edge(NamedTuple):
    src: int
    dst: int
    op: int


@dataclass(frozen=True)
class SearchSpace:
    """Legality rules for one cell search space."""

    kind: SpaceKind
    num_inputs: int
    num_intermediates: int
    ops: tuple[str, ...]
    in_degree_rule: InDegreeRule
    #: when True, operation mutation may also substitute the ``none`` op
    #: (widening the per-edge alternatives on fixed-in-degree spaces)
    allow_none_mutation: bool = False

    @property
    def num_nodes(self) -> int:
        return self.num_inputs + self.num_intermediates + 1

    @property
    def output_node(self) -> int:
        return self.num_nodes - 1

    @property
    def intermediate_nodes(self) -> range:
        return range(self.num_inputs, self.num_inputs + self.num_intermediates)

    @property
    def none_op(self) -> int:
        return self.ops.index("none")

    @property
    def edge_ops(self) -> tuple[int, ...]:
        """Op indices an edge may carry."""
        if self.in_degree_rule is InDegreeRule.COMPLETE or self.allow_none_mutation:
            return tuple(range(len(self.ops)))
        return tuple(i for i in range(len(self.ops)) if i != self.none_op)

    def edge_pairs(self) -> tuple[tuple[int, int], ...]:
        """All legal (src, dst) pairs, in canonical (dst-major) order."""
        if self.in_degree_rule is InDegreeRule.COMPLETE:
            return tuple(
                (i, j) for j in range(1, self.num_nodes) for i in range(j)
            )
        return tuple(
            (i, j) for j in self.intermediate_nodes for i in range(j)
        )

    @property
    def num_edges(self) -> int:
        if self.in_degree_rule is InDegreeRule.COMPLETE:
            n = self.num_nodes
            return n * (n - 1) // 2
        return 2 * self.num_intermediates

    def size(self) -> int:
        """Number of architectures reachable by uniform random generation."""
        k = len(self.edge_ops)
        if self.in_degree_rule is InDegreeRule.COMPLETE:
            return len(self.ops) ** self.num_edges
        total = k**self.num_edges
        for node in self.intermediate_nodes:
            total *= math.comb(node, 2)
        return total

    def max_neighborhood_size(self) -> int:
        """Nominal one-step neighborhood size (before duplicate collisions)."""
        op_children = self.num_edges * (len(self.edge_ops) - 1)
        conn_children = 0
        if self.in_degree_rule is InDegreeRule.FIXED_TWO:
            conn_children = sum(2 * (node - 1) for node in self.intermediate_nodes)
        return op_children + conn_children


def make_space(kind: SpaceKind | str, allow_none_mutation: bool = False) -> SearchSpace:
    """Build one of the two supported search spaces."""
    kind = SpaceKind(kind)
    if kind is SpaceKind.NB201:
        return SearchSpace(
            kind=kind,
            num_inputs=1,
            num_intermediates=2,
            ops=NB201_OPS,
            in_degree_rule=InDegreeRule.COMPLETE,
            allow_none_mutation=allow_none_mutation,
        )
    return SearchSpace(
        kind=kind,
        num_inputs=2,
        num_intermediates=4,
        ops=DARTS_OPS,
        in_degree_rule=InDegreeRule.FIXED_TWO,
        allow_none_mutation=allow_none_mutation,
    )


def _canonical_edges(edges) -> tuple[Edge, ...]:
    return tuple(sorted((Edge(*e) for e in edges), key=lambda e: (e.dst, e.src, e.op)))


@dataclass(frozen=True)
class Genotype:
    """A cell architecture: typed edges over its space's node DAG.

    Edges are stored in canonical order (destination-major), so two
    genotypes with the same edge multiset compare equal.
    """

    space: SearchSpace
    edges: tuple[Edge, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "edges", _canonical_edges(self.edges))

    def __str__(self) -> str:
        return canonical_string(self)

    @property
    def key(self) -> str:
        return canonical_string(self)

    def replace_edge(self, index: int, edge: Edge) -> "Genotype":
        """New genotype with the edge at ``index`` (canonical order) replaced."""
        edges = list(self.edges)
        edges[index] = Edge(*edge)
        return Genotype(self.space, tuple(edges))


def validate(g: Genotype) -> list[str]:
    """Return every violated structural rule; an empty list means valid."""
    if not isinstance(g, Genotype) or not isinstance(g.space, SearchSpace):
        raise GenotypeError("unknown search space reference")
    space = g.space
    if not isinstance(space.kind, SpaceKind):
        raise GenotypeError(f"unknown search space kind {space.kind!r}")

    problems: list[str] = []
    n_ops = len(space.ops)
    legal_ops = set(space.edge_ops)
    for e in g.edges:
        if not (0 <= e.src < space.num_nodes and 0 <= e.dst < space.num_nodes):
            problems.append(f"edge {e} references a node outside 0..{space.num_nodes - 1}")
            continue
        if e.src >= e.dst:
            problems.append(f"edge {e} violates src < dst")
        if not 0 <= e.op < n_ops:
            problems.append(f"edge {e} op index outside vocabulary 0..{n_ops - 1}")
        elif e.op not in legal_ops:
            problems.append(f"edge {e} carries op '{space.ops[e.op]}' not allowed on edges")

    if space.in_degree_rule is InDegreeRule.COMPLETE:
        want = space.num_edges
        if len(g.edges) != want:
            problems.append(f"edge count {len(g.edges)} != {want}")
        pairs = {(e.src, e.dst) for e in g.edges}
        for pair in space.edge_pairs():
            if pair not in pairs:
                problems.append(f"missing edge for node pair {pair}")
        if len(pairs) != len(g.edges):
            problems.append("duplicate node pair in complete-DAG genotype")
    else:
        for node in space.intermediate_nodes:
            deg = sum(1 for e in g.edges if e.dst == node)
            if deg != 2:
                problems.append(f"node {node} in-degree {deg} != 2")
        for e in g.edges:
            if e.dst not in space.intermediate_nodes:
                problems.append(f"edge {e} targets a non-intermediate node")
    return problems


def to_matrix(g: Genotype) -> np.ndarray:
    """Strictly upper-triangular adjacency matrix for a genotype.

    Cell (i, j) with i < j holds op_index + 1 for an edge i -> j, and 0
    where no edge exists. Genotypes with two parallel edges on the same
    node pair (possible after connection mutations) have no matrix form;
    the string encoding is the total one.
    """
    m = np.zeros((g.space.num_nodes, g.space.num_nodes), dtype=np.int64)
    for e in g.edges:
        if m[e.src, e.dst] != 0:
            raise MatrixEncodingError(
                f"parallel edges on node pair ({e.src}, {e.dst}) cannot be matrix-encoded"
            )
        m[e.src, e.dst] = e.op + 1
    return m


def from_matrix(m: np.ndarray, space: SearchSpace) -> Genotype:
    """Inverse of :func:`to_matrix`."""
    m = np.asarray(m)
    if m.shape != (space.num_nodes, space.num_nodes):
        raise MatrixEncodingError(
            f"matrix shape {m.shape} does not match {space.num_nodes} nodes"
        )
    if np.any(m[np.tril_indices(space.num_nodes)] != 0):
        raise MatrixEncodingError("matrix has nonzeros on or below the diagonal")
    edges = []
    for src, dst in zip(*np.nonzero(m)):
        op = int(m[src, dst]) - 1
        if op >= len(space.ops):
            raise MatrixEncodingError(
                f"cell ({src}, {dst}) holds {int(m[src, dst])}, outside the op vocabulary"
            )
        edges.append(Edge(int(src), int(dst), op))
    return Genotype(space, tuple(edges))


def canonical_string(g: Genotype) -> str:
    """Canonical text form of a genotype; the key format for all data files.

    nb201: the 6 op indices in canonical edge order, comma-joined,
    e.g. ``"3,0,2,1,1,4"``. darts: per intermediate node, two
    ``src:op`` pairs comma-joined, nodes separated by ``|``, e.g.
    ``"0:2,1:6|0:0,2:3|1:1,3:4|2:5,4:0"``.
    """
    if g.space.in_degree_rule is InDegreeRule.COMPLETE:
        return ",".join(str(e.op) for e in g.edges)
    groups = []
    for node in g.space.intermediate_nodes:
        pairs = [f"{e.src}:{e.op}" for e in g.edges if e.dst == node]
        groups.append(",".join(pairs))
    return "|".join(groups)


def parse_string(text: str, space: SearchSpace) -> Genotype:
    """Exact inverse of :func:`canonical_string`; strict about shape and ranges."""
    if not isinstance(text, str) or text == "":
        raise ParseError("empty genotype string")
    if space.in_degree_rule is InDegreeRule.COMPLETE:
        tokens = text.split(",")
        if len(tokens) != space.num_edges:
            raise ParseError(f"expected {space.num_edges} ops, got {len(tokens)}")
        ops = []
        for tok in tokens:
            try:
                op = int(tok)
            except ValueError:
                raise ParseError(f"bad op token {tok!r}") from None
            if not 0 <= op < len(space.ops):
                raise ParseError(f"op index {op} outside vocabulary")
            ops.append(op)
        edges = [Edge(src, dst, op) for (src, dst), op in zip(space.edge_pairs(), ops)]
        return Genotype(space, tuple(edges))

    groups = text.split("|")
    if len(groups) != space.num_intermediates:
        raise ParseError(
            f"expected {space.num_intermediates} node groups, got {len(groups)}"
        )
    legal_ops = set(space.edge_ops)
    edges = []
    for node, group in zip(space.intermediate_nodes, groups):
        pairs = group.split(",")
        if len(pairs) != 2:
            raise ParseError(f"node {node} needs exactly 2 'src:op' pairs, got {group!r}")
        for pair in pairs:
            head, sep, tail = pair.partition(":")
            if not sep:
                raise ParseError(f"bad pair token {pair!r}")
            try:
                src, op = int(head), int(tail)
            except ValueError:
                raise ParseError(f"bad pair token {pair!r}") from None
            if not 0 <= src < node:
                raise ParseError(f"src {src} is not a predecessor of node {node}")
            if op not in legal_ops:
                raise ParseError(f"op index {op} not allowed on edges")
            edges.append(Edge(src, node, op))
    return Genotype(space, tuple(edges))


def random_genotype(space: SearchSpace, rng: np.random.Generator) -> Genotype:
    """Uniform random genotype.

    nb201 draws each edge op uniformly over the full vocabulary. darts
    draws, per intermediate node, a uniform unordered pair of distinct
    predecessors and a uniform non-none op per edge.
    """
    edges = []
    if space.in_degree_rule is InDegreeRule.COMPLETE:
        for src, dst in space.edge_pairs():
            edges.append(Edge(src, dst, int(rng.integers(len(space.ops)))))
    else:
        ops = space.edge_ops
        for node in space.intermediate_nodes:
            srcs = rng.choice(node, size=2, replace=False)
            for src in srcs:
                edges.append(Edge(int(src), node, int(ops[rng.integers(len(ops))])))
    return Genotype(space, tuple(edges))
