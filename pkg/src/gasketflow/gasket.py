"""Level-m combinatorial approximations of the N-point Sierpinski gasket.

Vertices are identified by exact integer barycentric weights, never by
floating-point coordinates, so corner sharing between cells is resolved
without tolerances.  Euclidean coordinates exist only for export and
plotting.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainMismatchError, ResourceLimitError

#: constructions with more cells than this are refused outright
MAX_CELLS = 4_000_000


@dataclass(frozen=True)
class VertexAddress:
    """Exact label of a vertex of the level-m vertex set.

    ``weights`` is a nonnegative integer vector (a_1, ..., a_N) summing to
    2**level; the labelled point is sum_i (a_i / 2**level) * p_i.  Two
    addresses denote the same point of the gasket iff their weights agree
    after rescaling to a common level, which is an integer comparison.
    """

    level: int
    weights: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        if len(self.weights) < 2:
            raise ValueError("an address needs at least two weights")
        if any(w < 0 for w in self.weights):
            raise ValueError(f"weights must be nonnegative, got {self.weights}")
        total = sum(self.weights)
        if total != 2**self.level:
            raise ValueError(
                f"weights must sum to 2**level = {2 ** self.level}, got {total}"
            )

    @property
    def n(self) -> int:
        return len(self.weights)

    def rescaled(self, level: int) -> "VertexAddress":
        """The same point relabelled at a finer level."""
        if level < self.level:
            raise ValueError("can only rescale to a level >= the current one")
        factor = 2 ** (level - self.level)
        return VertexAddress(level, tuple(w * factor for w in self.weights))


@dataclass(frozen=True, eq=False)
class GasketGraph:
    """Immutable level-m vertex/cell/edge structure of the N-point gasket.

    Vertex order is lexicographic on the weight vectors, so every vector
    indexed by this graph (function values, masses, CSV columns) is
    reproducible.  ``cells[c][i]`` is the vertex index of the i-th corner of
    cell ``c``, i.e. the image of p_i under the cell's contraction word.
    """

    n: int
    level: int
    vertices: tuple[VertexAddress, ...]
    cells: tuple[tuple[int, ...], ...]
    cell_words: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    boundary: tuple[int, ...]
    _index: dict = field(repr=False)
    _neighbors: tuple[tuple[int, ...], ...] = field(repr=False)
    _edge_i: np.ndarray = field(repr=False)
    _edge_j: np.ndarray = field(repr=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GasketGraph):
            return NotImplemented
        return self.n == other.n and self.level == other.level

    def __hash__(self) -> int:
        return hash((self.n, self.level))

    def __repr__(self) -> str:  # the full field dump is unreadable
        return (
            f"GasketGraph(n={self.n}, level={self.level}, "
            f"vertices={len(self.vertices)}, cells={len(self.cells)}, "
            f"edges={len(self.edges)})"
        )

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint index arrays (i, j) over all unordered edges."""
        return self._edge_i, self._edge_j

    def index_of(self, address: VertexAddress) -> int:
        if address.n != self.n:
            raise DomainMismatchError(
                f"address has {address.n} weights, graph has n={self.n}"
            )
        key = address.rescaled(self.level).weights if address.level <= self.level else None
        if key is None or key not in self._index:
            raise DomainMismatchError(f"{address} is not a vertex of {self}")
        return self._index[key]

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def to_json_dict(self) -> dict:
        return {
            "N": self.n,
            "m": self.level,
            "vertices": [list(v.weights) for v in self.vertices],
            "cells": [list(c) for c in self.cells],
            "edges": [list(e) for e in self.edges],
            "boundary": list(self.boundary),
        }


@functools.lru_cache(maxsize=None)
def build_level(n: int, m: int) -> GasketGraph:
    """Construct the canonical level-m graph of the n-point gasket.

    Cell corners are identified exactly once through their integer
    addresses; the corner of cell w in direction i carries the weights
    sum_k 2**(m-k) e_{w_k} + e_i.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if n**m > MAX_CELLS:
        raise ResourceLimitError(
            f"level {m} of the {n}-point gasket has {n ** m} cells "
            f"(limit {MAX_CELLS})"
        )

    cell_corner_weights: list[list[tuple[int, ...]]] = []
    words: list[tuple[int, ...]] = []
    for word in itertools.product(range(n), repeat=m):
        base = [0] * n
        for k, wk in enumerate(word):
            base[wk] += 1 << (m - 1 - k)
        corners = []
        for i in range(n):
            corners.append(tuple(base[j] + (1 if j == i else 0) for j in range(n)))
        cell_corner_weights.append(corners)
        words.append(word)

    all_weights = sorted({w for corners in cell_corner_weights for w in corners})
    index = {w: i for i, w in enumerate(all_weights)}
    vertices = tuple(VertexAddress(m, w) for w in all_weights)

    cells = tuple(
        tuple(index[w] for w in corners) for corners in cell_corner_weights
    )
    edge_set: set[tuple[int, int]] = set()
    for cell in cells:
        for a, b in itertools.combinations(sorted(cell), 2):
            edge_set.add((a, b))
    edges = tuple(sorted(edge_set))

    neighbor_sets: list[set[int]] = [set() for _ in vertices]
    for a, b in edges:
        neighbor_sets[a].add(b)
        neighbor_sets[b].add(a)
    neighbors = tuple(tuple(sorted(s)) for s in neighbor_sets)

    boundary = tuple(
        index[tuple((1 << m) if j == i else 0 for j in range(n))] for i in range(n)
    )

    edge_i = np.fromiter((e[0] for e in edges), dtype=np.intp, count=len(edges))
    edge_j = np.fromiter((e[1] for e in edges), dtype=np.intp, count=len(edges))
    edge_i.setflags(write=False)
    edge_j.setflags(write=False)

    return GasketGraph(
        n=n,
        level=m,
        vertices=vertices,
        cells=cells,
        cell_words=tuple(words),
        edges=edges,
        boundary=boundary,
        _index=index,
        _neighbors=neighbors,
        _edge_i=edge_i,
        _edge_j=edge_j,
    )


@dataclass(frozen=True, eq=False)
class VertexFunction:
    """A real value per vertex, in the graph's canonical vertex order."""

    graph: GasketGraph
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.graph.vertex_count,):
            raise DomainMismatchError(
                f"expected {self.graph.vertex_count} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("vertex function values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __repr__(self) -> str:
        return f"VertexFunction(n={self.graph.n}, level={self.graph.level})"

    def boundary_values(self) -> np.ndarray:
        return self.values[list(self.graph.boundary)]


def constant_function(graph: GasketGraph, value: float) -> VertexFunction:
    return VertexFunction(graph, np.full(graph.vertex_count, float(value)))


@functools.lru_cache(maxsize=None)
def _restriction_indices(n: int, m: int, big_level: int) -> np.ndarray:
    coarse = build_level(n, m)
    fine = build_level(n, big_level)
    idx = np.fromiter(
        (fine.index_of(v) for v in coarse.vertices),
        dtype=np.intp,
        count=coarse.vertex_count,
    )
    idx.setflags(write=False)
    return idx


def restrict(u: VertexFunction, m: int) -> VertexFunction:
    """Restriction of u to the coarser vertex set (the nested subset of V_M)."""
    big = u.graph
    if m > big.level:
        raise DomainMismatchError(
            f"cannot restrict a level-{big.level} function to level {m}"
        )
    idx = _restriction_indices(big.n, m, big.level)
    return VertexFunction(build_level(big.n, m), u.values[idx])


@functools.lru_cache(maxsize=None)
def simplex_vertices(n: int) -> np.ndarray:
    """Vertices p_1, ..., p_n of a regular unit-edge simplex in R^(n-1).

    Built by the usual recursion: p_1 at the origin, each new vertex above
    the centroid of the previous ones at the height that restores unit
    edges.  Any isometric placement would do; this one is the canonical
    choice for all exported coordinates.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    pts = np.zeros((n, n - 1))
    for k in range(1, n):
        centroid = pts[:k].mean(axis=0)
        radius_sq = float(np.dot(pts[0] - centroid, pts[0] - centroid))
        pts[k] = centroid
        pts[k, k - 1] = np.sqrt(1.0 - radius_sq)
    pts.setflags(write=False)
    return pts


def embed(address: VertexAddress) -> np.ndarray:
    """Euclidean coordinates of a vertex; for export only, never identity."""
    pts = simplex_vertices(address.n)
    coeff = np.asarray(address.weights, dtype=np.float64) / (2.0**address.level)
    return coeff @ pts


def vertex_coordinates(graph: GasketGraph) -> np.ndarray:
    """(vertex_count, n-1) array of embedded coordinates in vertex order."""
    pts = simplex_vertices(graph.n)
    weights = np.array([v.weights for v in graph.vertices], dtype=np.float64)
    return (weights / (2.0**graph.level)) @ pts
