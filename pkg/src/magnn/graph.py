"""Typed heterogeneous graph with per-relation sparse adjacency.

Node indices are local to their type and 0-based; a global node handle is
the pair (type_id, local_index).  Every relation is undirected: an input
edge (u, v) is reachable from both endpoints.  Graphs are immutable after
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """Edge or metapath inconsistent with the declared schema."""


@dataclass(frozen=True)
class Relation:
    """An edge type connecting two (possibly equal) node types."""

    name: str
    source: int
    target: int


@dataclass(frozen=True)
class GraphSchema:
    """Declared node types and relations; identifiers are dense and 0-based."""

    type_names: tuple[str, ...]
    relations: tuple[Relation, ...]

    def __post_init__(self):
        n = len(self.type_names)
        if len(set(self.type_names)) != n:
            raise SchemaError("duplicate node type names")
        for r in self.relations:
            if not (0 <= r.source < n and 0 <= r.target < n):
                raise SchemaError(f"relation {r.name!r} references undeclared node type")
        if len({r.name for r in self.relations}) != len(self.relations):
            raise SchemaError("duplicate relation names")

    @property
    def num_types(self) -> int:
        return len(self.type_names)

    def type_id(self, name: str) -> int:
        try:
            return self.type_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown node type {name!r}") from None

    def relation_id(self, name: str) -> int:
        for i, r in enumerate(self.relations):
            if r.name == name:
                return i
        raise SchemaError(f"unknown relation {name!r}")

    def relations_between(self, a: int, b: int) -> list[int]:
        """Relation ids connecting types a and b in either orientation."""
        return [
            i
            for i, r in enumerate(self.relations)
            if (r.source, r.target) in ((a, b), (b, a))
        ]


@dataclass(frozen=True)
class Metapath:
    """Alternating sequence of node types and relation ids.

    types has length l+1 and relations length l (l >= 1).  The symmetry
    flag is true iff the reversed type/relation sequence equals the
    original.
    """

    types: tuple[int, ...]
    relations: tuple[int, ...]
    symmetric: bool = field(default=False, compare=False)

    def __post_init__(self):
        if len(self.types) != len(self.relations) + 1 or len(self.relations) < 1:
            raise SchemaError("metapath must alternate l+1 types with l relations, l >= 1")

    @property
    def length(self) -> int:
        return len(self.relations)

    def reversed(self) -> "Metapath":
        return Metapath(self.types[::-1], self.relations[::-1], self.symmetric)

    def label(self, schema: GraphSchema) -> str:
        return "-".join(schema.type_names[t] for t in self.types)


class _Adjacency:
    """CSR neighbor lists for one relation, in both directions."""

    __slots__ = ("fwd_indptr", "fwd_indices", "rev_indptr", "rev_indices")

    def __init__(self, n_src, n_dst, src_idx, dst_idx):
        self.fwd_indptr, self.fwd_indices = _build_csr(n_src, src_idx, dst_idx)
        self.rev_indptr, self.rev_indices = _build_csr(n_dst, dst_idx, src_idx)


def _build_csr(n_rows, rows, cols):
    order = np.lexsort((cols, rows))
    rows = rows[order]
    cols = cols[order]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols.astype(np.int64)


class HetGraph:
    """Immutable heterogeneous graph.

    Construct via :func:`build_graph`.  Feature matrices are float64 with
    one row per node; types without supplied features get one-hot identity
    features.
    """

    def __init__(self, schema, node_counts, adjacency, edge_counts, features,
                 labels=None, masks=None):
        self.schema = schema
        self.node_counts = tuple(node_counts)
        self._adj = adjacency
        self.edge_counts = tuple(edge_counts)
        self.features = features
        self.labels = labels or {}
        self.masks = masks or {}

    def num_nodes(self, type_id: int) -> int:
        return self.node_counts[type_id]

    def feature_dim(self, type_id: int) -> int:
        return self.features[type_id].shape[1]

    def neighbors(self, type_id: int, node: int, relation: int) -> np.ndarray:
        """Sorted neighbor indices of `node` under `relation`.

        `type_id` selects the traversal direction; for self-relations the
        forward lists already contain both orientations.
        """
        rel = self.schema.relations[relation]
        adj = self._adj[relation]
        if type_id == rel.source:
            return adj.fwd_indices[adj.fwd_indptr[node]:adj.fwd_indptr[node + 1]]
        if type_id == rel.target:
            return adj.rev_indices[adj.rev_indptr[node]:adj.rev_indptr[node + 1]]
        raise SchemaError(
            f"relation {rel.name!r} does not touch node type "
            f"{self.schema.type_names[type_id]!r}"
        )

    def edges(self, relation: int) -> list[tuple[int, int]]:
        """The input edge set of one relation, order-normalized."""
        rel = self.schema.relations[relation]
        adj = self._adj[relation]
        out = []
        for u in range(self.node_counts[rel.source]):
            for v in adj.fwd_indices[adj.fwd_indptr[u]:adj.fwd_indptr[u + 1]]:
                if rel.source == rel.target and v < u:
                    continue  # self-relation edges are stored in both orientations
                out.append((u, int(v)))
        return out

    def has_edge(self, relation: int, u: int, v: int) -> bool:
        rel = self.schema.relations[relation]
        nbrs = self.neighbors(rel.source, u, relation)
        return bool(np.searchsorted(nbrs, v) < len(nbrs) and
                    nbrs[np.searchsorted(nbrs, v)] == v)


def build_graph(schema, node_counts, edges, features=None, labels=None, masks=None):
    """Build a validated HetGraph.

    edges: iterable of (relation_id, u, v) with u indexed in the relation's
    source type and v in its target type.  Duplicate edges are rejected;
    for self-relations (u, v) and (v, u) count as the same edge.
    """
    node_counts = tuple(int(c) for c in node_counts)
    if len(node_counts) != schema.num_types:
        raise SchemaError("node_counts length does not match declared types")
    if any(c < 0 for c in node_counts):
        raise SchemaError("negative node count")

    per_rel: list[list[tuple[int, int]]] = [[] for _ in schema.relations]
    seen: list[set] = [set() for _ in schema.relations]
    for rel_id, u, v in edges:
        if not 0 <= rel_id < len(schema.relations):
            raise SchemaError(f"unknown relation id {rel_id}")
        rel = schema.relations[rel_id]
        u, v = int(u), int(v)
        if not (0 <= u < node_counts[rel.source]):
            raise SchemaError(
                f"edge ({rel.name}, {u}, {v}): source index out of range "
                f"for type {schema.type_names[rel.source]!r}"
            )
        if not (0 <= v < node_counts[rel.target]):
            raise SchemaError(
                f"edge ({rel.name}, {u}, {v}): target index out of range "
                f"for type {schema.type_names[rel.target]!r}"
            )
        key = (min(u, v), max(u, v)) if rel.source == rel.target else (u, v)
        if key in seen[rel_id]:
            raise SchemaError(f"duplicate edge ({rel.name}, {u}, {v})")
        seen[rel_id].add(key)
        per_rel[rel_id].append((u, v))

    adjacency = []
    edge_counts = []
    for rel_id, rel in enumerate(schema.relations):
        pairs = per_rel[rel_id]
        edge_counts.append(len(pairs))
        if rel.source == rel.target:
            # store both orientations so every endpoint sees the edge
            pairs = pairs + [(v, u) for (u, v) in pairs if u != v]
        src = np.array([p[0] for p in pairs], dtype=np.int64)
        dst = np.array([p[1] for p in pairs], dtype=np.int64)
        adjacency.append(_Adjacency(node_counts[rel.source], node_counts[rel.target], src, dst))

    feats = {}
    features = features or {}
    for t in range(schema.num_types):
        if t in features and features[t] is not None:
            x = np.asarray(features[t], dtype=np.float64)
            if x.ndim != 2 or x.shape[0] != node_counts[t]:
                raise SchemaError(
                    f"feature matrix for type {schema.type_names[t]!r} has shape "
                    f"{x.shape}, expected {node_counts[t]} rows"
                )
            feats[t] = x
        else:
            feats[t] = np.eye(node_counts[t], dtype=np.float64)

    lab = {}
    for t, y in (labels or {}).items():
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (node_counts[t],):
            raise SchemaError("label vector length does not match node count")
        lab[t] = y

    msk = {}
    for t, parts in (masks or {}).items():
        msk[t] = {
            split: np.asarray(idx, dtype=np.int64) for split, idx in parts.items()
        }
        for idx in msk[t].values():
            if len(idx) and (idx.min() < 0 or idx.max() >= node_counts[t]):
                raise SchemaError("mask index out of range")

    return HetGraph(schema, node_counts, adjacency, edge_counts, feats, lab, msk)


def validate_metapath(graph: HetGraph, path: Metapath) -> Metapath:
    """Check schema consistency and compute the symmetry flag."""
    schema = graph.schema
    for i, rel_id in enumerate(path.relations):
        if not 0 <= rel_id < len(schema.relations):
            raise SchemaError(f"unknown relation id {rel_id} at position {i}")
        rel = schema.relations[rel_id]
        a, b = path.types[i], path.types[i + 1]
        if (rel.source, rel.target) not in ((a, b), (b, a)):
            raise SchemaError(
                f"relation {rel.name!r} at position {i} does not connect "
                f"{schema.type_names[a]!r} and {schema.type_names[b]!r}"
            )
    symmetric = (path.types == path.types[::-1]
                 and path.relations == path.relations[::-1])
    return Metapath(path.types, path.relations, symmetric)
