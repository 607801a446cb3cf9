"""Metapath instance enumeration and metapath-based graph materialization.

An instance is stored target-last: for a metapath with type sequence
(A_1, ..., A_{l+1}) and target v of type A_1, the stored node sequence is
(t_0, ..., t_n) with t_n = v and t_0 = u, the metapath-based neighbor.
Node revisits within an instance are permitted (closed walks are what put
v itself into its own neighbor multiset for symmetric metapaths).
"""

from __future__ import annotations

import struct

import numpy as np

from .graph import HetGraph, Metapath, validate_metapath
from .rng import substream


class InstanceTable:
    """All metapath instances for one (graph, metapath) pair, target-major.

    sequences is an int64 array of shape (num_instances, l+1) of local node
    indices; column j holds nodes of type path.types[::-1][j] (target-last
    storage).  offsets delimit the contiguous block of each target node:
    block(v) = sequences[offsets[v]:offsets[v+1]].
    """

    def __init__(self, path: Metapath, target_type: int, num_targets: int,
                 offsets: np.ndarray, sequences: np.ndarray):
        self.path = path
        self.target_type = target_type
        self.num_targets = num_targets
        self.offsets = offsets
        self.sequences = sequences
        assert offsets.shape == (num_targets + 1,)
        assert offsets[-1] == sequences.shape[0]

    @property
    def position_types(self) -> tuple[int, ...]:
        """Node type of each sequence column (t_0 first, target last)."""
        return self.path.types[::-1]

    @property
    def step_relations(self) -> tuple[int, ...]:
        """Relation id between columns (j-1, j) in storage order."""
        return self.path.relations[::-1]

    @property
    def num_instances(self) -> int:
        return int(self.sequences.shape[0])

    def block(self, v: int) -> np.ndarray:
        if not 0 <= v < self.num_targets:
            raise KeyError(f"node {v} is not a target of this table")
        return self.sequences[self.offsets[v]:self.offsets[v + 1]]


def enumerate_instances(graph: HetGraph, path: Metapath, targets=None,
                        cap: int | None = None, seed: int = 0) -> InstanceTable:
    """Enumerate all instances ending at each target node.

    Enumeration is a depth-first walk from the target along the reversed
    schema with sorted neighbor lists, so each block is ordered
    lexicographically by (t_n, ..., t_0).  When `cap` is set and a block
    exceeds it, a uniform subsample of size `cap` is retained,
    deterministic under (seed, target).
    """
    path = validate_metapath(graph, path)
    if cap is not None and cap <= 0:
        raise ValueError("cap must be positive")
    target_type = path.types[0]
    n_targets = graph.num_nodes(target_type)
    if targets is None:
        targets = range(n_targets)
    else:
        targets = sorted(int(t) for t in targets)  # blocks are stored target-major

    # walk v = position 0 of the schema outward to u = position l
    rels = path.relations
    types = path.types
    l = path.length

    offsets = np.zeros(n_targets + 1, dtype=np.int64)
    chunks: list[np.ndarray] = []
    counts = np.zeros(n_targets, dtype=np.int64)

    def walks_from(v: int) -> list[tuple]:
        rows: list[tuple] = []
        walk = [v]

        def rec(depth: int) -> None:
            if depth == l:
                rows.append(tuple(walk))
                return
            for nxt in graph.neighbors(types[depth], walk[-1], rels[depth]):
                walk.append(int(nxt))
                rec(depth + 1)
                walk.pop()

        rec(0)
        return rows

    for v in targets:
        rows = walks_from(int(v))
        block = np.array(rows, dtype=np.int64).reshape(len(rows), l + 1)
        if cap is not None and len(block) > cap:
            rng = substream(seed, f"instance-cap/{target_type}/{v}")
            keep = np.sort(rng.choice(len(block), size=cap, replace=False))
            block = block[keep]
        # store target-last
        block = block[:, ::-1]
        counts[v] = len(block)
        chunks.append(block)

    offsets[1:] = np.cumsum(counts)
    sequences = (np.concatenate(chunks, axis=0) if chunks
                 else np.empty((0, l + 1), dtype=np.int64))
    return InstanceTable(path, target_type, n_targets, offsets, sequences)


def metapath_neighbors(table: InstanceTable, v: int) -> list[int]:
    """Multiset of metapath-based neighbors of v (one entry per instance)."""
    return [int(row[0]) for row in table.block(v)]


def build_metapath_graph(table: InstanceTable, path: Metapath | None = None):
    """Edge multiset {(v, u)} over all neighbor pairs of the table."""
    edges = []
    for v in range(table.num_targets):
        for row in table.block(v):
            edges.append((v, int(row[0])))
    return edges


def build_tables(graph: HetGraph, metapaths_by_type: dict, cap: int | None = None,
                 seed: int = 0) -> dict[str, InstanceTable]:
    """Enumerate one table per distinct metapath, keyed by its type label."""
    tables: dict[str, InstanceTable] = {}
    for paths in metapaths_by_type.values():
        for p in paths:
            label = p.label(graph.schema)
            if label not in tables:
                tables[label] = enumerate_instances(graph, p, cap=cap, seed=seed)
    return tables


_DUMP_MAGIC = b"MPIT"
_DUMP_VERSION = 1


def dump_instance_table(table: InstanceTable, fp) -> None:
    """Write a versioned binary dump for caching between runs."""
    own = isinstance(fp, str)
    f = open(fp, "wb") if own else fp
    try:
        f.write(_DUMP_MAGIC)
        f.write(struct.pack("<I", _DUMP_VERSION))
        types = table.path.types
        rels = table.path.relations
        f.write(struct.pack("<IIqq", len(types), len(rels),
                            table.num_targets, table.num_instances))
        f.write(np.asarray(types, dtype=np.int64).tobytes())
        f.write(np.asarray(rels, dtype=np.int64).tobytes())
        f.write(table.offsets.astype("<i8").tobytes())
        f.write(table.sequences.astype("<i8").tobytes())
    finally:
        if own:
            f.close()


def load_instance_table(fp) -> InstanceTable:
    own = isinstance(fp, str)
    f = open(fp, "rb") if own else fp
    try:
        if f.read(4) != _DUMP_MAGIC:
            raise ValueError("not an instance table dump")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _DUMP_VERSION:
            raise ValueError(f"unsupported instance table dump version {version}")
        n_types, n_rels, n_targets, n_inst = struct.unpack("<IIqq", f.read(24))
        types = tuple(np.frombuffer(f.read(8 * n_types), dtype="<i8").tolist())
        rels = tuple(np.frombuffer(f.read(8 * n_rels), dtype="<i8").tolist())
        offsets = np.frombuffer(f.read(8 * (n_targets + 1)), dtype="<i8").copy()
        seqs = np.frombuffer(f.read(8 * n_inst * n_types), dtype="<i8").copy()
        seqs = seqs.reshape(n_inst, n_types)
        sym = types == types[::-1] and rels == rels[::-1]
        path = Metapath(types, rels, sym)
        return InstanceTable(path, types[0], n_targets, offsets, seqs)
    finally:
        if own:
            f.close()
