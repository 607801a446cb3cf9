import numpy as np
import pytest

from magnn.graph import GraphSchema, Metapath, Relation, build_graph


def movie_schema():
    return GraphSchema(("M", "D", "A"),
                       (Relation("M-D", 0, 1), Relation("M-A", 0, 2)))


def tiny_movie_graph():
    """3 movies, 2 directors, 2 actors with a handful of edges."""
    schema = movie_schema()
    edges = [(0, 0, 0), (0, 1, 0), (0, 2, 1),
             (1, 0, 0), (1, 1, 1), (1, 2, 0), (1, 2, 1)]
    feats = {0: np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])}
    return build_graph(schema, (3, 2, 2), edges, features=feats)


def bipartite_graph(edges, n_a=3, n_b=3):
    schema = GraphSchema(("A", "B"), (Relation("A-B", 0, 1),))
    return build_graph(schema, (n_a, n_b), [(0, u, v) for u, v in edges])


def random_hetgraph(rng, max_types=4, max_nodes=12, max_relations=3,
                    density=0.3):
    """Random schema plus random simple edges; may include self-relations."""
    n_types = int(rng.integers(2, max_types + 1))
    counts = tuple(int(rng.integers(1, max_nodes + 1)) for _ in range(n_types))
    n_rel = int(rng.integers(1, max_relations + 1))
    rels = []
    for i in range(n_rel):
        a = int(rng.integers(n_types))
        b = int(rng.integers(n_types))
        rels.append(Relation(f"r{i}", a, b))
    schema = GraphSchema(tuple(f"T{t}" for t in range(n_types)), tuple(rels))

    edges = []
    for rid, rel in enumerate(rels):
        seen = set()
        n_pairs = counts[rel.source] * counts[rel.target]
        want = int(round(density * n_pairs))
        for _ in range(want):
            u = int(rng.integers(counts[rel.source]))
            v = int(rng.integers(counts[rel.target]))
            key = (min(u, v), max(u, v)) if rel.source == rel.target else (u, v)
            if key in seen:
                continue
            seen.add(key)
            edges.append((rid, u, v))
    return build_graph(schema, counts, edges)


def all_metapaths(schema, start_type, max_len):
    """Every schema-consistent metapath from start_type up to max_len steps."""
    out = []

    def extend(types, rels):
        if len(rels) >= 1:
            out.append(Metapath(tuple(types), tuple(rels)))
        if len(rels) == max_len:
            return
        here = types[-1]
        for rid, rel in enumerate(schema.relations):
            if rel.source == here:
                extend(types + [rel.target], rels + [rid])
            elif rel.target == here:
                extend(types + [rel.source], rels + [rid])

    extend([start_type], [])
    return out
