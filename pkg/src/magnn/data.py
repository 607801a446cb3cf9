"""Dataset ingestion, metapath text parsing, and file formats.

All formats are documented in docs/formats.md: a JSON schema file names
the node types and relations and points at per-relation edge lists plus
optional per-type feature, label, and mask files.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .graph import GraphSchema, HetGraph, Metapath, Relation, SchemaError, build_graph
from .model import ModelConfig, ModelParams
from .tensor import Tensor


class DataError(ValueError):
    """Malformed dataset file."""


def load_schema(path: str):
    """Read a schema file; returns (GraphSchema, raw schema dict)."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON at line {e.lineno}") from None
    try:
        type_names = tuple(t["name"] for t in raw["node_types"])
        relations = tuple(
            Relation(r["name"], type_names.index(r["source"]), type_names.index(r["target"]))
            for r in raw["relations"]
        )
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: {e}") from None
    return GraphSchema(type_names, relations), raw


def _parse_edge_file(path: str):
    edges = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two integer columns, got {line!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer node index") from None
    return edges


def _parse_feature_file(path: str):
    rows = []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                row = [float(x) for x in parts]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: ragged feature row")
            rows.append(row)
    return np.array(rows, dtype=np.float64)


def _parse_label_file(path: str, count: int):
    labels = np.full(count, -1, dtype=np.int64)
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 'index class'")
            try:
                idx, cls = int(parts[0]), int(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer value") from None
            if not 0 <= idx < count:
                raise DataError(f"{path}:{lineno}: node index {idx} out of range")
            labels[idx] = cls
    return labels


def _parse_mask_file(path: str, count: int):
    parts_by_split: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2 or parts[1] not in parts_by_split:
                raise DataError(f"{path}:{lineno}: expected 'index train|val|test'")
            idx = int(parts[0])
            if not 0 <= idx < count:
                raise DataError(f"{path}:{lineno}: node index {idx} out of range")
            parts_by_split[parts[1]].append(idx)
    return {k: np.sort(np.array(v, dtype=np.int64)) for k, v in parts_by_split.items() if v}


def load_dataset(schema_file: str, data_dir: str | None = None):
    """Load a HetGraph from a schema file and its data directory.

    Returns (graph, warnings) where warnings lists declared-count
    mismatches and empty edge files.
    """
    schema, raw = load_schema(schema_file)
    base = data_dir or os.path.dirname(os.path.abspath(schema_file))
    warnings = []

    counts = []
    features = {}
    labels = {}
    masks = {}
    for t, spec in enumerate(raw["node_types"]):
        if "count" not in spec:
            raise DataError(f"node type {spec.get('name')!r} is missing 'count'")
        counts.append(int(spec["count"]))
        if spec.get("features"):
            features[t] = _parse_feature_file(os.path.join(base, spec["features"]))
        if spec.get("labels"):
            labels[t] = _parse_label_file(os.path.join(base, spec["labels"]), counts[t])
        if spec.get("masks"):
            masks[t] = _parse_mask_file(os.path.join(base, spec["masks"]), counts[t])

    edges = []
    for rel_id, spec in enumerate(raw["relations"]):
        rel_edges = _parse_edge_file(os.path.join(base, spec["edges"]))
        if not rel_edges:
            warnings.append(f"relation {spec['name']!r}: edge file is empty")
        expected = spec.get("expected_edges")
        if expected is not None and len(rel_edges) != int(expected):
            warnings.append(
                f"relation {spec['name']!r}: {len(rel_edges)} edges, "
                f"schema declares {expected}")
        edges.extend((rel_id, u, v) for u, v in rel_edges)

    graph = build_graph(schema, counts, edges, features=features,
                        labels=labels, masks=masks)
    return graph, warnings


def write_dataset(graph: HetGraph, out_dir: str) -> str:
    """Write a graph in the ingestion format; returns the schema file path."""
    os.makedirs(out_dir, exist_ok=True)
    schema = graph.schema
    node_types = []
    for t, name in enumerate(schema.type_names):
        spec = {"name": name, "count": graph.node_counts[t]}
        feats = graph.features[t]
        is_onehot_id = (feats.shape[0] == feats.shape[1]
                        and np.array_equal(feats, np.eye(feats.shape[0])))
        if not is_onehot_id:
            fname = f"{name}_features.txt"
            spec["features"] = fname
            with open(os.path.join(out_dir, fname), "w") as f:
                for row in feats:
                    f.write(" ".join("%.17g" % x for x in row) + "\n")
        if t in graph.labels:
            fname = f"{name}_labels.txt"
            spec["labels"] = fname
            with open(os.path.join(out_dir, fname), "w") as f:
                for i, y in enumerate(graph.labels[t]):
                    if y >= 0:
                        f.write(f"{i} {y}\n")
        if t in graph.masks:
            fname = f"{name}_masks.txt"
            spec["masks"] = fname
            with open(os.path.join(out_dir, fname), "w") as f:
                for split, idx in graph.masks[t].items():
                    for i in idx:
                        f.write(f"{i} {split}\n")
        node_types.append(spec)

    relations = []
    for r, rel in enumerate(schema.relations):
        fname = f"{rel.name.replace('-', '_')}_edges.txt"
        edges = graph.edges(r)
        with open(os.path.join(out_dir, fname), "w") as f:
            for u, v in edges:
                f.write(f"{u} {v}\n")
        relations.append({
            "name": rel.name,
            "source": schema.type_names[rel.source],
            "target": schema.type_names[rel.target],
            "edges": fname,
            "expected_edges": len(edges),
        })

    schema_path = os.path.join(out_dir, "schema.json")
    with open(schema_path, "w") as f:
        json.dump({"node_types": node_types, "relations": relations},
                  f, indent=2, sort_keys=True)
        f.write("\n")
    return schema_path


# ---------------------------------------------------------------------------
# metapath text notation

def parse_metapath(text: str, schema: GraphSchema) -> Metapath:
    """Parse notation like "M-D-M" or, with explicit relations, "U-[friend]-U".

    Consecutive type symbols must be connected by exactly one declared
    relation unless an explicit [relation] annotation disambiguates.
    """
    tokens = []
    i = 0
    while i < len(text):
        if text[i] == "-":
            i += 1
            continue
        if text[i] == "[":
            j = text.index("]", i)
            tokens.append(("rel", text[i + 1:j]))
            i = j + 1
        else:
            j = i
            while j < len(text) and text[j] not in "-[":
                j += 1
            tokens.append(("type", text[i:j]))
            i = j

    types = []
    rels = []
    pending_rel = None
    for kind, tok in tokens:
        if kind == "rel":
            if pending_rel is not None or not types:
                raise SchemaError(f"misplaced relation annotation in {text!r}")
            pending_rel = tok
        else:
            t = schema.type_id(tok)
            if types:
                a, b = types[-1], t
                if pending_rel is not None:
                    r = schema.relation_id(pending_rel)
                    if r not in schema.relations_between(a, b):
                        raise SchemaError(
                            f"relation {pending_rel!r} does not connect "
                            f"{schema.type_names[a]} and {schema.type_names[b]}")
                    pending_rel = None
                else:
                    candidates = schema.relations_between(a, b)
                    if not candidates:
                        raise SchemaError(
                            f"no relation between {schema.type_names[a]!r} and "
                            f"{schema.type_names[b]!r}")
                    if len(candidates) > 1:
                        raise SchemaError(
                            f"ambiguous relation between {schema.type_names[a]!r} and "
                            f"{schema.type_names[b]!r}; annotate with [name]")
                    r = candidates[0]
                rels.append(r)
            types.append(t)
    if pending_rel is not None:
        raise SchemaError(f"dangling relation annotation in {text!r}")
    if len(types) < 2:
        raise SchemaError(f"metapath {text!r} needs at least two node types")
    path = Metapath(tuple(types), tuple(rels))
    symmetric = (path.types == path.types[::-1]
                 and path.relations == path.relations[::-1])
    return Metapath(path.types, path.relations, symmetric)


# ---------------------------------------------------------------------------
# embeddings export

def write_embeddings(path: str, embeddings: dict[int, np.ndarray],
                     schema: GraphSchema) -> None:
    """Header line "count dim", then one "Type:index v1 ... vd" line per node."""
    dims = {e.shape[1] for e in embeddings.values()}
    if len(dims) != 1:
        raise ValueError("all embedding matrices must share one dimension")
    total = sum(e.shape[0] for e in embeddings.values())
    with open(path, "w") as f:
        f.write(f"{total} {dims.pop()}\n")
        for t in sorted(embeddings):
            name = schema.type_names[t]
            for i, row in enumerate(embeddings[t]):
                f.write(f"{name}:{i} " + " ".join("%.17g" % x for x in row) + "\n")


def read_embeddings(path: str, schema: GraphSchema) -> dict[int, np.ndarray]:
    with open(path) as f:
        header = f.readline().split()
        total, dim = int(header[0]), int(header[1])
        rows: dict[int, dict[int, np.ndarray]] = {}
        for line in f:
            parts = line.split()
            handle, vals = parts[0], parts[1:]
            name, idx = handle.rsplit(":", 1)
            t = schema.type_id(name)
            rows.setdefault(t, {})[int(idx)] = np.array([float(x) for x in vals])
    out = {}
    count = 0
    for t, d in rows.items():
        mat = np.zeros((max(d) + 1, dim))
        for i, row in d.items():
            mat[i] = row
        out[t] = mat
        count += len(d)
    if count != total:
        raise DataError(f"{path}: header declares {total} rows, found {count}")
    return out


# ---------------------------------------------------------------------------
# parameter checkpoints

_CKPT_MAGIC = b"MGNC"
_CKPT_VERSION = 1


def config_to_dict(config: ModelConfig, schema: GraphSchema) -> dict:
    d = {k: v for k, v in config.__dict__.items() if k != "metapaths"}
    d["metapaths"] = {
        schema.type_names[t]: [p.label(schema) for p in paths]
        for t, paths in config.metapaths.items()
    }
    return d


def save_checkpoint(path: str, params: ModelParams, config: ModelConfig,
                    schema: GraphSchema) -> None:
    """Versioned binary layout: magic, version, length-prefixed JSON header
    (config echo plus ordered parameter names and shapes), then each
    parameter's float64 little-endian buffer in header order."""
    header = {
        "config": config_to_dict(config, schema),
        "params": [{"name": k, "shape": list(v.data.shape)} for k, v in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<II", _CKPT_VERSION, len(blob)))
        f.write(blob)
        for _k, v in params.items():
            f.write(v.data.astype("<f8").tobytes())


def load_checkpoint(path: str):
    """Returns (ModelParams, config dict)."""
    with open(path, "rb") as f:
        if f.read(4) != _CKPT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != _CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        tensors = {}
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            n = int(np.prod(shape)) if shape else 1
            buf = np.frombuffer(f.read(8 * n), dtype="<f8").copy().reshape(shape)
            tensors[spec["name"]] = Tensor(buf, requires_grad=True)
    return ModelParams(tensors), header["config"]
