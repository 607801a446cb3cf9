"""The three-stage aggregation network.

A forward pass is: type-specific content transformation, then per layer
intra-metapath aggregation (instance encoding + multi-head attention over
each target node's instance block) followed by inter-metapath attention
and a layer output projection.  Hidden layers keep the latent width, the
final layer maps to the output dimension (or to class probabilities in
classification mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .graph import HetGraph, Metapath
from .metapaths import InstanceTable
from .rng import substream
from .tensor import SegmentLayout, Tensor

LEAKY_SLOPE = 0.2

_ACTIVATIONS = {
    "elu": T.elu,
    "tanh": T.tanh,
    "identity": lambda x: x,
}

ENCODERS = ("mean", "linear", "rotation")


@dataclass
class ModelConfig:
    hidden_dim: int = 64          # latent width, must be even (complex pairs)
    attn_vec_dim: int = 128       # width of the metapath-summary attention space
    out_dim: int = 64             # final embedding width (class count when classify)
    num_heads: int = 8
    num_layers: int = 1
    encoder: str = "rotation"
    dropout: float = 0.5
    activation: str = "elu"
    classify: bool = False        # final layer emits row-softmax probabilities
    endpoints_only: bool = False  # encoders see only (t_0, t_n); ablation switch
    metapaths: dict = field(default_factory=dict)  # type_id -> list[Metapath]

    def __post_init__(self):
        if self.hidden_dim % 2:
            raise ValueError("hidden_dim must be even")
        if self.num_heads < 1 or self.num_layers < 1:
            raise ValueError("num_heads and num_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class ModelParams:
    """Named learnable tensors, addressable individually for checkpointing
    and gradient checks."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def items(self):
        return self._tensors.items()

    def copy(self) -> "ModelParams":
        return ModelParams({
            k: Tensor(v.data.copy(), requires_grad=True)
            for k, v in self._tensors.items()
        })

    def load_state(self, other: "ModelParams") -> None:
        for k, v in self._tensors.items():
            v.data[...] = other[k].data


def _glorot(rng, shape):
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(graph: HetGraph, config: ModelConfig, seed: int = 0) -> ModelParams:
    """Glorot-style init for matrices and attention vectors, uniform phases,
    zero biases."""
    rng = substream(seed, "param-init")
    schema = graph.schema
    d = config.hidden_dim
    k = config.num_heads
    dm = config.attn_vec_dim
    tensors: dict[str, Tensor] = {}

    def param(name, data):
        tensors[name] = Tensor(data, requires_grad=True)

    for t, name in enumerate(schema.type_names):
        param(f"feat_proj/{name}", _glorot(rng, (graph.feature_dim(t), d)))

    seen_paths = set()
    seen_rels = set()
    any_skip = False
    for t in range(schema.num_types):
        paths = config.metapaths.get(t, [])
        if not paths:
            any_skip = True
            continue
        for p in paths:
            label = p.label(schema)
            if label in seen_paths:
                continue
            seen_paths.add(label)
            param(f"attn/{label}", _glorot(rng, (2 * d, k)))
            if config.encoder == "linear":
                param(f"enc_linear/{label}", _glorot(rng, (d, d)))
            if config.encoder == "rotation":
                for r in p.relations:
                    seen_rels.add(r)
        param(f"inter_M/{schema.type_names[t]}", _glorot(rng, (k * d, dm)))
        param(f"inter_b/{schema.type_names[t]}", np.zeros(dm))
        param(f"inter_q/{schema.type_names[t]}", _glorot(rng, (dm,)))
    for r in sorted(seen_rels):
        rel_name = schema.relations[r].name
        param(f"enc_phase/{rel_name}", rng.uniform(-np.pi, np.pi, size=d // 2))

    for l in range(config.num_layers):
        out = d if l < config.num_layers - 1 else config.out_dim
        param(f"out_proj/{l}", _glorot(rng, (k * d, out)))
        if any_skip:
            param(f"skip_proj/{l}", _glorot(rng, (d, out)))
    return ModelParams(tensors)


# ---------------------------------------------------------------------------
# the individual stages

def content_transform(graph: HetGraph, params: ModelParams) -> dict[int, Tensor]:
    """Project each type's raw features into the shared latent space."""
    out = {}
    for t, name in enumerate(graph.schema.type_names):
        out[t] = T.matmul(Tensor(graph.features[t]), params[f"feat_proj/{name}"])
    return out


def encode_instances(h: dict[int, Tensor], table: InstanceTable,
                     params: ModelParams, config: ModelConfig) -> Tensor:
    """Encode every instance of the table into one latent vector each.

    Rotation walks the instance from t_0 to t_n, multiplying the running
    state by each step's unit-modulus relation rotation; mean and linear
    treat the instance as a set.
    """
    seqs = table.sequences
    ptypes = table.position_types
    xs = [T.gather_rows(h[ptypes[j]], seqs[:, j]) for j in range(seqs.shape[1])]
    rels = list(table.step_relations)
    if config.endpoints_only and len(xs) > 2:
        # neighbors-only ablation: the encoder sees just the two endpoints
        xs = [xs[0], xs[-1]]
        rels = []

    if config.encoder == "rotation" and rels:
        o = xs[0]
        for i, x in enumerate(xs[1:]):
            theta = params[f"enc_phase/{_rel_name(table, rels[i])}"]
            rot = T.concat([T.cos(theta), T.sin(theta)], axis=0)
            o = T.add(x, T.complex_hadamard(o, rot))
        return T.scale(o, 1.0 / len(xs))

    acc = xs[0]
    for x in xs[1:]:
        acc = T.add(acc, x)
    mean = T.scale(acc, 1.0 / len(xs))
    if config.encoder == "linear" and not config.endpoints_only:
        label = _path_label(table)
        mean = T.matmul(mean, params[f"enc_linear/{label}"])
    return mean


def intra_metapath_aggregate(h_target: Tensor, table: InstanceTable,
                             encoded: Tensor, attn: Tensor,
                             activation=T.elu, collect=None) -> Tensor:
    """Multi-head attention over each target node's instance block.

    Per head: scores are a leaky-rectified projection of [h_v || h_inst],
    softmax-normalized within the block; the block's encoded vectors are
    then combined with those weights.  Heads are concatenated; targets
    with empty blocks get the zero vector.
    """
    layout = SegmentLayout(table.offsets)
    k = attn.data.shape[1]
    d = encoded.data.shape[1]
    target_rows = T.gather_rows(h_target, layout.ids)
    scores = T.leaky_relu(T.matmul(T.concat([target_rows, encoded], axis=1), attn),
                          slope=LEAKY_SLOPE)
    alpha = T.segment_softmax(scores, layout)            # (n_inst, K)
    if collect is not None:
        collect.append((layout, alpha.data))
    combined = T.segment_multihead_sum(encoded, alpha, layout)  # (n_targets, K, d)
    out = activation(T.reshape(combined, (layout.num_segments, k * d)))
    nonempty = (layout.lengths > 0).astype(np.float64)[:, None]
    return T.mul(out, Tensor(nonempty))


def inter_metapath_aggregate(per_path: list[Tensor], m_mat: Tensor, bias: Tensor,
                             q_vec: Tensor, collect=None) -> Tensor:
    """Fuse a type's metapath-specific vectors with shared attention weights.

    Each metapath is summarized by the mean (over the type's nodes) of a
    tanh projection; the softmax of the summaries' scores gives one weight
    per metapath, shared by all nodes of the type.
    """
    if not per_path:
        raise ValueError("empty metapath set")
    scores = []
    for hp in per_path:
        s = T.mean_rows(T.tanh(T.add(T.matmul(hp, m_mat), bias)))
        scores.append(T.reshape(T.matmul(s, q_vec), (1,)))
    evec = T.concat(scores, axis=0)
    beta = T.segment_softmax(evec, SegmentLayout([0, len(per_path)]))
    if collect is not None:
        collect.append(beta.data)
    fused = None
    for i, hp in enumerate(per_path):
        w = T.reshape(T.gather_rows(beta, [i]), (1, 1))
        term = T.mul(hp, w)
        fused = term if fused is None else T.add(fused, term)
    return fused


def output_projection(fused: Tensor, w_out: Tensor, activation=T.elu) -> Tensor:
    return activation(T.matmul(fused, w_out))


def _path_label(table: InstanceTable) -> str:
    return getattr(table, "label")


def _rel_name(table: InstanceTable, rel_id: int) -> str:
    return table.relation_names[rel_id]


def attach_labels(tables: dict, schema) -> None:
    """Annotate tables with schema names so parameters can be addressed by
    stable string keys."""
    for table in tables.values():
        table.label = table.path.label(schema)
        table.relation_names = {
            r: schema.relations[r].name for r in table.path.relations
        }


def forward(graph: HetGraph, tables: dict[str, InstanceTable], params: ModelParams,
            config: ModelConfig, *, train: bool = False, drop_rng=None,
            collect_attention: dict | None = None) -> dict[int, Tensor]:
    """Full multi-layer pass; returns one embedding matrix per node type.

    tables maps a metapath label to its InstanceTable and must cover every
    metapath in config.metapaths.  Deterministic given params and (when
    dropout is active) drop_rng.
    """
    schema = graph.schema
    act = _ACTIVATIONS[config.activation]
    attach_labels(tables, schema)
    if train and config.dropout > 0 and drop_rng is None:
        raise ValueError("training with dropout requires drop_rng")

    def drop(x):
        return T.dropout(x, config.dropout, drop_rng, train)

    h = {t: drop(ht) for t, ht in content_transform(graph, params).items()}

    for l in range(config.num_layers):
        last = l == config.num_layers - 1
        new_h: dict[int, Tensor] = {}
        for t in range(schema.num_types):
            paths = config.metapaths.get(t, [])
            if not paths:
                z = T.matmul(h[t], params[f"skip_proj/{l}"])
                new_h[t] = T.row_softmax(z) if (last and config.classify) else act(z)
                continue
            per_path = []
            for p in paths:
                label = p.label(schema)
                table = tables[label]
                encoded = drop(encode_instances(h, table, params, config))
                alpha_sink = None
                if collect_attention is not None:
                    alpha_sink = collect_attention.setdefault("alpha", [])
                hp = intra_metapath_aggregate(
                    drop(h[t]), table, encoded, params[f"attn/{label}"],
                    activation=act, collect=alpha_sink)
                per_path.append(hp)
            beta_sink = None
            if collect_attention is not None:
                beta_sink = collect_attention.setdefault("beta", [])
            tname = schema.type_names[t]
            fused = inter_metapath_aggregate(
                per_path, params[f"inter_M/{tname}"], params[f"inter_b/{tname}"],
                params[f"inter_q/{tname}"], collect=beta_sink)
            z = T.matmul(fused, params[f"out_proj/{l}"])
            new_h[t] = T.row_softmax(z) if (last and config.classify) else act(z)
        h = new_h
    return h
