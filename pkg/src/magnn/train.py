"""Training loops: cross-entropy and negative-sampling objectives, an
adaptive-moment optimizer with L2 penalty, and early stopping on
validation loss."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .graph import HetGraph
from .model import ModelConfig, ModelParams, forward, init_params
from .rng import substream
from .tensor import Tensor, backward, zero_grads


@dataclass
class TrainConfig:
    mode: str = "semi-supervised"      # or "unsupervised"
    learning_rate: float = 0.005
    weight_decay: float = 0.001
    max_epochs: int = 100
    patience: int = 30
    dropout: float = 0.5
    seed: int = 0
    negatives_per_positive: int = 1
    positive_relation: str | None = None   # unsupervised mode
    val_fraction: float = 0.1              # held-out positives when no explicit split

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.mode not in ("semi-supervised", "unsupervised"):
            raise ValueError(f"unknown training mode {self.mode!r}")


@dataclass
class TrainReport:
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    wall_clock: float = 0.0


# ---------------------------------------------------------------------------
# losses

def semi_supervised_loss(probs: Tensor, labels: np.ndarray, labeled_idx) -> Tensor:
    """Total cross entropy of predicted probability rows over labeled nodes."""
    labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.data.shape
    y = labels[labeled_idx]
    if np.any(y < 0) or np.any(y >= c):
        raise ValueError("label index out of range")
    rows = probs.data[labeled_idx]
    if np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-9) or np.any(rows < -1e-12):
        raise ValueError("rows must be probability vectors")
    flat = T.reshape(probs, (n * c,))
    picked = T.gather_rows(flat, labeled_idx * c + y)
    return T.scale(T.tsum(T.clamped_log(picked)), -1.0)


def _pair_scores(embeddings: dict[int, Tensor], pairs) -> Tensor:
    """Row-wise dot products h_u . h_v for pairs = (type_u, type_v, u_idx, v_idx)."""
    tu, tv, ui, vi = pairs
    hu = T.gather_rows(embeddings[tu], np.asarray(ui, dtype=np.int64))
    hv = T.gather_rows(embeddings[tv], np.asarray(vi, dtype=np.int64))
    return T.tsum(T.mul(hu, hv), axis=1)


def unsupervised_loss(embeddings: dict[int, Tensor], positives, negatives) -> Tensor:
    """Negative-sampling objective: -sum log s(h_u.h_v) over observed pairs
    minus sum log s(-h_u'.h_v') over sampled unobserved pairs."""
    loss = None
    if len(positives[2]):
        pos = T.scale(T.tsum(T.clamped_log(T.sigmoid(_pair_scores(embeddings, positives)))), -1.0)
        loss = pos
    if len(negatives[2]):
        s = _pair_scores(embeddings, negatives)
        neg = T.scale(T.tsum(T.clamped_log(T.sigmoid(T.scale(s, -1.0)))), -1.0)
        loss = neg if loss is None else T.add(loss, neg)
    if loss is None:
        raise ValueError("no pairs supplied")
    return loss


def negative_sample(positives, n_u: int, n_v: int, count: int,
                    rng: np.random.Generator):
    """Uniform draws of unobserved (u, v) pairs, rejecting observed ones.

    Draws are with replacement across calls; raises if every pair is observed.
    """
    observed = set(map(tuple, positives))
    if len(observed) >= n_u * n_v:
        raise ValueError("complement of the positive set is empty")
    us = np.empty(count, dtype=np.int64)
    vs = np.empty(count, dtype=np.int64)
    got = 0
    while got < count:
        batch = max(count - got, 16)
        cu = rng.integers(0, n_u, size=batch)
        cv = rng.integers(0, n_v, size=batch)
        for u, v in zip(cu, cv):
            if (u, v) in observed:
                continue
            us[got], vs[got] = u, v
            got += 1
            if got == count:
                break
    return us, vs


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adaptive-moment estimation; the L2 penalty is added to the gradient."""

    def __init__(self, params: list[Tensor], lr: float, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# loop

def _labeled_type(graph: HetGraph, config: ModelConfig) -> int:
    for t, y in graph.labels.items():
        if y is not None and t in config.metapaths:
            return t
    raise ValueError("semi-supervised mode requires a labeled node type with metapaths")


def train(graph: HetGraph, tables, model_config: ModelConfig,
          train_config: TrainConfig, *, val_pairs=None, params: ModelParams | None = None):
    """Full-batch training; returns (best-validation params, TrainReport)."""
    cfg = model_config
    tc = train_config
    cfg.dropout = tc.dropout
    start = time.perf_counter()

    if tc.mode == "semi-supervised":
        t_lab = _labeled_type(graph, cfg)
        labels = graph.labels[t_lab]
        masks = graph.masks.get(t_lab, {})
        if "train" not in masks or "val" not in masks:
            raise ValueError("semi-supervised mode requires train and val masks")
        cfg.classify = True
        cfg.out_dim = int(labels.max()) + 1
    else:
        if tc.positive_relation is None:
            raise ValueError("unsupervised mode requires a designated positive relation")
        rel_id = graph.schema.relation_id(tc.positive_relation)
        rel = graph.schema.relations[rel_id]
        all_pos = np.array(graph.edges(rel_id), dtype=np.int64).reshape(-1, 2)
        if val_pairs is None:
            rng = substream(tc.seed, "val-split")
            perm = rng.permutation(len(all_pos))
            n_val = max(1, int(round(tc.val_fraction * len(all_pos))))
            val_pos = all_pos[perm[:n_val]]
            train_pos = all_pos[perm[n_val:]]
        else:
            val_pos = np.asarray(val_pairs, dtype=np.int64).reshape(-1, 2)
            train_pos = all_pos
        reject = np.concatenate([all_pos, val_pos], axis=0)
        n_u = graph.num_nodes(rel.source)
        n_v = graph.num_nodes(rel.target)
        neg_rng = substream(tc.seed, "val-negatives")
        vu, vv = negative_sample(reject, n_u, n_v,
                                 len(val_pos) * tc.negatives_per_positive, neg_rng)
        val_positives = (rel.source, rel.target, val_pos[:, 0], val_pos[:, 1])
        val_negatives = (rel.source, rel.target, vu, vv)

    if params is None:
        params = init_params(graph, cfg, seed=tc.seed)
    opt = Adam(params.tensors(), lr=tc.learning_rate, weight_decay=tc.weight_decay)

    report = TrainReport()
    best_val = np.inf
    best_params = params.copy()
    since_improve = 0

    for epoch in range(1, tc.max_epochs + 1):
        drop_rng = substream(tc.seed, f"dropout/{epoch}")
        zero_grads(params.tensors())
        out = forward(graph, tables, params, cfg, train=True, drop_rng=drop_rng)
        if tc.mode == "semi-supervised":
            loss = semi_supervised_loss(out[t_lab], labels, masks["train"])
        else:
            step_rng = substream(tc.seed, f"train-negatives/{epoch}")
            nu, nv = negative_sample(train_pos, n_u, n_v,
                                     len(train_pos) * tc.negatives_per_positive, step_rng)
            loss = unsupervised_loss(
                out, (rel.source, rel.target, train_pos[:, 0], train_pos[:, 1]),
                (rel.source, rel.target, nu, nv))
        backward(loss)
        opt.step()

        eval_out = forward(graph, tables, params, cfg, train=False)
        if tc.mode == "semi-supervised":
            val_loss = float(semi_supervised_loss(eval_out[t_lab], labels, masks["val"]).data)
        else:
            val_loss = float(unsupervised_loss(eval_out, val_positives, val_negatives).data)

        report.train_losses.append(float(loss.data))
        report.val_losses.append(val_loss)
        report.stopped_epoch = epoch
        if not np.isfinite(val_loss):
            raise FloatingPointError(f"validation loss diverged at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            report.best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= tc.patience:
                break

    report.wall_clock = time.perf_counter() - start
    return best_params, report


def write_manifest(path, run_config: dict, report: TrainReport) -> None:
    """Run manifest: config echo, seed, and per-epoch losses, for exact rerun."""
    payload = {
        "config": run_config,
        "best_epoch": report.best_epoch,
        "stopped_epoch": report.stopped_epoch,
        "wall_clock_seconds": round(report.wall_clock, 3),
        "epochs": [
            {"epoch": i + 1, "train_loss": tr, "val_loss": va}
            for i, (tr, va) in enumerate(zip(report.train_losses, report.val_losses))
        ],
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
