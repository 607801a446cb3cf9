"""Downstream evaluation: linear-probe classification, k-means clustering,
link-prediction ranking metrics, ablation harness, and synthetic graph
generators for desk-scale verification."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import (adjusted_rand_score, average_precision_score,
                             f1_score, normalized_mutual_info_score,
                             roc_auc_score)

from .graph import GraphSchema, HetGraph, Metapath, Relation, build_graph, validate_metapath
from .metapaths import build_tables
from .model import ModelConfig, forward
from .rng import substream
from .train import TrainConfig, train

PROBE_FRACTIONS = (0.2, 0.4, 0.6, 0.8)


@dataclass
class EvalReport:
    task: str
    metrics: dict[str, float]
    train_fraction: float | None = None
    runs: int = 1
    variant: str | None = None

    def to_json(self) -> str:
        return json.dumps({
            "task": self.task,
            "metrics": {k: round(float(v), 6) for k, v in self.metrics.items()},
            "train_fraction": self.train_fraction,
            "runs": self.runs,
            "variant": self.variant,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EvalReport":
        d = json.loads(line)
        return cls(d["task"], d["metrics"], d.get("train_fraction"),
                   d.get("runs", 1), d.get("variant"))


# ---------------------------------------------------------------------------
# frozen-embedding probes

def linear_probe(embeddings: np.ndarray, labels: np.ndarray,
                 train_fraction: float = 0.8, seed: int = 0, runs: int = 10):
    """Linear classifier on frozen embeddings, averaged over `runs` splits.

    Callers must pass only held-out (test-mask) rows; the probe itself
    splits them into its own train/eval parts.  Splits missing a class in
    the train part are resampled.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    classes = np.unique(labels)
    macro, micro = [], []
    for r in range(runs):
        rng = substream(seed, f"probe-split/{r}")
        for _attempt in range(100):
            perm = rng.permutation(n)
            n_train = max(len(classes), int(round(train_fraction * n)))
            tr, te = perm[:n_train], perm[n_train:]
            if len(np.unique(labels[tr])) == len(classes) and len(te):
                break
        else:
            raise ValueError("could not draw a split containing every class")
        clf = LogisticRegression(max_iter=1000)
        clf.fit(embeddings[tr], labels[tr])
        pred = clf.predict(embeddings[te])
        macro.append(f1_score(labels[te], pred, average="macro"))
        micro.append(f1_score(labels[te], pred, average="micro"))
    return float(np.mean(macro)), float(np.mean(micro))


def cluster_eval(embeddings: np.ndarray, labels: np.ndarray, k: int, seed: int = 0):
    """K-means with 10 restarts (best inertia kept), scored by NMI and ARI."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(labels):
        raise ValueError("k exceeds the number of points")
    rng = substream(seed, "kmeans")
    km = KMeans(n_clusters=k, n_init=10, random_state=int(rng.integers(2**31)))
    assign = km.fit_predict(embeddings)
    nmi = normalized_mutual_info_score(labels, assign)
    ari = adjusted_rand_score(labels, assign)
    return float(nmi), float(ari)


def link_predict_eval(embeddings: dict[int, np.ndarray], positives, negatives):
    """Tie-aware AUC and average precision of sigmoid(h_u . h_v) scores.

    positives/negatives: (type_u, type_v, u_idx, v_idx).
    """
    def scores(pairs):
        tu, tv, ui, vi = pairs
        hu = np.asarray(embeddings[tu])[np.asarray(ui, dtype=np.int64)]
        hv = np.asarray(embeddings[tv])[np.asarray(vi, dtype=np.int64)]
        dots = (hu * hv).sum(axis=1)
        return 1.0 / (1.0 + np.exp(-np.clip(dots, -500, 500)))

    sp, sn = scores(positives), scores(negatives)
    if len(sp) == 0 or len(sn) == 0:
        raise ValueError("empty test sets")
    y = np.concatenate([np.ones(len(sp)), np.zeros(len(sn))])
    s = np.concatenate([sp, sn])
    return float(roc_auc_score(y, s)), float(average_precision_score(y, s))


# ---------------------------------------------------------------------------
# synthetic graphs

def synth_hetgraph(classes: int = 3, movies: int = 300, directors: int = 300,
                   actors: int = 300, p_in: float = 0.05, p_out: float = 0.005,
                   feature_noise: float = 0.5, crew_noise: float | None = None,
                   seed: int = 0) -> HetGraph:
    """Movie/director/actor graph with class-homophilous edges.

    Every director and actor carries a latent class; a movie links to a
    crew member with probability p_in when classes agree, else p_out.
    Movie features are noisy one-hot class indicators; directors and
    actors are featureless (one-hot ids) unless crew_noise is given, in
    which case they get noisy class indicators too.  Movies get labels
    and 10%/10%/80% train/val/test masks.
    """
    if not 0.0 <= p_out < p_in <= 1.0:
        raise ValueError("require 0 <= p_out < p_in <= 1")
    rng = substream(seed, "synth-hetgraph")
    schema = GraphSchema(("M", "D", "A"),
                         (Relation("M-D", 0, 1), Relation("M-A", 0, 2)))
    m_cls = rng.integers(0, classes, size=movies)
    d_cls = rng.integers(0, classes, size=directors)
    a_cls = rng.integers(0, classes, size=actors)

    edges = []
    for rel_id, other_cls in ((0, d_cls), (1, a_cls)):
        prob = np.where(m_cls[:, None] == other_cls[None, :], p_in, p_out)
        hit = rng.random(prob.shape) < prob
        for u, v in zip(*np.nonzero(hit)):
            edges.append((rel_id, int(u), int(v)))

    feats = {0: np.eye(classes)[m_cls]
             + feature_noise * rng.standard_normal((movies, classes))}
    if crew_noise is not None:
        feats[1] = np.eye(classes)[d_cls] + crew_noise * rng.standard_normal((directors, classes))
        feats[2] = np.eye(classes)[a_cls] + crew_noise * rng.standard_normal((actors, classes))
    perm = rng.permutation(movies)
    n_tr = movies // 10
    masks = {0: {"train": np.sort(perm[:n_tr]),
                 "val": np.sort(perm[n_tr:2 * n_tr]),
                 "test": np.sort(perm[2 * n_tr:])}}
    return build_graph(schema, (movies, directors, actors), edges,
                       features=feats, labels={0: m_cls}, masks=masks)


def synth_linkpred_graph(users: int = 100, artists: int = 100, blocks: int = 5,
                         p_in: float = 0.7, p_out: float = 0.01, seed: int = 0):
    """Bipartite user/artist graph with planted preference blocks.

    Returns (graph, block assignment per user, per artist).
    """
    if not 0.0 <= p_out < p_in <= 1.0:
        raise ValueError("require 0 <= p_out < p_in <= 1")
    rng = substream(seed, "synth-linkpred")
    schema = GraphSchema(("U", "A"), (Relation("U-A", 0, 1),))
    u_blk = rng.integers(0, blocks, size=users)
    a_blk = rng.integers(0, blocks, size=artists)
    prob = np.where(u_blk[:, None] == a_blk[None, :], p_in, p_out)
    hit = rng.random(prob.shape) < prob
    edges = [(0, int(u), int(a)) for u, a in zip(*np.nonzero(hit))]
    graph = build_graph(schema, (users, artists), edges)
    return graph, u_blk, a_blk


def default_movie_metapaths(graph: HetGraph) -> dict[int, list[Metapath]]:
    """MDM and MAM for the synthetic movie graph."""
    md, ma = 0, 1
    return {0: [validate_metapath(graph, Metapath((0, 1, 0), (md, md))),
                validate_metapath(graph, Metapath((0, 2, 0), (ma, ma)))]}


# ---------------------------------------------------------------------------
# ablation harness

ABLATION_VARIANTS = ("feat", "nb", "sm", "avg", "linear", "rot")


def _strip_features(graph: HetGraph) -> HetGraph:
    stripped = build_graph(
        graph.schema, graph.node_counts,
        [(r, u, v) for r in range(len(graph.schema.relations))
         for (u, v) in graph.edges(r)],
        features=None,
        labels=dict(graph.labels),
        masks={t: dict(m) for t, m in graph.masks.items()})
    return stripped


def classification_eval(graph: HetGraph, tables, params, config: ModelConfig,
                        labeled_type: int, probe_fraction: float = 0.8,
                        seed: int = 0, probe_runs: int = 10) -> dict[str, float]:
    """Probe + clustering metrics on test-mask embeddings of the labeled type."""
    out = forward(graph, tables, params, config, train=False)
    emb = out[labeled_type].data
    test_idx = graph.masks[labeled_type]["test"]
    labels = graph.labels[labeled_type][test_idx]
    macro, micro = linear_probe(emb[test_idx], labels, probe_fraction,
                                seed=seed, runs=probe_runs)
    k = int(graph.labels[labeled_type].max()) + 1
    nmi, ari = cluster_eval(emb[test_idx], labels, k, seed=seed)
    return {"macro_f1": macro, "micro_f1": micro, "nmi": nmi, "ari": ari}


def ablation_run(variant: str, graph: HetGraph, metapaths: dict[int, list[Metapath]],
                 model_config: ModelConfig, train_config: TrainConfig,
                 probe_fraction: float = 0.8, probe_runs: int = 10,
                 cap: int | None = None) -> EvalReport:
    """One full train+eval cycle under an ablation variant."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")

    g = graph
    cfg = ModelConfig(**{**model_config.__dict__})
    cfg.metapaths = metapaths
    if variant == "feat":
        g = _strip_features(graph)
    elif variant == "nb":
        cfg.endpoints_only = True
    elif variant == "avg":
        cfg.encoder = "mean"
    elif variant == "linear":
        cfg.encoder = "linear"
    # "rot" and "sm" use the reference encoder

    labeled_type = next(t for t, y in g.labels.items() if y is not None)

    if variant == "sm":
        # train one model per metapath, keep the best validation loss
        best = None
        for p in metapaths[labeled_type]:
            sub_cfg = ModelConfig(**{**cfg.__dict__})
            sub_cfg.metapaths = {labeled_type: [p]}
            tables = build_tables(g, sub_cfg.metapaths, cap=cap, seed=train_config.seed)
            params, report = train(g, tables, sub_cfg, train_config)
            score = report.val_losses[report.best_epoch - 1]
            if best is None or score < best[0]:
                best = (score, params, sub_cfg, tables)
        _, params, cfg, tables = best
    else:
        tables = build_tables(g, cfg.metapaths, cap=cap, seed=train_config.seed)
        params, _report = train(g, tables, cfg, train_config)

    metrics = classification_eval(g, tables, params, cfg, labeled_type,
                                  probe_fraction, seed=train_config.seed,
                                  probe_runs=probe_runs)
    return EvalReport("ablation", metrics, train_fraction=probe_fraction,
                      runs=probe_runs, variant=variant)
