"""Unsupervised link prediction on a planted-block bipartite graph.

Users and artists each belong to one of five hidden preference blocks;
edges are dense within a block and rare across blocks.  The model is
trained with the negative-sampling objective on 70% of the edges and
ranks held-out edges against unobserved pairs.

Run with:  python3 demos/03_link_prediction.py   (about half a minute)
"""

import numpy as np

from magnn.evaluate import link_predict_eval, synth_linkpred_graph
from magnn.graph import Metapath, build_graph
from magnn.metapaths import build_tables
from magnn.model import ModelConfig, forward
from magnn.rng import substream
from magnn.train import TrainConfig, negative_sample, train

DATA_SEED = 7
graph, u_blk, a_blk = synth_linkpred_graph(seed=DATA_SEED)
n_u, n_a = graph.node_counts
edges = np.array(graph.edges(0), dtype=np.int64)
print(f"{n_u} users, {n_a} artists, {len(edges)} edges")

# 70/10/20 edge split; the training graph sees only the training edges.
perm = substream(DATA_SEED, "edge-split").permutation(len(edges))
n_tr, n_val = int(0.7 * len(edges)), int(0.1 * len(edges))
tr, va, te = np.split(edges[perm], [n_tr, n_tr + n_val])
train_graph = build_graph(graph.schema, graph.node_counts,
                          [(0, int(u), int(v)) for u, v in tr])

# Symmetric metapaths on both sides: co-listeners and co-listened artists.
mps = {0: [Metapath((0, 1, 0), (0, 0))], 1: [Metapath((1, 0, 1), (0, 0))]}
tables = build_tables(train_graph, mps)
cfg = ModelConfig(hidden_dim=16, attn_vec_dim=16, out_dim=16, num_heads=2,
                  metapaths=mps)
tc = TrainConfig(mode="unsupervised", positive_relation="U-A", seed=0,
                 max_epochs=300, patience=100)
params, report = train(train_graph, tables, cfg, tc, val_pairs=va)
print(f"stopped at epoch {report.stopped_epoch}, "
      f"best epoch {report.best_epoch}")

emb = {t: h.data for t, h in
       forward(train_graph, tables, params, cfg, train=False).items()}

# Negatives are uniform unobserved pairs, never colliding with any edge.
nu, nv = negative_sample(edges, n_u, n_a, len(te),
                         substream(DATA_SEED, "test-negatives"))
auc, ap = link_predict_eval(emb, (0, 1, te[:, 0], te[:, 1]), (0, 1, nu, nv))
print(f"held-out ranking: AUC {auc:.3f}  AP {ap:.3f}")

# Sanity check: embeddings of same-block user/artist pairs should score
# higher than cross-block pairs.
dots = emb[0] @ emb[1].T
same = u_blk[:, None] == a_blk[None, :]
print(f"mean score within blocks {dots[same].mean():.2f}, "
      f"across blocks {dots[~same].mean():.2f}")
