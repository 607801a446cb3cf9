"""Metapath-aggregated graph neural network for heterogeneous graph embedding."""

from .graph import (GraphSchema, HetGraph, Metapath, Relation, SchemaError,
                    build_graph, validate_metapath)
from .metapaths import (InstanceTable, build_metapath_graph, build_tables,
                        dump_instance_table, enumerate_instances,
                        load_instance_table, metapath_neighbors)
from .model import ModelConfig, ModelParams, forward, init_params
from .train import (Adam, TrainConfig, TrainReport, negative_sample,
                    semi_supervised_loss, train, unsupervised_loss)
from .evaluate import (EvalReport, ablation_run, cluster_eval, link_predict_eval,
                       linear_probe, synth_hetgraph, synth_linkpred_graph)
from .data import (load_dataset, parse_metapath, read_embeddings,
                   save_checkpoint, load_checkpoint, write_dataset,
                   write_embeddings)

__version__ = "0.1.0"

__all__ = [
    "GraphSchema", "HetGraph", "Metapath", "Relation", "SchemaError",
    "build_graph", "validate_metapath",
    "InstanceTable", "build_metapath_graph", "build_tables",
    "dump_instance_table", "enumerate_instances", "load_instance_table",
    "metapath_neighbors",
    "ModelConfig", "ModelParams", "forward", "init_params",
    "Adam", "TrainConfig", "TrainReport", "negative_sample",
    "semi_supervised_loss", "train", "unsupervised_loss",
    "EvalReport", "ablation_run", "cluster_eval", "link_predict_eval",
    "linear_probe", "synth_hetgraph", "synth_linkpred_graph",
    "load_dataset", "parse_metapath", "read_embeddings",
    "save_checkpoint", "load_checkpoint", "write_dataset", "write_embeddings",
]
