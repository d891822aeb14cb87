"""Graph regularized auto-encoders for low-dimensional data representation."""
from .autoencoder import (LayerParams, TrainConfig, decode, encode, gae_gradient,
                          gae_objective, sae_gradient, sae_objective, sigmoid, train_layer)
from .dataset import DataSet, load_dataset, make_blobs, mask_labels, subsample_classes
from .evaluate import (ExperimentReport, accuracy, kmeans, normalized_mutual_information,
                       pca_reduce, run_experiment)
from .graph import (AffinityGraph, build_epsilon_graph, build_knn_graph, build_l1_graph,
                    build_semi_graph, graph_error_rate, regularizer_matrix)
from .stack import GaeModel, encode_stack, finetune_full, finetune_graph_only, train_stack

__version__ = "0.1.0"
