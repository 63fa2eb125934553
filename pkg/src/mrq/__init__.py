"""Multi-target regression via output-space quantization (MRQ, eMRQ, eMRQr)."""

__version__ = "0.1.0"

from .dataset import Dataset, Holdout, KFold, Standardizer, fit_standardizer, load_dataset, profile_dataset, split
from .evaluation import armae, average_ranks, friedman_test, nemenyi_cd, run_experiment
from .learners import fit_bagging, fit_tree
from .models import EmrqConfig, MtrModel, TrainConfig, train_emrq, train_mrq, train_st
from .quantizer import Codebook, KmeansConfig, assign, kmeans_fit, quantization_error, sample_subsets
from .serialize import load_model, save_model

__all__ = [
    "Codebook",
    "Dataset",
    "EmrqConfig",
    "Holdout",
    "KFold",
    "KmeansConfig",
    "MtrModel",
    "Standardizer",
    "TrainConfig",
    "armae",
    "assign",
    "average_ranks",
    "fit_bagging",
    "fit_standardizer",
    "fit_tree",
    "friedman_test",
    "kmeans_fit",
    "load_dataset",
    "load_model",
    "nemenyi_cd",
    "profile_dataset",
    "quantization_error",
    "run_experiment",
    "sample_subsets",
    "save_model",
    "split",
    "train_emrq",
    "train_mrq",
    "train_st",
]
