"""Dual-embedding collaborative filtering for implicit feedback.

Each user and item carries two trainable embeddings: a primitive one
indexed by its ID and a history one aggregated from its interaction
partners. Four scorers build on the pair (element-wise product, MLP over
concatenations, their fusion, and a plain inner-product form), trained
from scratch with manual gradients and evaluated with the leave-one-out
ranking protocol (HR@k / NDCG@k against fixed negative candidates).
"""

from .data import (InteractionStore, TestInstance, TrainBatch,
                   holdout_validation, load_dataset,
                   sample_candidate_negatives, sample_epoch)
from .checkpoint import load_model, load_tensors, save_model, save_tensors
from .evaluate import EvalReport, RankedList, evaluate, hr_at_k, ndcg_at_k, rank_candidates
from .models import (MODEL_KINDS, ModelSpec, build_model, fuse, recover_fism,
                     recover_svdpp)
from .optim import Adam, SGD, make_optimizer
from .synthetic import generate_dataset
from .tensor import SeededRng
from .train import (PretrainFuseResult, RunConfig, TrainResult, pretrain_fuse,
                    run_sweep, train_model)

__version__ = "0.1.0"

__all__ = [
    "Adam", "EvalReport", "InteractionStore", "MODEL_KINDS", "ModelSpec",
    "PretrainFuseResult", "RankedList", "RunConfig", "SGD", "SeededRng",
    "TestInstance", "TrainBatch", "TrainResult", "build_model", "evaluate",
    "fuse", "generate_dataset", "holdout_validation", "hr_at_k",
    "load_dataset", "load_model", "load_tensors", "make_optimizer",
    "ndcg_at_k", "pretrain_fuse", "rank_candidates", "recover_fism",
    "recover_svdpp", "run_sweep", "sample_candidate_negatives",
    "sample_epoch", "save_model", "save_tensors", "train_model",
]
