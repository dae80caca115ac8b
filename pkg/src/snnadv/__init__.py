"""Spiking-network dynamics, surrogate-gradient attacks, and multi-model
adversarial evaluation at desk scale."""

from .attacks import AttackConfig, AttackReport, auto_saga, fgsm, mim, pgd, project, saga
from .attention import TinyAttentionNet, attention_rollout, ones_mask
from .ann import AnnNet, build_cnn, build_mlp
from .convert import convert_ann_to_snn, fine_tune
from .dynamics import NeuronConfig, SpikingLayer, SpikingNet, SynapseConfig, build_snn_mlp
from .harness import (EvalSet, multi_model_comparison, select_eval_set, surrogate_sweep,
                      transfer_matrix, transferability)
from .surrogate import SurrogateSpec, heaviside, surrogate_grad
from .train import Adam, SGD, evaluate, train_epochs

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackReport", "auto_saga", "fgsm", "mim", "pgd", "project", "saga",
    "TinyAttentionNet", "attention_rollout", "ones_mask",
    "AnnNet", "build_cnn", "build_mlp",
    "convert_ann_to_snn", "fine_tune",
    "NeuronConfig", "SpikingLayer", "SpikingNet", "SynapseConfig", "build_snn_mlp",
    "EvalSet", "multi_model_comparison", "select_eval_set", "surrogate_sweep",
    "transfer_matrix", "transferability",
    "SurrogateSpec", "heaviside", "surrogate_grad",
    "Adam", "SGD", "evaluate", "train_epochs",
]
