"""Backprop-free training of routed-area networks, with BP and gated-expert baselines."""

from .data import (
    BatchIterator,
    DATASETS,
    Dataset,
    load_dataset,
    load_delimited,
    load_idx,
    materialize_digits,
    normalize,
    normalize_split,
    stratified_split,
)
from .experiment import (
    ExperimentSpec,
    MetricsRecord,
    PRESETS,
    aggregate,
    grad_check_suite,
    run_many,
    run_preset,
    run_single,
)
from .layers import FcLayer, MoeLayer, SalLayer
from .network import Network, NetworkConfig, basic_config, build_network, deep_config
from .numerics import Activation, Prng, count_multiplies

__all__ = [
    "Activation",
    "BatchIterator",
    "DATASETS",
    "Dataset",
    "ExperimentSpec",
    "FcLayer",
    "MetricsRecord",
    "MoeLayer",
    "Network",
    "NetworkConfig",
    "PRESETS",
    "Prng",
    "SalLayer",
    "aggregate",
    "basic_config",
    "build_network",
    "count_multiplies",
    "deep_config",
    "grad_check_suite",
    "load_dataset",
    "load_delimited",
    "load_idx",
    "materialize_digits",
    "normalize",
    "normalize_split",
    "run_many",
    "run_preset",
    "run_single",
    "stratified_split",
]

__version__ = "0.1.0"
