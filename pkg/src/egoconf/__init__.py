"""Batch-parallel efficient global optimization for mixed parameter spaces."""

from .allcnn import NetworkDescriptor, allcnn_space, descriptor_parse, descriptor_serialize, to_descriptor
from .benchmarks import benchmark_names, benchmark_space, builtin_benchmark
from .evalproto import (
    BenchmarkEvaluator,
    EvalRequest,
    EvalResponse,
    Evaluator,
    SubprocessEvaluator,
)
from .forest import Forest, ForestParams, SurrogatePrediction
from .forest import fit as fit_forest
from .infill import InfillContext, mgf_criterion, mgf_criterion_batch, sample_temperatures
from .loop import Archive, EvaluationRecord, LoopConfig, load_archive, propose_batch, resume, run
from .mies import MiesParams, MiesResult, maximize
from .sampler import DesignPlan, lhs_sample, uniform_sample
from .space import (
    Configuration,
    InvalidConfigurationError,
    ParameterSpace,
    ParameterSpec,
    SpaceError,
    boolean,
    categorical,
    continuous,
    integer,
)

__version__ = "0.1.0"

__all__ = [
    "Archive",
    "BenchmarkEvaluator",
    "Configuration",
    "DesignPlan",
    "EvalRequest",
    "EvalResponse",
    "EvaluationRecord",
    "Evaluator",
    "Forest",
    "ForestParams",
    "InfillContext",
    "InvalidConfigurationError",
    "LoopConfig",
    "MiesParams",
    "MiesResult",
    "NetworkDescriptor",
    "ParameterSpace",
    "ParameterSpec",
    "SpaceError",
    "SubprocessEvaluator",
    "SurrogatePrediction",
    "allcnn_space",
    "benchmark_names",
    "benchmark_space",
    "boolean",
    "builtin_benchmark",
    "categorical",
    "continuous",
    "descriptor_parse",
    "descriptor_serialize",
    "fit_forest",
    "integer",
    "lhs_sample",
    "load_archive",
    "maximize",
    "mgf_criterion",
    "mgf_criterion_batch",
    "propose_batch",
    "resume",
    "run",
    "sample_temperatures",
    "to_descriptor",
    "uniform_sample",
]
