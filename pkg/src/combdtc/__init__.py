"""Comb tensor-network simulation of a kicked random Ising chain with delayed coherent feedback."""

from .errors import (
    CombDtcError,
    ConfigError,
    ContractError,
    InvalidParameter,
    NumericalFailure,
    ResourceGuardError,
    ShapeError,
)
from .model import DisorderRealization, GateSet, ModelParams, build_gates, sample_disorder
from .comb import CombMps, TruncationPolicy, init_neel_vacuum
from .engine import (
    AveragedSeries,
    MagnetizationSeries,
    RunConfig,
    deviation_trace,
    disorder_average,
    run_engine,
    run_floquet,
    staggered_magnetization,
)
from .dense import compare_series, run_dense_qsse, run_lindblad_markov

__version__ = "0.1.0"
