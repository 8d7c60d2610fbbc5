"""Data-parallel SGD laboratory: synchronous, asynchronous and threshold-switched
hybrid gradient aggregation under simulated worker heterogeneity."""

from .data import Dataset, DatasetSplit, gen_synthetic, load_idx, shard, split
from .errors import ConfigError, DataError, FormatError, NumericError, SmoothSwitchError
from .harness import ComparisonSummary, ExperimentConfig, emit_csv, run_rounds, select, summarize, sweep
from .metrics import MetricsRecord, MetricsSeries
from .model import (
    Batch,
    GradientVector,
    ModelSpec,
    ParameterVector,
    evaluate,
    finite_diff_gradient,
    forward,
    gradient,
    init_params,
    nll_loss,
    sgd_apply,
)
from .server import AggregationPolicy, GradientMessage, ParameterServer, UpdateOutcome, aggregate
from .sim import SimConfig, WorkerProfile, run_comparison, run_simulation, sample_delay
from .threshold import ThresholdSchedule, should_flush, threshold_at

__version__ = "0.1.0"
