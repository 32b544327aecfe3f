"""Simulator and analysis toolkit for asynchronous SGD under gradient delays."""

from .config import ConfigError, RunSpec, load_config, parse_config
from .delays import (
    AdmissibilityReport,
    AnalysisUnavailableError,
    BoundedDelay,
    DelayModel,
    GrowingUniformDelay,
    LyapunovWeights,
    PoissonDelay,
    SeriesBoundedDelay,
    SystemDelay,
    admissibility_check,
    delay_pmf,
    lyapunov_weights,
    sample_delay_counts,
    sample_delays,
    step_size_cap,
)
from .diagnostics import (
    ComparisonReport,
    DescentCheck,
    LyapunovValue,
    RateFit,
    check_descent_inequality,
    compare_to_threshold,
    ensemble_mean,
    fit_rate,
    lyapunov_value,
)
from .engine import ALGORITHMS, InadmissibleConfigError, RunConfig, run
from .problems import (
    InfeasibleIterateError,
    MatrixCompletionProblem,
    MvnMleProblem,
    Problem,
    QuadraticProblem,
)
from .schedules import (
    BatchSchedule,
    ConditionReport,
    ConstantStep,
    FixedBatch,
    IncreasingBatch,
    InvKStep,
    InvSqrtKLogStep,
    StepSchedule,
    batch_at,
    check_batch_growth_conditions,
    check_step_conditions,
    clamp,
    growth_factor_at,
    step_at,
)
from .system import PoolCollect, WorkerPool
from .trace import RunTrace, read_trace, write_summary, write_trace

__version__ = "0.1.0"
