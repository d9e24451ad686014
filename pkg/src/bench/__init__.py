from .throughput import MIN_TRIAL_BATCHES, BenchConfig, BenchResult, TrialAborted, measure_throughput
from .compare import (
    RaceResult,
    UnknownBaselineError,
    compare_configs,
    efficiency_race,
    results_to_csv,
    time_to_nll,
)
