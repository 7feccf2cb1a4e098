"""Rare-event frequency estimation from few climate runs.

Seasonal peaks-over-threshold models with an exponential tail, quantile
level selected by a betting game on top order statistics, and Monte Carlo
frequency estimates with minimal-length Poisson confidence intervals.
"""

from .ingest import (
    Dataset,
    GridRun,
    OracleFrequency,
    SynthSpec,
    generate_synthetic,
    ground_truth_frequency,
    load_dataset,
    write_dataset,
)
from .reduce import (
    AngularReport,
    TargetSpec,
    UnivariateTarget,
    angular_diagnostic,
    canonical_targets,
    count_events,
    reduce_target,
)
from .potmodel import (
    AdjustedExceedances,
    CyclicScale,
    ExceedanceSet,
    PotModel,
    QQReport,
    adjust,
    empirical_quantile,
    extract_exceedances,
    fit_pot_model,
    fit_seasonal_scale,
    observed_exceedance_values,
    qq_exponential,
    sample_model,
)
from .betting import (
    BettingState,
    CalibrationReport,
    GameConfig,
    GameResult,
    LevelSelection,
    null_calibration,
    play_game,
    run_rounds,
    select_level,
    ville_rejects,
)
from .estimate import (
    EstimateConfig,
    FrequencyEstimate,
    estimate_frequency,
    interval_to_frequency,
    poisson_interval,
)
from .cli import PipelineConfig, run_pipeline

__version__ = "0.1.0"
