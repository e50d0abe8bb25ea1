"""System identification for unevenly sampled time series.

Recurrent cell functions (GRU, antisymmetric RNN) are embedded as the
slope of an explicit Runge-Kutta step, so one trained model handles
irregular sampling intervals natively.  The stationary slope formulation
removes the unit root that plain incremental updates introduce.
"""

__version__ = "0.1.0"

from .tape import (
    Tape,
    Tensor,
    ShapeError,
    finite_difference_gradient,
    check_gradients,
)
from .cells import (
    GruParams,
    AsrnnParams,
    EmbedParams,
    OutputParams,
    ModelParams,
    embed_input,
    gru_cell,
    asrnn_cell,
    output_map,
    init_params,
    save_model,
    load_model,
)
from .integrators import (
    ButcherTableau,
    StepSpec,
    tableau,
    slope,
    interpolate_input,
    rk_step,
    convergence_order,
)
from .data import (
    TimeSeries,
    NormStats,
    Dataset,
    SegmentIndex,
    ColumnSpec,
    DataError,
    load_daisy,
    subsample_missing,
    split_normalize,
    augment_delta_channel,
    make_segments,
    read_canonical_csv,
    write_canonical_csv,
    DAISY_PRESETS,
)
from .training import (
    TrainConfig,
    TrainHistory,
    AdamState,
    ConfigError,
    TrainingDiverged,
    adam_update,
    forward_segment,
    refresh_segment_states,
    train,
    parse_config,
    config_digest,
)
from .evaluation import (
    EvalReport,
    RunAggregate,
    rollout,
    rollout_states,
    rrse,
    evaluate_split,
    aggregate,
)
from .surrogate import synthesize_cstr, synthesize_winding

__all__ = [
    "__version__",
    # tape
    "Tape", "Tensor", "ShapeError",
    "finite_difference_gradient", "check_gradients",
    # cells
    "GruParams", "AsrnnParams", "EmbedParams", "OutputParams", "ModelParams",
    "embed_input", "gru_cell", "asrnn_cell", "output_map", "init_params",
    "save_model", "load_model",
    # integrators
    "ButcherTableau", "StepSpec", "tableau", "slope", "interpolate_input",
    "rk_step", "convergence_order",
    # data
    "TimeSeries", "NormStats", "Dataset", "SegmentIndex", "ColumnSpec",
    "DataError", "load_daisy", "subsample_missing", "split_normalize",
    "augment_delta_channel", "make_segments", "read_canonical_csv",
    "write_canonical_csv", "DAISY_PRESETS",
    # training
    "TrainConfig", "TrainHistory", "AdamState", "ConfigError",
    "TrainingDiverged", "adam_update", "forward_segment",
    "refresh_segment_states", "train", "parse_config", "config_digest",
    # evaluation
    "EvalReport", "RunAggregate", "rollout", "rollout_states", "rrse",
    "evaluate_split", "aggregate",
    # surrogate data
    "synthesize_cstr", "synthesize_winding",
]
