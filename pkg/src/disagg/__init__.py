"""Energy disaggregation with per-device FIR models and a filter-bank engine."""

from .errors import (
    DisaggError,
    EnumerationCapError,
    IllPosedFitError,
    LibraryFormatError,
    ValidationError,
)
from .filterbank import (
    DisaggParams,
    DisaggResult,
    Filter,
    FilterBank,
    estimate_segment,
    init_bank,
    log_posterior,
    reconstruct_devices,
    run_offline,
    step_response_matrix,
)
from .metrics import EvalReport, evaluate
from .models import (
    DeviceLibrary,
    FirModel,
    InputSignal,
    TrainingTrace,
    dc_gain,
    detect_binary_input,
    fit_fir,
    load_library,
    save_library,
    select_order,
    simulate_device,
)
from .oracle import OracleResult, check_prefix_optimality, exact_map, score_delta, score_trajectory
from .segmentation import Segmentation, from_delta, min_segment_ok, segment_spans, to_changepoints
from .synth import DeviceSpec, Scenario, ScenarioSpec, generate

__version__ = "0.1.0"
