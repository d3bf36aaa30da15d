"""Bit-faithful functional simulator and analytical performance model of a
runtime-programmable FPGA accelerator for multi-head attention."""

from .config import (
    Command,
    CommandOpcode,
    DesignParams,
    InvalidConfiguration,
    MalformedCommand,
    NoStart,
    ResourceVector,
    RunParams,
    ValidationResult,
    apply_command_stream,
    num_tiles,
    validate_run_params,
)
from .engine import (
    AttentionState,
    DegenerateRow,
    HeadWeights,
    MhaOutput,
    RealHeadWeights,
    ShapeMismatch,
    attend,
    mha_forward,
    mha_reference,
    project_qkv,
    scores,
    softmax_rows,
)
from .fxp import (
    ACC_FMT,
    DATA_FMT,
    FormatMismatch,
    FxpValue,
    NotANumber,
    QFormat,
    QTensor,
    dequantize,
    mac,
    quantize,
    quantize_tensor,
    requantize,
    rhe_div,
)
from .perf import (
    Calibration,
    CycleBreakdown,
    NoFeasibleConfig,
    PerfReport,
    U55C_BUDGET,
    default_design,
    dse_sweep,
    estimate_cycles,
    estimate_resources,
    gops,
    latency_ms,
    load_calibration,
    op_count,
    perf_report,
)
from .tiling import (
    OutOfRange,
    TileSchedule,
    TileStep,
    build_tile_schedule,
    slice_input_tile,
    slice_weight_tile,
)

__version__ = "0.1.0"

__all__ = [
    "ACC_FMT",
    "AttentionState",
    "Calibration",
    "Command",
    "CommandOpcode",
    "CycleBreakdown",
    "DATA_FMT",
    "DegenerateRow",
    "DesignParams",
    "FormatMismatch",
    "FxpValue",
    "HeadWeights",
    "InvalidConfiguration",
    "MalformedCommand",
    "MhaOutput",
    "NoFeasibleConfig",
    "NoStart",
    "NotANumber",
    "OutOfRange",
    "PerfReport",
    "QFormat",
    "QTensor",
    "RealHeadWeights",
    "ResourceVector",
    "RunParams",
    "ShapeMismatch",
    "TileSchedule",
    "TileStep",
    "U55C_BUDGET",
    "ValidationResult",
    "apply_command_stream",
    "attend",
    "build_tile_schedule",
    "default_design",
    "dequantize",
    "dse_sweep",
    "estimate_cycles",
    "estimate_resources",
    "gops",
    "latency_ms",
    "load_calibration",
    "mac",
    "mha_forward",
    "mha_reference",
    "num_tiles",
    "op_count",
    "perf_report",
    "project_qkv",
    "quantize",
    "quantize_tensor",
    "requantize",
    "rhe_div",
    "scores",
    "slice_input_tile",
    "slice_weight_tile",
    "softmax_rows",
    "validate_run_params",
]
