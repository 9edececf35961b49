"""Mixed-precision planner: per-layer gain metrics plus exact 0-1 knapsack
budget optimization for networks mixing 2-bit and 4-bit layers."""

from .analysis import (
    DEFAULT_FRACTIONS,
    AdditivityReport,
    FrontierPoint,
    RegressionModel,
    additivity_report,
    fit_linear,
    pearson_r,
    predict_accuracy,
    solve_fraction,
    sweep,
)
from .cost import (
    BudgetCapacity,
    BudgetSpec,
    SelectableItem,
    budget_capacity,
    build_items,
    compression_ratio,
    layer_cost,
)
from .errors import MpqError
from .knapsack import (
    IntegerizedItem,
    Integerization,
    PrecisionAssignment,
    Selection,
    assignment_from_selection,
    brute_force,
    integerize_gains,
    solve_01,
)
from .metrics import (
    AlpsMeasurements,
    EmpiricalDistribution,
    HawqInputs,
    alps_gains,
    baseline_gains,
    eagl_gains,
    empirical_distribution,
    entropy_bits,
    hawq_gains,
    regression_gains,
)
from .model_io import (
    GainVector,
    LayerRecord,
    NetworkManifest,
    RunTable,
    TensorEntry,
    load_assignment,
    load_gains,
    load_manifest,
    load_run_table,
    load_tensor_container,
    write_assignment,
    write_gains,
    write_manifest,
    write_run_table,
    write_tensor_container,
)
from .quantize import (
    QuantizedTensor,
    dequantize,
    hawq_init_step,
    quantize_tensor,
    rescale_step,
)

__version__ = "0.1.0"
