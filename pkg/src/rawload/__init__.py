"""Cost model and load-set optimizers for partially loading raw data files."""

from .costs import (
    PIPELINED,
    SERIAL,
    CostModel,
    WorkloadCost,
    classify_query,
    derive_query_plan,
    evaluate,
    load_time,
    objective_pipelined,
    objective_serial,
    parse_threshold,
    query_time_linearized,
    query_time_pipelined,
    query_time_serial,
    report_for_plans,
)
from .heuristic import (
    HeuristicConfig,
    HeuristicResult,
    attribute_frequency,
    combined,
    combined_pipelined,
    combined_sweep,
    query_coverage,
)
from .model import (
    Attribute,
    BudgetError,
    Classification,
    CostParams,
    CostReport,
    LoadPlan,
    ModeError,
    Query,
    QueryCost,
    QueryPlan,
    TokenizationMode,
    Workload,
    WorkloadError,
    gen_synthetic_workload,
    load_workload_file,
    parse_workload,
    uniform_params,
)

__version__ = "0.1.0"
