"""Raw file generation, cost calibration and a measured workload runner."""

from .calibrate import CalibrationError, Calibrator, calibrate
from .device import EmulatedDevice
from .formats import (
    Column,
    Manifest,
    RawFormat,
    RawKind,
    default_csv_schema,
    default_json_schema,
    gen_raw,
    read_manifest,
    rows_for_size,
)
from .runner import Measurement, compare_csv, measured_cumulative, measurements_to_csv, run_workload
from .validate import Validation, validate_model
