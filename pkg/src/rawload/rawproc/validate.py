"""Predicted against measured cumulative time for one raw file and workload.

Calibration rounds are interleaved with the measured run: a short burst runs
before the load and before every query.  The load plan is chosen from the
rounds taken before the run, and the prediction uses all rounds, so drifts in
host CPU speed affect both sides alike.  No measured query time feeds into the
prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..costs import PIPELINED, SERIAL, CostModel, derive_query_plan, report_for_plans
from ..heuristic import HeuristicConfig, combined
from ..model import CostParams, CostReport, ModeError, Workload
from .calibrate import Calibrator
from .device import DEFAULT_CHUNK, EmulatedDevice
from .formats import RawKind, read_manifest
from .runner import Measurement, compare_csv, measured_cumulative, run_workload


@dataclass
class Validation:
    params: CostParams
    loaded: frozenset[int]
    report: CostReport
    measurements: list[Measurement]
    calibration_rounds: int
    workload: Workload

    @property
    def predicted(self) -> list[float]:
        return self.report.cumulative(weighted=True)

    @property
    def measured(self) -> list[float]:
        return measured_cumulative(self.measurements, self.workload)

    def rel_errors(self) -> list[float]:
        return [abs(m - p) / p for p, m in zip(self.predicted, self.measured) if p > 0]

    def to_csv(self) -> str:
        return compare_csv(self.report, self.measurements, self.workload)


def validate_model(
    raw_path,
    workload: Workload,
    budget: float | None = None,
    mode: str = SERIAL,
    *,
    loaded=None,
    sample_rows: int = 5000,
    bandwidth: float | None = None,
    repeats: int = 3,
    threads: int = 1,
    warmup_seconds: float = 3.0,
    interleave_seconds: float = 0.5,
    chunk_size: int = DEFAULT_CHUNK,
    dataset_dir=None,
) -> Validation:
    """Calibrate, pick a load set (unless ``loaded`` is given), run, and predict.

    ``bandwidth`` emulates a device of that speed; without it the device runs
    at the sequential read speed measured on the sample.
    """
    manifest = read_manifest(raw_path)
    if mode == PIPELINED and manifest.format.kind is RawKind.CSV:
        raise ModeError("pipelined execution needs json-lines or fixed-binary input")
    cal = Calibrator(manifest.format, raw_path, sample_rows, bandwidth=bandwidth, chunk_size=chunk_size)
    cal.run_for(warmup_seconds, 3)
    first = cal.params()
    if loaded is None:
        if budget is None:
            raise ValueError("give a budget or an explicit load set")
        loaded, _ = combined(first, workload, budget, HeuristicConfig(mode=mode))
    loaded = frozenset(loaded)
    model = CostModel(first)
    plans = [derive_query_plan(first, loaded, q, model) for q in workload.queries]
    ms = run_workload(
        raw_path, first, workload, loaded, mode,
        device=EmulatedDevice(first.bandwidth, chunk_size),
        dataset_dir=dataset_dir, repeats=repeats, threads=threads,
        between=lambda: cal.run_for(interleave_seconds),
    )
    final = cal.params()
    report = report_for_plans(final, workload, loaded, plans, mode)
    return Validation(final, loaded, report, ms, cal.rounds, workload)
