"""Execute an offline load and a query workload against a raw file and time each phase.

Query plans come from :func:`rawload.costs.derive_query_plan`, so the runner
does exactly the work the cost model charges for.
"""

from __future__ import annotations

import queue
import sys
import threading
import time
from collections.abc import Callable
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from ..costs import CostModel, derive_query_plan
from ..model import CostParams, CostReport, ModeError, QueryPlan, Workload
from .calibrate import quiet_gc
from .device import EmulatedDevice, drop_caches
from .extract import extractor_for
from .formats import RawKind, read_manifest

SERIAL, PIPELINED = "serial", "pipelined"
_END = object()
SWITCH_INTERVAL = 2e-4


@dataclass
class Measurement:
    query_id: str
    mode: str
    wall_sec: float
    read_sec: float = 0.0
    tok_sec: float = 0.0
    parse_sec: float = 0.0
    loadedread_sec: float = 0.0
    write_sec: float = 0.0


CSV_HEADER = ",".join(f.name for f in fields(Measurement))


def measurements_to_csv(ms: list[Measurement]) -> str:
    lines = [CSV_HEADER]
    for m in ms:
        lines.append(",".join(str(v) if isinstance(v, str) else repr(float(v)) for v in astuple(m)))
    return "\n".join(lines) + "\n"


def column_path(dataset_dir, name: str) -> Path:
    return Path(dataset_dir) / f"{name}.col"


def read_column(dataset_dir, name: str, dtype) -> np.ndarray:
    return np.fromfile(column_path(dataset_dir, name), dtype=np.dtype(dtype).newbyteorder("<"))


class _Run:
    def __init__(self, raw_path, device: EmulatedDevice, dataset_dir, threads: int):
        self.raw_path = Path(raw_path)
        self.manifest = read_manifest(raw_path)
        self.ex = extractor_for(self.manifest)
        self.device = device
        self.dir = Path(dataset_dir)
        self.threads = max(1, threads)
        fmt = self.manifest.format
        self.startup = fmt.startup_sec_per_attr if fmt.kind is RawKind.BINARY else 0.0

    def _tok_end(self, plan_tokenized) -> int:
        return max(plan_tokenized) if plan_tokenized else -1

    def _startup(self, parse: list[int], m: Measurement) -> None:
        """Fixed-binary readers pay a set-up cost per extracted attribute."""
        if self.startup and parse:
            t0 = time.perf_counter()
            time.sleep(self.startup * len(parse))
            m.parse_sec += time.perf_counter() - t0

    # -- serial ---------------------------------------------------------------

    def _scan_serial(self, tok_end: int, parse: list[int], m: Measurement, sink=None):
        """One paced pass over the raw file; ``sink(j, values)`` receives parsed columns."""
        ex = self.ex
        self._startup(parse, m)
        chunks = self.device.chunks(self.raw_path, ex.align)
        while True:
            t0 = time.perf_counter()
            chunk = next(chunks, None)
            t1 = time.perf_counter()
            m.read_sec += t1 - t0
            if chunk is None:
                break
            recs = ex.records(chunk)
            tokens = ex.tokenize(recs, tok_end)
            t2 = time.perf_counter()
            m.tok_sec += t2 - t1
            cols = [ex.parse(tokens, j) for j in parse]
            t3 = time.perf_counter()
            m.parse_sec += t3 - t2
            t4 = t3
            if sink:
                for j, col in zip(parse, cols):
                    sink(j, col)
                t4 = time.perf_counter()
                m.write_sec += t4 - t3
            # releasing the records is part of the tokenize cost, as in calibration
            del recs, tokens, chunk, cols
            m.tok_sec += time.perf_counter() - t4

    # -- pipelined ------------------------------------------------------------

    def _scan_pipelined(self, tok_end: int, parse: list[int], m: Measurement):
        ex = self.ex
        buf: queue.Queue = queue.Queue(maxsize=4)
        read_done = [0.0]
        start = time.perf_counter()

        def produce():
            for chunk in self.device.chunks(self.raw_path, ex.align):
                buf.put(chunk)
            read_done[0] = time.perf_counter()
            for _ in range(self.threads):
                buf.put(_END)

        per_thread: list[tuple[float, float]] = []

        def consume():
            tok = par = 0.0
            while True:
                chunk = buf.get()
                if chunk is _END:
                    break
                t1 = time.perf_counter()
                tokens = ex.tokenize(ex.records(chunk), tok_end)
                t2 = time.perf_counter()
                for j in parse:
                    ex.parse(tokens, j)
                t3 = time.perf_counter()
                del tokens, chunk
                tok += t2 - t1 + time.perf_counter() - t3
                par += t3 - t2
            per_thread.append((tok, par))

        producer = threading.Thread(target=produce, daemon=True)
        workers = [threading.Thread(target=consume, daemon=True) for _ in range(self.threads - 1)]
        # a woken reader must not wait a whole default switch interval for the GIL
        switch = sys.getswitchinterval()
        sys.setswitchinterval(SWITCH_INTERVAL)
        try:
            producer.start()
            for w in workers:
                w.start()
            self._startup(parse, m)
            consume()
            producer.join()
            for w in workers:
                w.join()
        finally:
            sys.setswitchinterval(switch)
        m.read_sec += read_done[0] - start
        # consumers share the GIL, so their intervals overlap in wall time;
        # report the busiest one rather than the sum
        tok, par = max(per_thread, key=sum)
        m.tok_sec += tok
        m.parse_sec += par

    # -- phases ---------------------------------------------------------------

    def load(self, loaded: list[int], mode: str) -> Measurement:
        m = Measurement("load", mode, 0.0)
        if not loaded:
            return m
        n = self.ex.n
        tok_end = max(loaded) if self.manifest.format.kind is RawKind.CSV else n - 1
        schema = self.manifest.schema
        t0 = time.perf_counter()
        writers = {j: self.device.writer(column_path(self.dir, schema[j].name)) for j in loaded}

        def sink(j, col):
            # parse already yields the little-endian column dtype
            writers[j].write(col)

        try:
            # the load is never pipelined: parsed values go out after extraction
            self._scan_serial(tok_end, loaded, m, sink)
        finally:
            t1 = time.perf_counter()
            for w in writers.values():
                w.close()
            m.write_sec += time.perf_counter() - t1
        m.wall_sec = time.perf_counter() - t0
        return m

    def query(self, plan: QueryPlan, mode: str) -> Measurement:
        m = Measurement(plan.query_id, mode, 0.0)
        t0 = time.perf_counter()
        # loaded reads never overlap the raw scan
        for j in sorted(plan.read_loaded):
            col = self.manifest.schema[j]
            np.frombuffer(self.device.read_file(column_path(self.dir, col.name)), dtype=col.np_dtype)
        t1 = time.perf_counter()
        m.loadedread_sec = t1 - t0
        if plan.reads_raw:
            tok_end = self._tok_end(plan.tokenized)
            parse = sorted(plan.parsed)
            if mode == PIPELINED:
                self._scan_pipelined(tok_end, parse, m)
            else:
                self._scan_serial(tok_end, parse, m)
        m.wall_sec = time.perf_counter() - t0
        return m


def _mean(ms: list[Measurement]) -> Measurement:
    first = ms[0]
    vals = [float(np.mean([getattr(m, f.name) for m in ms])) for f in fields(Measurement)[2:]]
    return Measurement(first.query_id, first.mode, *vals)


def run_workload(
    raw_path,
    params: CostParams,
    workload: Workload,
    loaded,
    mode: str = SERIAL,
    *,
    device: EmulatedDevice | None = None,
    dataset_dir=None,
    repeats: int = 3,
    threads: int = 1,
    between: Callable[[], object] | None = None,
) -> list[Measurement]:
    """Load ``loaded`` offline, then run every query; entry 0 is the load.

    Each configuration runs ``repeats`` times and the phase times are averaged.
    ``between`` is called untimed before the load and before every query.
    """
    if mode not in (SERIAL, PIPELINED):
        raise ValueError(f"unknown mode {mode!r}")
    manifest = read_manifest(raw_path)
    if mode == PIPELINED and manifest.format.kind is RawKind.CSV:
        raise ModeError("pipelined execution needs json-lines or fixed-binary input")
    if params.n != len(manifest.schema):
        raise ValueError("params and file schema disagree on the attribute count")
    loaded = sorted(set(loaded))
    if any(not 0 <= j < params.n for j in loaded):
        raise ValueError("load plan names attributes outside the schema")
    workload.check_against(params)
    device = device or EmulatedDevice(params.bandwidth)
    dataset_dir = Path(dataset_dir) if dataset_dir else Path(str(raw_path) + ".cols")
    dataset_dir.mkdir(parents=True, exist_ok=True)

    model = CostModel(params)
    plans = [derive_query_plan(params, loaded, q, model) for q in workload.queries]
    run = _Run(raw_path, device, dataset_dir, threads)
    col_paths = [column_path(dataset_dir, manifest.schema[j].name) for j in loaded]
    rounds: list[list[Measurement]] = []
    for _ in range(max(1, repeats)):
        with quiet_gc():
            if between:
                between()
            drop_caches([raw_path])
            row = [run.load(loaded, mode)]
            for plan in plans:
                if between:
                    between()
                drop_caches([raw_path, *col_paths])
                row.append(run.query(plan, mode))
        rounds.append(row)
    return [_mean([r[k] for r in rounds]) for k in range(len(rounds[0]))]


def measured_cumulative(ms: list[Measurement], workload: Workload | None = None) -> list[float]:
    """Load time, then running totals after each query (weighted when a workload is given)."""
    out = [ms[0].wall_sec]
    weights = [q.weight for q in workload.queries] if workload else [1.0] * (len(ms) - 1)
    for w, m in zip(weights, ms[1:]):
        out.append(out[-1] + w * m.wall_sec)
    return out


def compare_csv(report: CostReport, ms: list[Measurement], workload: Workload) -> str:
    """Predicted and measured cumulative seconds side by side."""
    pred = report.cumulative(weighted=True)
    meas = measured_cumulative(ms, workload)
    lines = ["query_index,query_id,predicted_cum_sec,measured_cum_sec,rel_error"]
    ids = ["load"] + [q.id for q in workload.queries]
    for k, (p, m) in enumerate(zip(pred, meas)):
        err = abs(m - p) / p if p > 0 else (0.0 if m == 0 else float("inf"))
        lines.append(f"{k},{ids[k]},{p!r},{m!r},{err!r}")
    return "\n".join(lines) + "\n"
