"""Estimate per-attribute tokenize and parse costs from a sample of a raw file."""

from __future__ import annotations

import gc
import os
import time
from contextlib import contextmanager

import numpy as np
from scipy.stats import trim_mean

from ..model import Attribute, CostParams
from .device import DEFAULT_CHUNK, EmulatedDevice, drop_file_cache
from .extract import CsvExtractor, Extractor, extractor_for
from .formats import Manifest, RawFormat, RawKind, read_manifest

MIN_SAMPLE_ROWS = 1000
SEQ_PASSES = 3  # a single parse pass per attribute is too short to time reliably


class CalibrationError(RuntimeError):
    pass


@contextmanager
def quiet_gc():
    """Keep the cyclic collector out of timed regions."""
    was = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def read_sample(path, manifest: Manifest, extractor: Extractor, rows: int) -> bytes:
    """The first ``rows`` records of ``path`` as raw bytes."""
    with open(path, "rb") as fh:
        if isinstance(extractor.align, int):
            return fh.read(rows * extractor.align)
        lines = []
        for _ in range(rows):
            line = fh.readline()
            if not line:
                break
            lines.append(line)
        return b"".join(lines)


def _chunks(sample: bytes, align: bytes | int, chunk_size: int) -> list[bytes]:
    """Cut ``sample`` the way :meth:`EmulatedDevice.chunks` cuts a file."""
    if isinstance(align, int):
        step = max(align, chunk_size // align * align)
        return [sample[k : k + step] for k in range(0, len(sample), step)]
    out, pos = [], 0
    while pos < len(sample):
        cut = sample.rfind(align, pos, pos + chunk_size)
        end = len(sample) if cut < 0 or pos + chunk_size >= len(sample) else cut + 1
        out.append(sample[pos:end])
        pos = end
    return out


class Calibrator:
    """Accumulates timing rounds on a sample and turns them into cost parameters.

    One round times the record split and tokenize for every prefix end (csv)
    or for the full record (json-lines), sequential parses of every attribute
    after a tokenize, and a few attributes parsed alone right after their own
    tokenize.  The sample is cut into the scan's chunk sizes and, with a device
    bandwidth, each chunk is preceded by the transfer pause a scan would see.
    Decoded records and tokens are rebuilt every pass so nothing is timed
    cache-hot.

    Rounds can be added at any time with :meth:`run_for`, which lets a caller
    spread calibration over the same period as the runs it predicts.
    """

    def __init__(
        self,
        fmt: RawFormat | str,
        sample_path,
        sample_rows: int,
        *,
        bandwidth: float | None = None,
        raw_size: float | None = None,
        row_count: int | None = None,
        chunk_size: int = DEFAULT_CHUNK,
    ):
        if sample_rows < MIN_SAMPLE_ROWS:
            raise CalibrationError(f"sample_rows must be at least {MIN_SAMPLE_ROWS}")
        if isinstance(fmt, str):
            fmt = RawFormat.parse(fmt)
        try:
            manifest = read_manifest(sample_path)
        except OSError as exc:
            raise CalibrationError(str(exc)) from None
        if manifest.format.kind is not fmt.kind:
            raise CalibrationError(f"sample is {manifest.format.kind.value}, not {fmt.kind.value}")
        self.fmt, self.manifest = fmt, manifest
        self.ex = ex = extractor_for(manifest)
        try:
            self.sample = read_sample(sample_path, manifest, ex, sample_rows)
        except OSError as exc:
            raise CalibrationError(f"unreadable sample: {exc}") from None
        recs = ex.records(self.sample)
        self.rows = len(recs)
        if self.rows < MIN_SAMPLE_ROWS:
            raise CalibrationError(f"sample has only {self.rows} records")
        self.chunks = _chunks(self.sample, ex.align, chunk_size)
        self.bandwidth = bandwidth
        n = ex.n
        kind = fmt.kind
        self.tok_ends = list(range(n)) if kind is RawKind.CSV else [n - 1] if kind is RawKind.JSON else []
        self.probes = [] if kind is RawKind.BINARY else sorted({round(x) for x in np.linspace(0, n - 1, min(n, 5))})
        self.widths = _field_widths(ex, recs) if kind is RawKind.CSV else None
        self._tok: list[np.ndarray] = []
        self._seq: list[np.ndarray] = []
        self._alone: list[np.ndarray] = []
        self._band = _measure_bandwidth(sample_path, len(self.sample), bandwidth)
        self._size = self._extrapolate(sample_path, raw_size, row_count)

    def _extrapolate(self, path, raw_size, row_count) -> tuple[float, int]:
        nbytes, rows = len(self.sample), self.rows
        if raw_size is None and row_count is None:
            return self.manifest.size_bytes or os.path.getsize(path), self.manifest.row_count
        if raw_size is None:
            return nbytes / rows * row_count, row_count
        if row_count is None:
            return raw_size, max(1, round(raw_size * rows / nbytes))
        return raw_size, row_count

    @property
    def rounds(self) -> int:
        return len(self._alone)

    def _pass(self, end: int, parse: list[int], into: np.ndarray | None, slots: list[int]) -> float:
        """Tokenize every chunk up to ``end`` and parse ``parse``; returns tokenize seconds."""
        ex, tok = self.ex, 0.0
        for chunk in self.chunks:
            if self.bandwidth:
                time.sleep(len(chunk) / self.bandwidth)
            t0 = time.perf_counter()
            tokens = ex.tokenize(ex.records(chunk), end)
            t1 = time.perf_counter()
            tok += t1 - t0
            for j, k in zip(parse, slots):
                t2 = time.perf_counter()
                ex.parse(tokens, j)
                into[k] += time.perf_counter() - t2
            t3 = time.perf_counter()
            del tokens
            tok += time.perf_counter() - t3
        return tok

    def round(self) -> None:
        ex, n = self.ex, self.ex.n
        tok = np.array([self._pass(e, [], None, []) for e in self.tok_ends])
        for _ in range(SEQ_PASSES):
            seq = np.zeros(n)
            self._pass(n - 1, list(range(n)), seq, list(range(n)))
            self._seq.append(seq)
        alone = np.zeros(len(self.probes))
        for k, j in enumerate(self.probes):
            self._pass(n - 1, [j], alone, [k])
        self._tok.append(tok)
        self._alone.append(alone)

    def run_for(self, seconds: float, min_rounds: int = 1) -> "Calibrator":
        """Add rounds until ``seconds`` have passed and at least ``min_rounds`` were added."""
        with quiet_gc():
            start, done = time.perf_counter(), 0
            while done < min_rounds or time.perf_counter() - start < seconds:
                self.round()
                done += 1
        return self

    def params(self) -> CostParams:
        if not self._seq:
            raise CalibrationError("no calibration rounds have run")
        n, rows, kind = self.ex.n, self.rows, self.fmt.kind
        seqs = np.array(self._seq)
        # speed drifts scale every attribute of a pass alike: average each
        # attribute's share of its pass and the pass totals separately
        totals = seqs.sum(axis=1)
        seq = np.median(seqs / totals[:, None], axis=0) * trim_mean(totals, 0.1)
        t_parse = seq / rows
        resolution = time.get_clock_info("perf_counter").resolution
        if float(np.sum(seq)) < max(1000 * resolution, 1e-6):
            raise CalibrationError("sample too small for the timer resolution; enlarge it")
        if kind is RawKind.CSV:
            cum = trim_mean(np.array(self._tok), 0.1, axis=0) / rows
            t_tok = np.diff(_prefix_fit(cum, self.widths), prepend=0.0)
        elif kind is RawKind.JSON:
            full = trim_mean(np.array(self._tok)[:, 0], 0.1)
            t_tok = np.full(n, full / rows / n)
        else:
            t_tok = np.zeros(n)
        if self.probes:
            # the first attribute parsed after a tokenize pulls every token
            # vector into cache; every raw scan pays that once
            alone = trim_mean(np.array(self._alone), 0.1, axis=0)
            premium = max(0.0, float(np.median(alone - seq[self.probes]))) / rows
            if kind is RawKind.CSV:
                t_tok[0] += premium
            else:
                t_tok += premium / n
        raw_size, row_count = self._size
        if kind is RawKind.BINARY:
            t_parse = t_parse + self.manifest.format.startup_sec_per_attr / row_count
        attrs = tuple(
            Attribute(j, c.name, float(c.size), float(t_tok[j]), float(t_parse[j]))
            for j, c in enumerate(self.manifest.schema)
        )
        return CostParams(attrs, int(row_count), float(raw_size), self._band, self.fmt.tokenization_mode)


def _field_widths(ex: CsvExtractor, recs: list[str]) -> np.ndarray:
    probe = recs[: min(len(recs), 2000)]
    widths = np.zeros(ex.n)
    for r in probe:
        widths += [len(f) + 1 for f in r.split(ex.delimiter)]
    return widths / len(probe)


def _prefix_fit(cum_t: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """Cumulative tokenize seconds per row, fitted as a + c*chars.

    Per-field increments are tiny next to pass-to-pass jitter, and a separate
    per-field term is nearly collinear with prefix length, so one slope over
    the bytes scanned is far more repeatable.
    """
    n = len(cum_t)
    design = np.column_stack([np.ones(n), np.cumsum(widths)])
    coef, *_ = np.linalg.lstsq(design, cum_t, rcond=None)
    return np.maximum.accumulate(np.maximum(design @ coef, 0.0))


def calibrate(
    fmt: RawFormat | str,
    sample_path,
    sample_rows: int,
    *,
    bandwidth: float | None = None,
    raw_size: float | None = None,
    row_count: int | None = None,
    repeats: int = 7,
    chunk_size: int = DEFAULT_CHUNK,
    min_seconds: float = 3.0,
) -> CostParams:
    """Cost parameters for the file ``sample_path`` (or the file it was cut from).

    ``bandwidth`` selects an emulated device whose speed is then measured by a
    timed read; without it the real sequential read speed of the sample is used.
    ``raw_size`` and ``row_count`` default to the manifest values, or are
    extrapolated from the sample when only one of them is given.  Rounds
    continue until ``repeats`` rounds and ``min_seconds`` have passed, since
    host CPU speed can drift over a short burst.
    """
    cal = Calibrator(
        fmt, sample_path, sample_rows,
        bandwidth=bandwidth, raw_size=raw_size, row_count=row_count, chunk_size=chunk_size,
    )
    return cal.run_for(min_seconds, repeats).params()


def _measure_bandwidth(path, nbytes: int, bandwidth: float | None) -> float:
    if bandwidth is not None:
        dev = EmulatedDevice(bandwidth)
        # read enough to swamp per-call overhead
        nbytes = max(nbytes, int(bandwidth * 0.05))
        t0 = time.perf_counter()
        with open(path, "rb", buffering=0) as fh:
            got = 0
            while got < nbytes:
                data = dev.read_chunk(fh)
                if not data:
                    break
                got += len(data)
        elapsed = time.perf_counter() - t0
        return got / elapsed if elapsed > 0 and got else float(bandwidth)
    drop_file_cache(path)
    t0 = time.perf_counter()
    with open(path, "rb", buffering=0) as fh:
        got = len(fh.read(nbytes))
    elapsed = time.perf_counter() - t0
    if elapsed <= 0 or not got:
        raise CalibrationError("could not time the sequential read")
    return got / elapsed
