"""A storage device emulated at a fixed bandwidth.

Reads and writes hit the real file system but each call is stretched to at
least ``bytes / bandwidth`` seconds, so timings do not depend on whether the
page cache is warm.  Sleeping releases the GIL, which lets a reader thread
overlap with extraction the way a disk would.
"""

from __future__ import annotations

import os
import time
import warnings

DEFAULT_CHUNK = 1 << 16
MAX_OVERSHOOT = 5e-3


def drop_file_cache(path) -> bool:
    """Ask the kernel to evict ``path`` from the page cache; False if unsupported."""
    if not hasattr(os, "posix_fadvise"):
        return False
    try:
        fd = os.open(path, os.O_RDONLY)
    except OSError:
        return False
    try:
        os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
        return True
    except OSError:
        return False
    finally:
        os.close(fd)


class EmulatedDevice:
    def __init__(self, bandwidth: float, chunk_size: int = DEFAULT_CHUNK):
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        self.bandwidth = float(bandwidth)
        self.chunk_size = int(chunk_size)
        self._overshoot = 0.0

    def _pace(self, start: float, nbytes: int) -> None:
        # sleep() wakes late; the lateness is taken off the next pause so a
        # long transfer still averages out to the nominal bandwidth
        due = start + nbytes / self.bandwidth - self._overshoot
        wait = due - time.perf_counter()
        if wait > 0:
            time.sleep(wait)
            self._overshoot = min(max(time.perf_counter() - due, 0.0), MAX_OVERSHOOT)
        else:
            self._overshoot = 0.0

    def read_chunk(self, fh, size: int | None = None) -> bytes:
        start = time.perf_counter()
        data = fh.read(self.chunk_size if size is None else size)
        self._pace(start, len(data))
        return data

    def read_file(self, path) -> bytes:
        parts = []
        with open(path, "rb", buffering=0) as fh:
            while True:
                data = self.read_chunk(fh)
                if not data:
                    break
                parts.append(data)
        return b"".join(parts)

    def writer(self, path) -> "PacedWriter":
        return PacedWriter(self, path)

    def write_file(self, path, data) -> None:
        view = memoryview(data)
        with open(path, "wb") as fh:
            for off in range(0, len(view), self.chunk_size):
                start = time.perf_counter()
                piece = view[off : off + self.chunk_size]
                fh.write(piece)
                self._pace(start, len(piece))

    def chunks(self, path, align: bytes | int = b"\n"):
        """Yield paced chunks that end on record boundaries.

        ``align`` is either a record separator or a fixed record size.
        """
        with open(path, "rb", buffering=0) as fh:
            if isinstance(align, int):
                size = max(align, self.chunk_size // align * align)
                while True:
                    data = self.read_chunk(fh, size)
                    if not data:
                        return
                    yield data
            carry = b""
            while True:
                # pace the whole step so the record-boundary work hides in the transfer time
                start = time.perf_counter()
                data = fh.read(self.chunk_size)
                if not data:
                    if carry:
                        yield carry
                    return
                nbytes = len(data)
                data = carry + data
                cut = data.rfind(align)
                if cut < 0:
                    carry = data
                    self._pace(start, nbytes)
                    continue
                carry = data[cut + 1 :]
                out = data[: cut + 1]
                self._pace(start, nbytes)
                yield out


class PacedWriter:
    """Collects small writes and hands them to the file a chunk at a time, paced."""

    def __init__(self, device: EmulatedDevice, path):
        self.device = device
        self.fh = open(path, "wb")
        self.buf = bytearray()

    def write(self, data) -> None:
        self.buf += memoryview(data)
        if len(self.buf) >= self.device.chunk_size:
            self._flush()

    def _flush(self) -> None:
        start = time.perf_counter()
        self.fh.write(self.buf)
        self.device._pace(start, len(self.buf))
        self.buf.clear()

    def close(self) -> None:
        if self.buf:
            self._flush()
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def drop_caches(paths) -> bool:
    ok = all([drop_file_cache(p) for p in paths])
    if not ok:
        warnings.warn("page-cache eviction unavailable; relying on the emulated device pacing", stacklevel=2)
    return ok
