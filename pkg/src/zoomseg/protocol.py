"""Client side of the external-process inference protocol.

The server is a child process speaking a framed binary protocol over its
standard input/output:

  handshake   server -> client: b"MGNS" + u32 LE version (currently 1)
  request     client -> server: b"MGN1" + u8 opcode + u8 tensor count,
              then each tensor as u32 LE ndim, ndim u32 LE dims, f32 LE
              row-major payload
  response    server -> client: u8 status; on 0 one tensor in the same
              encoding, otherwise u32 LE message length + UTF-8 message

Opcode 1 segments one (H, W, 3) image tensor; opcode 2 combines two
(H, W, C) probability tensors (cumulative first, scale-local second).
A single process answers one request at a time, so calls are serialized
with a lock; workers that need parallelism get one process each.
"""
from __future__ import annotations

import io
import os
import select
import struct
import subprocess
import sys
import threading

import numpy as np

from . import backends
from .errors import ProtocolError, ServerError, Timeout
from .maps import PROB_SUM_TOL, Image, ProbMap, _normalize_array
from .tensorio import MAX_ELEMS, MAX_NDIM, encode_tensor

HANDSHAKE_MAGIC = b"MGNS"
REQUEST_MAGIC = b"MGN1"
PROTOCOL_VERSION = 1
OP_SEGMENT = 1
OP_COMBINE = 2


class ExternalProcess:
    """Owns one server child process and frames requests to it."""

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        try:
            stderr = sys.stderr.fileno()
        except (AttributeError, OSError, ValueError, io.UnsupportedOperation):
            stderr = subprocess.DEVNULL
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=stderr,
            )
        except OSError as e:
            raise ProtocolError(f"could not start server {self.command}: {e}") from e
        self._fd = self._proc.stdout.fileno()
        self._handshake()

    def _read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            ready, _, _ = select.select([self._fd], [], [], self.timeout)
            if not ready:
                raise Timeout(f"server gave no data for {self.timeout}s")
            chunk = os.read(self._fd, remaining)
            if not chunk:
                raise ProtocolError("server closed its output mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def _handshake(self) -> None:
        magic = self._read_exact(4)
        if magic != HANDSHAKE_MAGIC:
            raise ProtocolError(f"bad handshake magic {magic!r}")
        (version,) = struct.unpack("<I", self._read_exact(4))
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")

    def _read_tensor(self) -> np.ndarray:
        (ndim,) = struct.unpack("<I", self._read_exact(4))
        if ndim == 0 or ndim > MAX_NDIM:
            raise ProtocolError(f"implausible tensor ndim {ndim}")
        dims = struct.unpack(f"<{ndim}I", self._read_exact(4 * ndim))
        if any(d == 0 for d in dims):
            raise ProtocolError(f"zero-sized tensor dimension in {dims}")
        n = int(np.prod(dims, dtype=np.int64))
        if n > MAX_ELEMS:
            raise ProtocolError(f"implausible tensor size {dims}")
        payload = self._read_exact(4 * n)
        return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)

    def call(self, opcode: int, tensors: list[np.ndarray]) -> np.ndarray:
        """Send one request, return the raw response tensor."""
        frame = bytearray()
        frame += REQUEST_MAGIC
        frame += bytes([opcode, len(tensors)])
        for t in tensors:
            frame += encode_tensor(t)
        with self._lock:
            if self._proc.poll() is not None:
                raise ProtocolError(f"server exited with code {self._proc.returncode}")
            try:
                self._proc.stdin.write(bytes(frame))
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise ProtocolError(f"server pipe broke: {e}") from e
            status = self._read_exact(1)[0]
            if status == 0:
                return self._read_tensor()
            (msg_len,) = struct.unpack("<I", self._read_exact(4))
            if msg_len > 1 << 20:
                raise ProtocolError(f"implausible error message length {msg_len}")
            message = self._read_exact(msg_len).decode("utf-8", errors="replace")
            raise ServerError(status, message)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class EndpointPool:
    """Hands out ExternalProcess instances to pipeline workers.

    Serial mode shares one child among all workers (its lock serializes
    requests); per-worker mode lazily spawns one child per thread.
    """

    def __init__(self, command: list[str], per_worker: bool = False, timeout: float = 30.0):
        self.command = list(command)
        self.per_worker = per_worker
        self.timeout = timeout
        self._all: list[ExternalProcess] = []
        self._guard = threading.Lock()
        self._local = threading.local()
        if not per_worker:
            self._shared = self._spawn()

    def _spawn(self) -> ExternalProcess:
        proc = ExternalProcess(self.command, timeout=self.timeout)
        with self._guard:
            self._all.append(proc)
        return proc

    def get(self) -> ExternalProcess:
        if not self.per_worker:
            return self._shared
        proc = getattr(self._local, "proc", None)
        if proc is None:
            proc = self._spawn()
            self._local.proc = proc
        return proc

    def close(self) -> None:
        with self._guard:
            procs, self._all = self._all, []
        for p in procs:
            p.close()


def _validated_prob(raw: np.ndarray, expect_shape: tuple[int, int, int]) -> ProbMap:
    if raw.shape != expect_shape:
        raise ProtocolError(f"server returned shape {raw.shape}, expected {expect_shape}")
    if not np.all(np.isfinite(raw)):
        raise ProtocolError("server returned non-finite values")
    if raw.min() < 0:
        raise ProtocolError("server returned negative probabilities")
    sums = raw.sum(axis=2)
    if np.abs(sums - 1.0).max() <= PROB_SUM_TOL:
        return ProbMap(raw)  # already normalized; keep the bytes untouched
    return ProbMap(_normalize_array(raw))


def external_segment(pool: EndpointPool, patch: Image, classes: int) -> ProbMap:
    raw = pool.get().call(OP_SEGMENT, [np.asarray(patch.data)])
    return _validated_prob(raw, (patch.height, patch.width, classes))


def external_combine(pool: EndpointPool, cumulative: ProbMap, local: ProbMap) -> ProbMap:
    raw = pool.get().call(OP_COMBINE, [np.asarray(cumulative.data), np.asarray(local.data)])
    return _validated_prob(raw, cumulative.data.shape)


class ExternalSegmentationBackend(backends.SegmentationBackend):
    """SegmentationBackend served by an external process."""

    def __init__(self, pool: EndpointPool, proc_h: int, proc_w: int, classes: int):
        self.pool = pool
        self.proc_h = proc_h
        self.proc_w = proc_w
        self.classes = classes

    def segment(self, patch: Image, scale_level: int, window=None) -> ProbMap:
        return external_segment(self.pool, patch, self.classes)

    def close(self) -> None:
        self.pool.close()


class ExternalCombiner(backends.Combiner):
    """Combiner served by an external process."""

    def __init__(self, pool: EndpointPool):
        self.pool = pool

    def combine(self, cumulative: ProbMap, local: ProbMap) -> ProbMap:
        return external_combine(self.pool, cumulative, local)

    def close(self) -> None:
        self.pool.close()
