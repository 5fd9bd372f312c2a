"""Per-operation resource measurement: wall latency, peak RSS, peak GPU memory.

RAM is sampled (OS-level RSS polling) rather than instrumented because the
measured inference may happen in another process or across a socket. The
GPU probe is an external command returning used MB; it is optional and its
failure never aborts a measurement. Clocks are injectable so tests can run
against a fake clock with exact, reproducible latencies.
"""

from __future__ import annotations

import logging
import re
import shlex
import shutil
import subprocess
import threading
import time

from dataclasses import dataclass

from .errors import ConfigError

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_INTERVAL_S = 0.05
DEFAULT_GPU_PROBE_CMD = "nvidia-smi --query-gpu=memory.used --format=csv,noheader,nounits"


class RealClock:
    """Monotonic high-resolution wall clock."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class FakeClock:
    """Manual clock: sleeps advance time, reads advance by a fixed tick."""

    def __init__(self, tick: float = 0.0, start: float = 0.0):
        self._t = start
        self.tick = tick
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            t = self._t
            self._t += self.tick
            return t

    def sleep(self, seconds: float) -> None:
        with self._lock:
            self._t += seconds


@dataclass(frozen=True)
class ResourceSample:
    latency_s: float
    peak_mem_mb: float
    peak_gpu_mb: float | None  # None when no probe ran; never silently 0
    sample_count: int


_process = None


def rss_probe() -> float:
    """Resident set size of this process, in MB."""
    global _process
    if _process is None:
        import psutil

        _process = psutil.Process()
    return _process.memory_info().rss / (1024.0 * 1024.0)


def make_gpu_probe(command: str):
    """Wrap an external command that prints GPU used-MB as an integer."""
    argv = shlex.split(command)
    if not argv:
        raise ConfigError("GPU probe command is empty")

    def probe() -> float:
        out = subprocess.run(argv, capture_output=True, text=True, timeout=5.0, check=True).stdout
        m = re.search(r"-?\d+", out)
        if m is None:
            raise ValueError(f"GPU probe output has no integer: {out!r}")
        return float(int(m.group()))

    return probe


def default_gpu_probe():
    """The vendor query utility, when present on this machine; else None."""
    if shutil.which("nvidia-smi") is None:
        return None
    return make_gpu_probe(DEFAULT_GPU_PROBE_CMD)


class Profiler:
    """Measures one operation at a time; measurements must not overlap."""

    def __init__(
        self,
        clock=None,
        sample_interval_s: float = DEFAULT_SAMPLE_INTERVAL_S,
        mem_probe=None,
        gpu_probe=None,
    ):
        if sample_interval_s <= 0:
            raise ConfigError(f"sample interval must be positive, got {sample_interval_s}")
        self.clock = clock if clock is not None else RealClock()
        self.sample_interval_s = sample_interval_s
        self.mem_probe = mem_probe if mem_probe is not None else rss_probe
        self.gpu_probe = gpu_probe
        self._active = threading.Lock()

    def measure(self, op):
        """Run `op()` and return (result, ResourceSample).

        One memory/GPU sample is taken before and after the operation (so
        short operations still report peaks) and a background thread polls
        at the configured interval in between.
        """
        if not self._active.acquire(blocking=False):
            raise RuntimeError("profiler measurements must not overlap; serialize measured operations")
        try:
            peaks = {"mem": 0.0, "gpu": None, "count": 0, "gpu_failed": False}

            def take_sample():
                peaks["mem"] = max(peaks["mem"], self.mem_probe())
                peaks["count"] += 1
                if self.gpu_probe is not None and not peaks["gpu_failed"]:
                    try:
                        used = float(self.gpu_probe())
                        peaks["gpu"] = used if peaks["gpu"] is None else max(peaks["gpu"], used)
                    except Exception as exc:
                        peaks["gpu_failed"] = True
                        peaks["gpu"] = None
                        log.warning("GPU probe failed; reporting GPU memory as unavailable: %s", exc)

            stop = threading.Event()

            def sampler():
                while not stop.wait(self.sample_interval_s):
                    take_sample()

            take_sample()
            thread = threading.Thread(target=sampler, name="omnibench-sampler", daemon=True)
            thread.start()
            try:
                t0 = self.clock.now()
                result = op()
                t1 = self.clock.now()
            finally:
                stop.set()
                thread.join()
            take_sample()
            sample = ResourceSample(
                latency_s=t1 - t0,
                peak_mem_mb=peaks["mem"],
                peak_gpu_mb=peaks["gpu"],
                sample_count=peaks["count"],
            )
            return result, sample
        finally:
            self._active.release()
