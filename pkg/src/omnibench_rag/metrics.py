"""Standardized enhancement metrics computed from aggregated track measurements.

``improvements`` is the signed accuracy delta between the RAG and base
tracks. ``transformation`` is the weighted sum of inverse resource ratios
(time, GPU memory, system memory); with weights summing to 1, a value above
1.0 means the RAG track consumed fewer resources overall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import DomainTag
from .errors import DegenerateMeasurementError

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.4, 0.3, 0.3)  # time, gpu, mem
DENOM_EPSILON = 1e-9

FLAG_GPU_UNAVAILABLE = "gpu_unavailable"


@dataclass(frozen=True)
class TrackSummary:
    track: str  # "base" | "rag"
    S: float
    T: float
    U_mem: float
    U_gpu: float | None = None
    n: int = 0

    def __post_init__(self):
        if self.track not in ("base", "rag"):
            raise ValueError(f"track must be 'base' or 'rag', got {self.track!r}")
        if not 0.0 <= self.S <= 1.0:
            raise ValueError(f"accuracy S must lie in [0, 1], got {self.S}")
        if self.n < 1:
            raise ValueError("a reportable summary needs n >= 1 questions")
        if self.T <= 0 or self.U_mem <= 0:
            raise ValueError(f"T and U_mem must be positive for n >= 1 (got T={self.T}, U_mem={self.U_mem})")


@dataclass(frozen=True)
class Weights:
    w_time: float = DEFAULT_WEIGHTS[0]
    w_gpu: float = DEFAULT_WEIGHTS[1]
    w_mem: float = DEFAULT_WEIGHTS[2]

    def __post_init__(self):
        values = (self.w_time, self.w_gpu, self.w_mem)
        if any(w < 0 for w in values):
            raise ValueError(f"weights must be nonnegative, got {values}")
        if not any(w > 0 for w in values):
            raise ValueError("at least one weight must be positive")
        total = sum(values)
        if abs(total - 1.0) > 1e-9:
            log.warning("weights sum to %.4f, not 1; Transformation > 1 no longer marks net efficiency gain", total)


@dataclass(frozen=True)
class Ratios:
    r_time: float
    r_gpu: float
    r_mem: float
    flags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class EnhancementReport:
    domain: DomainTag | None  # None for the overall pool
    improvements: float
    transformation: float
    r_time: float
    r_gpu: float
    r_mem: float
    weights: Weights
    flags: frozenset[str] = frozenset()


def improvements(s_rag: float, s_base: float) -> float:
    """Signed absolute accuracy gain of the RAG track."""
    for name, value in (("s_rag", s_rag), ("s_base", s_base)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return s_rag - s_base


def safe_ratio(num: float, denom: float, what: str) -> float:
    if denom < DENOM_EPSILON:
        raise DegenerateMeasurementError(f"{what}: denominator {denom} below epsilon {DENOM_EPSILON}")
    return num / denom


def ratios(rag: TrackSummary, base: TrackSummary) -> Ratios:
    """Per-dimension RAG/base resource ratios; GPU falls back to 1.0 when absent."""
    flags = set()
    r_time = safe_ratio(rag.T, base.T, "response time T_base")
    r_mem = safe_ratio(rag.U_mem, base.U_mem, "system memory U_mem_base")
    if rag.U_gpu is not None and base.U_gpu is not None:
        r_gpu = safe_ratio(rag.U_gpu, base.U_gpu, "GPU memory U_gpu_base")
    else:
        r_gpu = 1.0
        flags.add(FLAG_GPU_UNAVAILABLE)
    return Ratios(r_time=r_time, r_gpu=r_gpu, r_mem=r_mem, flags=frozenset(flags))


def transformation(r: Ratios, w: Weights) -> float:
    """Weighted sum of inverse resource ratios (unit ratios give the weight sum)."""
    for name, value in (("r_time", r.r_time), ("r_gpu", r.r_gpu), ("r_mem", r.r_mem)):
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")
    return w.w_time / r.r_time + w.w_gpu / r.r_gpu + w.w_mem / r.r_mem


def enhancement_report(rag: TrackSummary, base: TrackSummary, weights: Weights, domain: DomainTag | None) -> EnhancementReport:
    r = ratios(rag, base)
    return EnhancementReport(
        domain=domain,
        improvements=improvements(rag.S, base.S),
        transformation=transformation(r, weights),
        r_time=r.r_time,
        r_gpu=r.r_gpu,
        r_mem=r.r_mem,
        weights=weights,
        flags=r.flags,
    )
