"""Dual-track orchestration: every question runs once without retrieval and
once with it, measurements strictly serialized, then per-domain aggregation.

The RAG measurement window covers the full pipeline (query embedding,
search, prompt assembly, generation) so the efficiency metrics include
retrieval overhead; per-stage sub-timings are recorded so either reading
can be reconstructed from the run log.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import metrics, vindex
from .corpus import DomainTag
from .errors import ConfigError, ProviderError
from .grader import Judgment, score
from .metrics import EnhancementReport, TrackSummary, Weights
from .profiler import Profiler, ResourceSample
from .provider import GenerationRequest
from .testgen import QAItem
from .vindex import Hit, KnowledgeBase

log = logging.getLogger(__name__)

DEFAULT_BASE_TEMPLATE = (
    "Answer the following question with Yes or No only.\n\nQuestion: {question}\nAnswer:"
)
DEFAULT_RAG_TEMPLATE = (
    "Answer the following question with Yes or No only, "
    "using the context below when it is relevant.\n\n"
    "Context:\n{context}\n\nQuestion: {question}\nAnswer:"
)
EMPTY_CONTEXT = "(no context retrieved)"


@dataclass
class RunConfig:
    provider: object
    grader: object  # LexicalGrader or RemoteGrader (judge + grader_id)
    profiler: Profiler
    embedder: object | None = None
    kb: KnowledgeBase | None = None
    weights: Weights = field(default_factory=Weights)
    top_k: int = vindex.DEFAULT_TOP_K
    seed: int = 0
    base_template: str = DEFAULT_BASE_TEMPLATE
    rag_template: str = DEFAULT_RAG_TEMPLATE
    system_prompt: str = ""
    max_tokens: int = 256
    temperature: float = 0.0
    model_id: str = ""
    skip_failures: bool = False
    rag_first: bool = False
    ratio_mode: str = "aggregate"  # "aggregate" (ratio of means) | "per-question"
    out_dir: Path | None = None

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if "{question}" not in self.base_template:
            raise ConfigError("base template must contain the {question} placeholder")
        for placeholder in ("{question}", "{context}"):
            if placeholder not in self.rag_template:
                raise ConfigError(f"rag template must contain the {placeholder} placeholder")
        if self.ratio_mode not in ("aggregate", "per-question"):
            raise ConfigError(f"ratio_mode must be 'aggregate' or 'per-question', got {self.ratio_mode!r}")


@dataclass(frozen=True)
class QuestionRun:
    qa_id: str
    track: str  # "base" | "rag"
    domain: DomainTag
    prompt_rendered: str
    answer_text: str
    judgment: Judgment
    correct: bool
    resource: ResourceSample
    retrieved: tuple[Hit, ...] = ()
    timings: dict = field(default_factory=dict)
    failed: bool = False
    error: str = ""

    def to_json_dict(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "track": self.track,
            "domain": self.domain.value,
            "prompt_rendered": self.prompt_rendered,
            "answer_text": self.answer_text,
            "judgment": {"label": self.judgment.label, "matched_evidence": self.judgment.matched_evidence},
            "correct": self.correct,
            "resource": {
                "latency_s": self.resource.latency_s,
                "peak_mem_mb": self.resource.peak_mem_mb,
                "peak_gpu_mb": self.resource.peak_gpu_mb,
                "sample_count": self.resource.sample_count,
            },
            "retrieved": [{"chunk_id": h.chunk_id, "score": h.score} for h in self.retrieved],
            "timings": self.timings,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass
class DomainResult:
    base: TrackSummary
    rag: TrackSummary
    report: EnhancementReport


@dataclass
class SuiteResult:
    per_domain: dict[DomainTag, DomainResult]
    overall: DomainResult
    runs: list[QuestionRun]
    meta: dict


def _judge_and_score(cfg: RunConfig, item: QAItem, answer_text: str):
    judgment = cfg.grader.judge(answer_text)
    return judgment, score(judgment, item.expected)


def _request(cfg: RunConfig, prompt: str) -> GenerationRequest:
    return GenerationRequest(
        user_prompt=prompt,
        system_prompt=cfg.system_prompt,
        max_tokens=cfg.max_tokens,
        temperature=cfg.temperature,
        model_id=cfg.model_id,
    )


def run_base(cfg: RunConfig, item: QAItem) -> QuestionRun:
    """One question through the non-retrieval track."""
    prompt = cfg.base_template.replace("{question}", item.question)
    clock = cfg.profiler.clock

    def op():
        t0 = clock.now()
        response = cfg.provider.generate(_request(cfg, prompt))
        return response, {"generate_s": clock.now() - t0}

    try:
        (response, timings), resource = cfg.profiler.measure(op)
    except ProviderError as exc:
        log.error("base generation failed for %s: %s", item.id, exc)
        return QuestionRun(
            qa_id=item.id,
            track="base",
            domain=item.domain,
            prompt_rendered=prompt,
            answer_text="",
            judgment=Judgment(label="Abstain"),
            correct=False,
            resource=ResourceSample(latency_s=0.0, peak_mem_mb=0.0, peak_gpu_mb=None, sample_count=0),
            failed=True,
            error=str(exc),
        )
    if response.text == "":
        log.warning("empty answer text for %s (base track)", item.qa_id)
    judgment, correct = _judge_and_score(cfg, item, response.text)
    return QuestionRun(
        qa_id=item.id,
        track="base",
        domain=item.domain,
        prompt_rendered=prompt,
        answer_text=response.text,
        judgment=judgment,
        correct=correct,
        resource=resource,
        timings=timings,
    )


def format_context(hits: list[Hit], kb: KnowledgeBase) -> str:
    """Numbered context block with the retrieved chunk texts, in hit order."""
    if not hits:
        return EMPTY_CONTEXT
    blocks = [f"[{i + 1}] {kb.meta[h.chunk_id].text}" for i, h in enumerate(hits)]
    return "\n\n".join(blocks)


def run_rag(cfg: RunConfig, item: QAItem, kb: KnowledgeBase) -> QuestionRun:
    """One question through the retrieval-augmented track.

    Embedding, search, prompt assembly, and generation all happen inside the
    measurement window.
    """
    if cfg.embedder is None:
        raise ConfigError("RAG track requires an embedder")
    if cfg.embedder.fingerprint != kb.fingerprint:
        raise ConfigError(
            f"embedder fingerprint {cfg.embedder.fingerprint!r} does not match "
            f"knowledge base fingerprint {kb.fingerprint!r}"
        )
    clock = cfg.profiler.clock
    state: dict = {}

    def op():
        t0 = clock.now()
        query = cfg.embedder.embed(item.question)
        t1 = clock.now()
        hits = vindex.search(kb, query, cfg.top_k)
        t2 = clock.now()
        context = format_context(hits, kb)
        prompt = cfg.rag_template.replace("{context}", context).replace("{question}", item.question)
        state["hits"] = hits
        state["prompt"] = prompt
        response = cfg.provider.generate(_request(cfg, prompt))
        t3 = clock.now()
        return response, {"embed_s": t1 - t0, "search_s": t2 - t1, "generate_s": t3 - t2}

    try:
        (response, timings), resource = cfg.profiler.measure(op)
    except ProviderError as exc:
        log.error("rag generation failed for %s: %s", item.id, exc)
        return QuestionRun(
            qa_id=item.id,
            track="rag",
            domain=item.domain,
            prompt_rendered=state.get("prompt", ""),
            answer_text="",
            judgment=Judgment(label="Abstain"),
            correct=False,
            resource=ResourceSample(latency_s=0.0, peak_mem_mb=0.0, peak_gpu_mb=None, sample_count=0),
            retrieved=tuple(state.get("hits", ())),
            failed=True,
            error=str(exc),
        )
    if response.text == "":
        log.warning("empty answer text for %s (rag track)", item.qa_id)
    judgment, correct = _judge_and_score(cfg, item, response.text)
    return QuestionRun(
        qa_id=item.id,
        track="rag",
        domain=item.domain,
        prompt_rendered=state["prompt"],
        answer_text=response.text,
        judgment=judgment,
        correct=correct,
        resource=resource,
        retrieved=tuple(state["hits"]),
        timings=timings,
    )


def _summarize(track: str, runs: list[QuestionRun], skip_failures: bool) -> TrackSummary:
    scored = [r for r in runs if not r.failed] if skip_failures else runs
    if not scored:
        raise ValueError(f"no scorable runs for track {track!r}")
    n = len(scored)
    s = sum(1 for r in scored if r.correct) / n
    measured = [r for r in scored if not r.failed]
    if not measured:
        raise ValueError(f"every run failed in track {track!r}; no measurements to summarize")
    t = sum(r.resource.latency_s for r in measured) / len(measured)
    u_mem = sum(r.resource.peak_mem_mb for r in measured) / len(measured)
    gpu_values = [r.resource.peak_gpu_mb for r in measured]
    u_gpu = sum(gpu_values) / len(gpu_values) if all(v is not None for v in gpu_values) else None
    return TrackSummary(track=track, S=s, T=t, U_mem=u_mem, U_gpu=u_gpu, n=n)


def _per_question_ratios(base_runs, rag_runs) -> metrics.Ratios:
    """Mean of per-question resource ratios (sensitivity-analysis mode)."""
    base_by_id = {r.qa_id: r for r in base_runs if not r.failed}
    pairs = [(base_by_id[r.qa_id], r) for r in rag_runs if not r.failed and r.qa_id in base_by_id]
    if not pairs:
        raise ValueError("no paired measurements for per-question ratios")
    flags = set()
    r_time = sum(metrics.safe_ratio(rg.resource.latency_s, b.resource.latency_s, "per-question T") for b, rg in pairs) / len(pairs)
    r_mem = sum(metrics.safe_ratio(rg.resource.peak_mem_mb, b.resource.peak_mem_mb, "per-question U_mem") for b, rg in pairs) / len(pairs)
    if all(b.resource.peak_gpu_mb is not None and rg.resource.peak_gpu_mb is not None for b, rg in pairs):
        r_gpu = sum(
            metrics.safe_ratio(rg.resource.peak_gpu_mb, b.resource.peak_gpu_mb, "per-question U_gpu") for b, rg in pairs
        ) / len(pairs)
    else:
        r_gpu = 1.0
        flags.add(metrics.FLAG_GPU_UNAVAILABLE)
    return metrics.Ratios(r_time=r_time, r_gpu=r_gpu, r_mem=r_mem, flags=frozenset(flags))


def _domain_result(cfg: RunConfig, domain, base_runs, rag_runs) -> DomainResult:
    base_summary = _summarize("base", base_runs, cfg.skip_failures)
    rag_summary = _summarize("rag", rag_runs, cfg.skip_failures)
    if cfg.ratio_mode == "per-question":
        r = _per_question_ratios(base_runs, rag_runs)
        report = EnhancementReport(
            domain=domain,
            improvements=metrics.improvements(rag_summary.S, base_summary.S),
            transformation=metrics.transformation(r, cfg.weights),
            r_time=r.r_time,
            r_gpu=r.r_gpu,
            r_mem=r.r_mem,
            weights=cfg.weights,
            flags=r.flags,
        )
    else:
        report = metrics.enhancement_report(rag_summary, base_summary, cfg.weights, domain)
    return DomainResult(base=base_summary, rag=rag_summary, report=report)


def run_suite(cfg: RunConfig, items: list[QAItem]) -> SuiteResult:
    """Execute both tracks over the full dataset and aggregate per domain."""
    if not items:
        raise ConfigError("cannot run an empty dataset")
    ids = [item.id for item in items]
    if len(set(ids)) != len(ids):
        raise ConfigError("dataset has duplicate qa ids")
    if cfg.kb is None:
        raise ConfigError("run_suite requires a knowledge base for the RAG track")
    if cfg.embedder is not None and cfg.embedder.fingerprint != cfg.kb.fingerprint:
        raise ConfigError(
            f"embedder fingerprint {cfg.embedder.fingerprint!r} does not match "
            f"knowledge base fingerprint {cfg.kb.fingerprint!r}"
        )

    runs: list[QuestionRun] = []
    for item in items:
        if cfg.rag_first:
            runs.append(run_rag(cfg, item, cfg.kb))
            runs.append(run_base(cfg, item))
        else:
            runs.append(run_base(cfg, item))
            runs.append(run_rag(cfg, item, cfg.kb))

    base_runs = [r for r in runs if r.track == "base"]
    rag_runs = [r for r in runs if r.track == "rag"]

    per_domain: dict[DomainTag, DomainResult] = {}
    absent: list[str] = []
    for domain in DomainTag:
        b = [r for r in base_runs if r.domain == domain]
        g = [r for r in rag_runs if r.domain == domain]
        if not b:
            absent.append(domain.value)
            continue
        per_domain[domain] = _domain_result(cfg, domain, b, g)
    if absent:
        log.info("domains without questions omitted from the report: %s", ", ".join(absent))
    overall = _domain_result(cfg, None, base_runs, rag_runs)

    meta = {
        "n_items": len(items),
        "top_k": cfg.top_k,
        "seed": cfg.seed,
        "weights": {"w_time": cfg.weights.w_time, "w_gpu": cfg.weights.w_gpu, "w_mem": cfg.weights.w_mem},
        "ratio_mode": cfg.ratio_mode,
        "grader_id": cfg.grader.grader_id,
        "embedder_fingerprint": cfg.embedder.fingerprint if cfg.embedder is not None else None,
        "kb_fingerprint": cfg.kb.fingerprint,
        "provider": cfg.provider.describe() if hasattr(cfg.provider, "describe") else str(cfg.provider),
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
        "skip_failures": cfg.skip_failures,
        "order": "rag-first" if cfg.rag_first else "base-first",
    }
    result = SuiteResult(per_domain=per_domain, overall=overall, runs=runs, meta=meta)
    if cfg.out_dir is not None:
        persist_runs(result, cfg.out_dir)
    return result


def persist_runs(result: SuiteResult, out_dir: str | Path) -> None:
    """Write the per-question JSON-lines log into the run directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "questions.jsonl").open("w", encoding="utf-8") as fh:
        for run in result.runs:
            fh.write(json.dumps(run.to_json_dict(), ensure_ascii=False) + "\n")
