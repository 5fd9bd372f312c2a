"""Command-line surface: kb build, gen, eval, report.

Settings precedence is flags > environment > config file > defaults; every
effective value is echoed into the run metadata so a run can be re-executed
exactly. Exit codes: 0 success, 2 configuration error, 3 ingestion error,
4 provider error, 1 anything else (including --fail-below gating).
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, corpus, embedding, kernels, metrics, report, runner, testgen, vindex
from .errors import ConfigError, IngestionError, KBLoadError, OmniBenchError, ProviderError
from .grader import LexicalGrader, RemoteGrader
from .profiler import FakeClock, Profiler, default_gpu_probe, make_gpu_probe
from .provider import MockProvider, RemoteChatProvider

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_PROVIDER = 4

_KNOWN_CONFIG_KEYS = {
    "api_base",
    "api_key",
    "base_template",
    "cap",
    "caps",
    "chunk_overlap",
    "chunk_size",
    "dim",
    "embedder",
    "fail_below",
    "fake_profile",
    "fake_tick",
    "gpu_probe",
    "grader",
    "grader_lexicon",
    "interleave_order",
    "judge_model",
    "max_depth",
    "max_tokens",
    "mock_script",
    "model",
    "patterns",
    "provider",
    "rag_template",
    "ratio_mode",
    "sample_ms",
    "seed",
    "skip_failures",
    "temperature",
    "timeout_s",
    "top_k",
    "w_gpu",
    "w_mem",
    "w_time",
}


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {p} must be a JSON object")
    unknown = sorted(set(cfg) - _KNOWN_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s) {unknown}; known keys: {sorted(_KNOWN_CONFIG_KEYS)}")
    return cfg


class Settings:
    """Merged view of flags, environment, and config file, with an echo trail."""

    def __init__(self, args: argparse.Namespace, cfg_file: dict):
        self._args = args
        self._cfg = cfg_file
        self.effective: dict = {}

    def get(self, name: str, default=None, env: str | None = None):
        value = getattr(self._args, name, None)
        if value is None and env is not None and os.environ.get(env):
            value = os.environ[env]
        if value is None and name in self._cfg:
            value = self._cfg[name]
        if value is None:
            value = default
        self.effective[name] = value
        return value


def _resolve_embedder(settings: Settings):
    kind = settings.get("embedder", "hash")
    if kind == "hash":
        return embedding.HashEmbedder(dim=int(settings.get("dim", embedding.DEFAULT_HASH_DIM)))
    if kind == "remote":
        model = settings.get("model", "")
        base = settings.get("api_base", None, env=embedding.ENV_API_BASE)
        key = settings.get("api_key", None, env=embedding.ENV_API_KEY)
        return embedding.RemoteEmbedder(
            model=model, base_url=base, api_key=key, timeout_s=float(settings.get("timeout_s", 60.0))
        )
    raise ConfigError(f"unknown embedder kind {kind!r}; expected hash or remote")


# ---------------------------------------------------------------------------
# kb build


def cmd_kb_build(args: argparse.Namespace) -> int:
    settings = Settings(args, _load_config_file(args.config))
    size = int(settings.get("chunk_size", corpus.DEFAULT_CHUNK_SIZE))
    overlap = int(settings.get("chunk_overlap", corpus.DEFAULT_CHUNK_OVERLAP))
    if size <= 0 or overlap < 0 or overlap >= size:
        raise ConfigError(f"invalid chunking: size={size} overlap={overlap} (need 0 <= overlap < size)")
    embedder = _resolve_embedder(settings)
    docs = corpus.load_manifest(args.manifest)
    chunks = []
    for doc in docs:
        chunks.extend(corpus.chunk(doc, size=size, overlap=overlap))
    kb = vindex.build(chunks, embedder)
    vindex.save(kb, args.out)
    print(f"knowledge base written to {args.out}")
    print(f"  documents: {len(docs)}")
    print(f"  chunks:    {len(kb)}")
    print(f"  dim:       {kb.dim}")
    print(f"  embedder:  {kb.fingerprint}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen


def _parse_caps(settings: Settings, patterns: list[str]) -> dict[str, int]:
    cap_default = int(settings.get("cap", 25))
    caps = {p: cap_default for p in patterns}
    caps_spec = settings.get("caps", "")
    if isinstance(caps_spec, dict):
        entries = caps_spec.items()
    else:
        entries = (part.split("=", 1) for part in str(caps_spec).split(",") if part.strip())
    for entry in entries:
        if len(entry) != 2:
            raise ConfigError(f"bad caps entry {entry!r}; expected pattern=count")
        name, count = entry
        name = name.strip()
        if name not in testgen.PATTERNS:
            raise ConfigError(f"unknown pattern {name!r} in caps; valid patterns: {list(testgen.PATTERNS)}")
        caps[name] = int(count)
    return caps


def cmd_generate(args: argparse.Namespace) -> int:
    settings = Settings(args, _load_config_file(args.config))
    patterns_raw = settings.get("patterns", "direct,negation,inverse,symmetric,transitive,composite")
    patterns = [p.strip() for p in str(patterns_raw).split(",") if p.strip()]
    unknown = [p for p in patterns if p not in testgen.PATTERNS]
    if unknown:
        raise ConfigError(f"unknown pattern(s) {unknown}; valid patterns: {list(testgen.PATTERNS)}")
    caps = _parse_caps(settings, patterns)
    seed = int(settings.get("seed", 0))
    max_depth = int(settings.get("max_depth", testgen.DEFAULT_MAX_DEPTH))

    ruleset = testgen.load_ruleset(args.relations)
    loaded = testgen.load_triples(args.triples, ruleset)
    if loaded.duplicates_dropped:
        print(f"warning: dropped {loaded.duplicates_dropped} duplicate triple(s)")
    closure = testgen.derive(loaded.triples, ruleset, max_depth=max_depth)
    items = testgen.generate_qa(closure, ruleset, patterns, caps, seed)
    testgen.save_dataset(items, args.out)

    counts = {p: 0 for p in patterns}
    for item in items:
        counts[item.pattern] += 1
    print(f"dataset written to {args.out}")
    print(f"  seed facts:    {len(loaded.triples)}")
    print(f"  closure facts: {len(closure)}")
    for p in patterns:
        print(f"  {p:<11} {counts[p]}")
    print(f"  total items:   {len(items)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _resolve_provider(settings: Settings, sleeper):
    kind = settings.get("provider", "mock")
    if kind == "mock":
        script_path = settings.get("mock_script", "")
        if not script_path:
            raise ConfigError("mock provider requires --mock-script")
        return MockProvider.from_file(script_path, sleeper=sleeper)
    if kind == "remote":
        model = settings.get("model", "")
        base = settings.get("api_base", None, env=embedding.ENV_API_BASE)
        key = settings.get("api_key", None, env=embedding.ENV_API_KEY)
        return RemoteChatProvider(
            model=model, base_url=base, api_key=key, timeout_s=float(settings.get("timeout_s", 120.0))
        )
    raise ConfigError(f"unknown provider kind {kind!r}; expected mock or remote")


def _resolve_profiler(settings: Settings):
    sample_ms = float(settings.get("sample_ms", 50.0))
    fake = bool(settings.get("fake_profile", False))
    if fake:
        tick = float(settings.get("fake_tick", 0.001))
        clock = FakeClock(tick=tick)
        mem_probe = lambda: 100.0  # noqa: E731 - constant probe for reproducible runs
        gpu_probe = None
        settings.effective["gpu_probe"] = "off"
        return Profiler(clock=clock, sample_interval_s=sample_ms / 1000.0, mem_probe=mem_probe, gpu_probe=gpu_probe)
    probe_spec = str(settings.get("gpu_probe", "auto"))
    if probe_spec == "off":
        gpu_probe = None
    elif probe_spec == "auto":
        gpu_probe = default_gpu_probe()
    else:
        gpu_probe = make_gpu_probe(probe_spec)
    return Profiler(sample_interval_s=sample_ms / 1000.0, gpu_probe=gpu_probe)


def cmd_eval(args: argparse.Namespace) -> int:
    settings = Settings(args, _load_config_file(args.config))
    kb_path = Path(args.kb)
    if not kb_path.is_file():
        raise ConfigError(f"knowledge base not found: {kb_path}")
    items = testgen.load_dataset(args.dataset)
    kb = vindex.load(kb_path)

    profiler = _resolve_profiler(settings)
    provider = _resolve_provider(settings, sleeper=profiler.clock.sleep)
    grader_kind = settings.get("grader", "lexical")
    if grader_kind == "lexical":
        lexicon_path = settings.get("grader_lexicon", "")
        grader = LexicalGrader.from_file(lexicon_path) if lexicon_path else LexicalGrader()
    elif grader_kind == "remote":
        judge_model = settings.get("judge_model", "")
        if not judge_model:
            raise ConfigError("remote grader requires --judge-model")
        base = settings.get("api_base", None, env=embedding.ENV_API_BASE)
        key = settings.get("api_key", None, env=embedding.ENV_API_KEY)
        judge_provider = RemoteChatProvider(
            model=judge_model, base_url=base, api_key=key, timeout_s=float(settings.get("timeout_s", 120.0))
        )
        grader = RemoteGrader(judge_provider)
    else:
        raise ConfigError(f"unknown grader kind {grader_kind!r}; expected lexical or remote")
    embedder = _resolve_embedder(settings)
    weights = metrics.Weights(
        w_time=float(settings.get("w_time", metrics.DEFAULT_WEIGHTS[0])),
        w_gpu=float(settings.get("w_gpu", metrics.DEFAULT_WEIGHTS[1])),
        w_mem=float(settings.get("w_mem", metrics.DEFAULT_WEIGHTS[2])),
    )
    out_dir = Path(args.out_dir)
    cfg = runner.RunConfig(
        provider=provider,
        grader=grader,
        profiler=profiler,
        embedder=embedder,
        kb=kb,
        weights=weights,
        top_k=int(settings.get("top_k", vindex.DEFAULT_TOP_K)),
        seed=int(settings.get("seed", 0)),
        base_template=str(settings.get("base_template", runner.DEFAULT_BASE_TEMPLATE)),
        rag_template=str(settings.get("rag_template", runner.DEFAULT_RAG_TEMPLATE)),
        max_tokens=int(settings.get("max_tokens", 256)),
        temperature=float(settings.get("temperature", 0.0)),
        model_id=str(settings.get("model", "")),
        skip_failures=bool(settings.get("skip_failures", False)),
        rag_first=settings.get("interleave_order", "base-first") == "rag-first",
        ratio_mode=str(settings.get("ratio_mode", "aggregate")),
        out_dir=out_dir,
    )
    result = runner.run_suite(cfg, items)

    bundle = report.build_bundle(result)
    written = report.write_reports(bundle, out_dir)
    meta = {
        **result.meta,
        "tool_version": __version__,
        "kernel_backend": kernels.active_backend(),
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "dataset": str(args.dataset),
        "kb_path": str(kb_path),
        "effective_config": settings.effective,
    }
    (out_dir / "run_meta.json").write_text(
        json.dumps(meta, indent=2, ensure_ascii=False, sort_keys=True, default=str) + "\n", encoding="utf-8"
    )

    print(report.emit_table(bundle), end="")
    for name, path in written.items():
        print(f"wrote {path}")
    print(f"wrote {out_dir / 'questions.jsonl'}")
    print(f"wrote {out_dir / 'run_meta.json'}")

    fail_below = settings.get("fail_below", None)
    if fail_below is not None and result.overall.rag.S < float(fail_below):
        print(f"FAIL: overall RAG accuracy {result.overall.rag.S:.4f} < --fail-below {float(fail_below)}")
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------------
# report (re-render from a previous run)


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    report_json = run_dir / "report.json"
    if not report_json.is_file():
        raise IngestionError(f"no report.json in {run_dir}")
    try:
        payload = json.loads(report_json.read_text(encoding="utf-8"))
        rows = [
            report.ReportRow(
                domain=r["domain"],
                s_base=float(r["s_base"]),
                s_rag=float(r["s_rag"]),
                improvements=float(r["improvements"]),
                transformation=float(r["transformation"]),
                flags=tuple(r.get("flags", ())),
            )
            for r in payload["rows"]
        ]
        o = payload["overall"]
        overall = report.ReportRow(
            domain=o["domain"],
            s_base=float(o["s_base"]),
            s_rag=float(o["s_rag"]),
            improvements=float(o["improvements"]),
            transformation=float(o["transformation"]),
            flags=tuple(o.get("flags", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"malformed report.json in {run_dir}: {exc}") from exc
    bundle = report.ReportBundle(rows=rows, overall=overall, meta=payload.get("meta", {}))
    out_dir = Path(args.out_dir) if args.out_dir else run_dir
    written = report.write_reports(bundle, out_dir)
    print(report.emit_table(bundle), end="")
    for name, path in written.items():
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omnibench",
        description="Dual-track RAG evaluation: build a knowledge base, generate QA datasets, run both tracks, report.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge-base operations")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    p_build = kb_sub.add_parser("build", help="chunk + embed a corpus into a searchable knowledge base")
    p_build.add_argument("--manifest", required=True, help="corpus manifest JSON (array of id/domain/title/path/source_uri)")
    p_build.add_argument("--out", required=True, help="output knowledge-base file")
    p_build.add_argument("--config", help="config file (JSON)")
    p_build.add_argument("--chunk-size", dest="chunk_size", type=int, help="tokens per chunk (default 256)")
    p_build.add_argument("--chunk-overlap", dest="chunk_overlap", type=int, help="token overlap between chunks (default 32)")
    p_build.add_argument("--embedder", choices=("hash", "remote"), help="embedder kind (default hash)")
    p_build.add_argument("--dim", type=int, help="hash embedder dimension (default 256)")
    p_build.add_argument("--model", help="remote embedding model name")
    p_build.add_argument("--api-base", dest="api_base", help="remote API base URL")
    p_build.set_defaults(func=cmd_kb_build)

    p_gen = sub.add_parser("gen", help="derive facts and generate a binary QA dataset")
    p_gen.add_argument("--triples", required=True, help="seed triples TSV (subject\\trelation\\tobject\\tsource_uri)")
    p_gen.add_argument("--relations", required=True, help="relation metadata JSON")
    p_gen.add_argument("--out", required=True, help="output dataset JSON")
    p_gen.add_argument("--config", help="config file (JSON)")
    p_gen.add_argument("--patterns", help="comma-separated question patterns (default: all six)")
    p_gen.add_argument("--cap", type=int, help="default per-pattern cap (default 25)")
    p_gen.add_argument("--caps", help="per-pattern overrides, e.g. direct=5,negation=5")
    p_gen.add_argument("--seed", type=int, help="sampling seed (default 0)")
    p_gen.add_argument("--max-depth", dest="max_depth", type=int, help="max derivation rounds (default 10)")
    p_gen.set_defaults(func=cmd_generate)

    p_eval = sub.add_parser("eval", help="run base and RAG tracks over a dataset and report")
    p_eval.add_argument("--dataset", required=True, help="QA dataset JSON")
    p_eval.add_argument("--kb", required=True, help="knowledge-base file from kb build")
    p_eval.add_argument("--out-dir", dest="out_dir", required=True, help="run output directory")
    p_eval.add_argument("--config", help="config file (JSON)")
    p_eval.add_argument("--provider", choices=("mock", "remote"), help="model provider (default mock)")
    p_eval.add_argument("--mock-script", dest="mock_script", help="mock provider script JSON")
    p_eval.add_argument("--model", help="remote chat model name")
    p_eval.add_argument("--api-base", dest="api_base", help="remote API base URL")
    p_eval.add_argument("--embedder", choices=("hash", "remote"), help="query embedder kind (must match the KB)")
    p_eval.add_argument("--dim", type=int, help="hash embedder dimension")
    p_eval.add_argument("--top-k", dest="top_k", type=int, help="retrieved chunks per question (default 5)")
    p_eval.add_argument("--seed", type=int, help="run seed, echoed into metadata")
    p_eval.add_argument("--w-time", dest="w_time", type=float, help="weight of the time ratio (default 0.4)")
    p_eval.add_argument("--w-gpu", dest="w_gpu", type=float, help="weight of the GPU-memory ratio (default 0.3)")
    p_eval.add_argument("--w-mem", dest="w_mem", type=float, help="weight of the system-memory ratio (default 0.3)")
    p_eval.add_argument("--sample-ms", dest="sample_ms", type=float, help="resource sampling interval in ms (default 50)")
    p_eval.add_argument("--gpu-probe", dest="gpu_probe", help="'auto' (vendor utility if present), 'off', or a command")
    p_eval.add_argument("--max-tokens", dest="max_tokens", type=int, help="completion token cap (default 256)")
    p_eval.add_argument("--temperature", type=float, help="sampling temperature (default 0.0)")
    p_eval.add_argument("--base-template", dest="base_template", help="base prompt template with {question}")
    p_eval.add_argument("--rag-template", dest="rag_template", help="rag prompt template with {context} and {question}")
    p_eval.add_argument("--grader", choices=("lexical", "remote"), help="answer grader (default lexical)")
    p_eval.add_argument("--grader-lexicon", dest="grader_lexicon", help="grader lexicon JSON (affirm/negate lists)")
    p_eval.add_argument("--judge-model", dest="judge_model", help="chat model used by the remote grader")
    p_eval.add_argument("--ratio-mode", dest="ratio_mode", choices=("aggregate", "per-question"), help="resource ratio aggregation (default aggregate)")
    p_eval.add_argument("--interleave-order", dest="interleave_order", choices=("base-first", "rag-first"), help="per-item track order (default base-first)")
    p_eval.add_argument("--skip-failures", dest="skip_failures", action="store_const", const=True, help="exclude failed generations from the accuracy denominator")
    p_eval.add_argument("--fail-below", dest="fail_below", type=float, help="exit 1 if overall RAG accuracy is below this fraction")
    p_eval.add_argument("--fake-profile", dest="fake_profile", action="store_const", const=True, help="deterministic fake clock and memory probe (CI reproducibility)")
    p_eval.add_argument("--fake-tick", dest="fake_tick", type=float, help="fake clock advance per reading (default 0.001)")
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", help="re-render report files from a previous run directory")
    p_report.add_argument("--run-dir", dest="run_dir", required=True, help="directory containing report.json")
    p_report.add_argument("--out-dir", dest="out_dir", help="where to write re-rendered files (default: run dir)")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, KBLoadError) as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except OmniBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
