"""Acceptance suite: one test per criterion, each printing a pass/fail line
(via the conftest hook). Tolerances are pinned here, not tuned elsewhere.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from omnibench_rag import report as report_mod
from omnibench_rag.corpus import DOMAIN_ORDER, Chunk, DomainTag
from omnibench_rag.embedding import HashEmbedder
from omnibench_rag.errors import KBLoadError
from omnibench_rag.grader import LexicalGrader, score
from omnibench_rag.metrics import (
    FLAG_GPU_UNAVAILABLE,
    Ratios,
    TrackSummary,
    Weights,
    improvements,
    ratios,
    transformation,
)
from omnibench_rag.profiler import FakeClock, Profiler, rss_probe
from omnibench_rag.provider import MockProvider
from omnibench_rag.runner import RunConfig, run_suite
from omnibench_rag.testgen import (
    RelationMeta,
    RuleSet,
    Triple,
    dataset_to_json,
    derive,
    generate_qa,
)
from omnibench_rag.vindex import KnowledgeBase, build, load, save, search


def test_c01_metric_equations_match_rational_oracle():
    """Eq. 1 / Eq. 2 vs exact rational arithmetic on >= 100 random inputs."""
    started = time.monotonic()
    rng = np.random.default_rng(12345)
    for _ in range(150):
        s_base, s_rag = sorted(rng.uniform(0.0, 1.0, size=2))
        got = improvements(s_rag, s_base)
        want = float(Fraction(s_rag) - Fraction(s_base))
        assert got == pytest.approx(want, rel=1e-12, abs=1e-15)

        r = Ratios(*(float(x) for x in rng.uniform(0.05, 20.0, size=3)))
        raw_w = rng.uniform(0.0, 2.0, size=3)
        raw_w[int(rng.integers(0, 3))] += 0.1  # keep at least one weight positive
        w = Weights(*(float(x) for x in raw_w))
        got_t = transformation(r, w)
        want_t = float(
            Fraction(w.w_time) / Fraction(r.r_time)
            + Fraction(w.w_gpu) / Fraction(r.r_gpu)
            + Fraction(w.w_mem) / Fraction(r.r_mem)
        )
        assert got_t == pytest.approx(want_t, rel=1e-12)

        # unit ratios reduce exactly to the weight sum
        assert transformation(Ratios(1.0, 1.0, 1.0), w) == w.w_time + w.w_gpu + w.w_mem
    assert time.monotonic() - started < 1.0


def test_c02_table1_consistency():
    """Published per-domain accuracy pairs reproduce the printed deltas."""
    # domain, baseline %, rag %, printed improvements (pp)
    table = [
        ("Culture", 51.1, 68.2, 17.1),
        ("Geography", 78.0, 79.2, 1.3),
        ("History", 42.5, 45.1, 2.6),
        ("Health", 70.0, 51.7, -18.3),
        ("Mathematics", 76.9, 51.3, -25.6),
        ("Nature", 53.3, 65.1, 11.7),
        ("People", 41.6, 58.3, 16.7),
        ("Society", 67.3, 69.1, 1.8),
        ("Technology", 57.1, 67.9, 10.7),
    ]
    rounding_gap_rows = {"Geography", "Nature", "Technology"}
    for domain, base_pct, rag_pct, printed in table:
        computed = improvements(rag_pct / 100.0, base_pct / 100.0) * 100.0
        gap = abs(computed - printed)
        assert gap <= 0.15, f"{domain}: computed {computed:+.4f} vs printed {printed:+.1f}"
        if domain in rounding_gap_rows:
            assert gap == pytest.approx(0.1, abs=1e-9), f"{domain} should differ by exactly 0.1 pp"
        else:
            assert gap == pytest.approx(0.0, abs=1e-9), f"{domain} should match exactly"


def test_c03_retrieval_matches_linear_scan_oracle():
    """200 random instances, n <= 10000, d <= 128, k in {1,5,50}; no mismatches."""
    rng = np.random.default_rng(777)
    sizes = (
        [int(rng.integers(5, 200)) for _ in range(140)]
        + [int(rng.integers(500, 2000)) for _ in range(40)]
        + [int(rng.integers(8000, 10000)) for _ in range(19)]
        + [10000]
    )
    dims = [int(rng.choice([8, 16, 32, 64, 128])) for _ in sizes]

    # steady-state: warm any JIT outside the timing window
    warm = KnowledgeBase(
        dim=4,
        ids=["a", "b"],
        matrix=np.eye(2, 4, dtype=np.float32),
        meta={i: Chunk(id=i, doc_id="d", seq=k, text="t", char_span=(0, 1)) for k, i in enumerate(["a", "b"])},
        fingerprint="warm",
    )
    search(warm, np.array([1.0, 0, 0, 0]), 1)

    started = time.monotonic()
    checked = 0
    for n, d in zip(sizes, dims):
        matrix = rng.normal(size=(n, d))
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        matrix = matrix.astype(np.float32)
        if n >= 10:  # exact duplicates exercise the tie rule
            matrix[n // 2] = matrix[0]
            matrix[n - 1] = matrix[0]
        ids = [f"{int(x):08x}-{i}" for i, x in enumerate(rng.integers(0, 2**31, size=n))]
        meta = {cid: Chunk(id=cid, doc_id="d", seq=i, text="t", char_span=(0, 1)) for i, cid in enumerate(ids)}
        kb = KnowledgeBase(dim=d, ids=ids, matrix=matrix, meta=meta, fingerprint="fp")
        query = rng.normal(size=d)
        query /= np.linalg.norm(query)

        oracle_scores = [float(np.dot(matrix[i].astype(np.float64), query)) for i in range(n)]
        oracle_order = sorted(range(n), key=lambda i: (-oracle_scores[i], ids[i]))
        for k in (1, 5, 50):
            hits = search(kb, query, k)
            assert [h.chunk_id for h in hits] == [ids[i] for i in oracle_order[: min(k, n)]]
            checked += 1
    elapsed = time.monotonic() - started
    assert checked == 600
    assert elapsed < 30.0


def test_c04_kb_persistence_roundtrip_and_corruption(tmp_path):
    """50 random round-trips; every single-byte corruption is detected."""
    rng = np.random.default_rng(4242)
    for i in range(50):
        n = int(rng.integers(1, 12))
        d = int(rng.integers(2, 9))
        matrix = rng.normal(size=(n, d)).astype(np.float32)
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        matrix = (matrix / norms[:, None]).astype(np.float32)
        ids = [f"chunk-{i}-{j}" for j in range(n)]
        meta = {cid: Chunk(id=cid, doc_id=f"doc{i}", seq=j, text=f"text {j}", char_span=(0, 6)) for j, cid in enumerate(ids)}
        kb = KnowledgeBase(dim=d, ids=ids, matrix=matrix, meta=meta, fingerprint=f"hash:fnv1a64:dim={d}")
        path = tmp_path / f"kb{i}.obkb"
        save(kb, path)
        assert load(path) == kb

    # corruption sweep on a fresh small KB: flip every byte position in turn
    kb = KnowledgeBase(
        dim=3,
        ids=["x1", "x2", "x3"],
        matrix=np.eye(3, dtype=np.float32),
        meta={f"x{j + 1}": Chunk(id=f"x{j + 1}", doc_id="d", seq=j, text="t", char_span=(0, 1)) for j in range(3)},
        fingerprint="fp",
    )
    path = tmp_path / "corrupt.obkb"
    save(kb, path)
    original = path.read_bytes()
    for pos in range(len(original)):
        blob = bytearray(original)
        blob[pos] ^= 0x5A
        path.write_bytes(bytes(blob))
        with pytest.raises(KBLoadError):
            load(path)
    path.write_bytes(original)
    assert load(path) == kb


def _closure_ruleset():
    def rel(name, **kw):
        return RelationMeta(
            name=name,
            domain=DomainTag.GEOGRAPHY,
            templates={"direct": f"Is {{s}} {name}-related to {{o}}?", "negation": f"Is it false that {{s}} is {name}-related to {{o}}?"},
            **kw,
        )

    return RuleSet(
        relations={
            "edge": rel("edge", transitive=True),
            "fwd": rel("fwd", inverse_of="rev"),
            "rev": rel("rev", inverse_of="fwd"),
            "near": rel("near", symmetric=True),
        },
        compositions=[],
    )


def _brute_closure(edges):
    closed = set(edges)
    while True:
        new = {(a, d) for (a, b) in closed for (c, d) in closed if b == c} - closed
        if not new:
            return closed
        closed |= new


def test_c05_derivation_soundness():
    """Transitive output equals brute-force closure on 20 random graphs;
    inverse/symmetric hold by definition; derive is idempotent at fixpoint."""
    import random

    ruleset = _closure_ruleset()
    for seed in range(20):
        rng = random.Random(seed)
        n_nodes = rng.randint(4, 30)
        nodes = [f"v{i}" for i in range(n_nodes)]
        edges = {(rng.choice(nodes), rng.choice(nodes)) for _ in range(rng.randint(3, 70))}
        edges = {(a, b) for (a, b) in edges if a != b}
        if not edges:
            edges = {(nodes[0], nodes[1])}
        facts = [Triple(subject=a, relation="edge", object=b, source="seed") for a, b in sorted(edges)]
        facts += [Triple(subject=a, relation="fwd", object=b, source="seed") for a, b in sorted(edges)][:5]
        facts += [Triple(subject=a, relation="near", object=b, source="seed") for a, b in sorted(edges)][:5]

        out = derive(facts, ruleset, max_depth=64)
        got_edges = {(f.subject, f.object) for f in out if f.relation == "edge"}
        assert got_edges == _brute_closure(edges), f"closure mismatch at seed {seed}"

        # definition-level oracles
        keys = {f.key for f in out}
        for f in out:
            if f.relation == "fwd":
                assert (f.object, "rev", f.subject) in keys
            if f.relation == "rev":
                assert (f.object, "fwd", f.subject) in keys
            if f.relation == "near":
                assert (f.object, "near", f.subject) in keys
            if f.rule == "inverse":
                src_rel = "fwd" if f.relation == "rev" else "rev"
                assert (f.object, src_rel, f.subject) in keys

        again = derive(out, ruleset, max_depth=64)
        assert again == out, f"derive not idempotent at fixpoint (seed {seed})"


def test_c06_generation_determinism_and_soundness():
    """3 identical runs are byte-identical; every item fact is provably in the closure."""
    ruleset = _closure_ruleset()
    facts = [Triple(subject=f"n{i}", relation="edge", object=f"n{i + 1}", source="seed") for i in range(8)]
    facts += [Triple(subject="a", relation="fwd", object="b", source="seed")]
    facts += [Triple(subject="p", relation="near", object="q", source="seed")]
    closure = derive(facts, ruleset, max_depth=32)

    patterns = ["direct", "negation", "inverse", "symmetric", "transitive"]
    caps = {"direct": 4, "negation": 4, "inverse": 2, "symmetric": 2, "transitive": 5}
    blobs = {dataset_to_json(generate_qa(closure, ruleset, patterns, caps, seed=2024)) for _ in range(3)}
    assert len(blobs) == 1, "generation must be byte-identical across runs"

    items = generate_qa(closure, ruleset, patterns, caps, seed=2024)
    by_id = {f.id: f for f in closure}
    for item in items:
        fact = by_id.get(item.derivation[0])
        assert fact is not None, f"{item.id}: fact not in closure"
        meta = ruleset.relations[fact.relation]
        if item.expected == "Yes":
            rendered = meta.templates["direct"].replace("{s}", fact.subject).replace("{o}", fact.object)
        else:
            assert item.pattern == "negation"
            rendered = meta.templates["negation"].replace("{s}", fact.subject).replace("{o}", fact.object)
        assert rendered == item.question


GRADER_FIXTURE = [
    ("Yes.", "Yes"),
    ("No.", "No"),
    ("Yes, Paris is the capital of France.", "Yes"),
    ("No, it is not.", "No"),
    ("That statement is not false.", "Yes"),
    ("True.", "Yes"),
    ("False.", "No"),
    ("Correct.", "Yes"),
    ("Incorrect.", "No"),
    ("Indeed.", "Yes"),
    ("Never.", "No"),
    ("Affirmative.", "Yes"),
    ("I don't know.", "Abstain"),
    ("Maybe.", "Abstain"),
    ("It depends on the context.", "Abstain"),
    ("", "Abstain"),
    ("YES", "Yes"),
    ("nO!!", "No"),
    ("The answer is yes.", "Yes"),
    ("The answer is no.", "No"),
    ("That is true.", "Yes"),
    ("That is not true.", "No"),
    ("not incorrect", "Yes"),
    ("This is never true.", "No"),
    ("Absolutely.", "Abstain"),
    ("Paris is indeed the capital.", "Yes"),
    ("The claim is false.", "No"),
    ("It is not the case.", "No"),
    ("Sure, yes.", "Yes"),
    ("Unknown.", "Abstain"),
    ("The statement is correct.", "Yes"),
    ("The statement is incorrect.", "No"),
    ("Yes and no.", "Yes"),
    ("No... but actually yes.", "No"),
    ("It is true that Berlin is in Germany.", "Yes"),
    ("Это не так.", "Abstain"),
    ("Not false.", "Yes"),
    ("Not not.", "Yes"),
    ("The premise is false, but the conclusion is true.", "No"),
    ("Answer: YES — definitely.", "Yes"),
]


def test_c07_grader_fixture_exact_agreement():
    """40 hand-labeled answers judged with 100% agreement; idempotent, case-insensitive."""
    assert len(GRADER_FIXTURE) == 40
    grader = LexicalGrader()
    disagreements = []
    for text, want in GRADER_FIXTURE:
        got = grader.judge(text).label
        if got != want:
            disagreements.append((text, want, got))
    assert not disagreements, f"grader disagrees on: {disagreements}"
    for text, want in GRADER_FIXTURE:
        assert grader.judge(text) == grader.judge(text)
        assert grader.judge(text.upper()).label == want
    # scoring convention: Abstain is always incorrect
    for text, want in GRADER_FIXTURE:
        j = grader.judge(text)
        if want in ("Yes", "No"):
            assert score(j, want) is True
        else:
            assert score(j, "Yes") is False and score(j, "No") is False


def _nine_domain_fixture():
    embedder = HashEmbedder(dim=64)
    chunks = [
        Chunk(id=f"c#{i}", doc_id="d", seq=i, text=t, char_span=(0, len(t)))
        for i, t in enumerate(["alpha beta gamma", "delta epsilon", "qzeta eta theta"])
    ]
    kb = build(chunks, embedder)
    items = []
    script = {"_default": "Hmm.", "_delay_ms": 5}
    for d, domain in enumerate(DOMAIN_ORDER):
        from omnibench_rag.testgen import QAItem

        items.append(
            QAItem(
                id=f"{domain.value.lower()}-y",
                domain=domain,
                question=f"Is {domain.value} claim {d} accurate?",
                expected="Yes",
                pattern="direct",
                derivation=(),
            )
        )
        items.append(
            QAItem(
                id=f"{domain.value.lower()}-n",
                domain=domain,
                question=f"Is it false that {domain.value} claim {d} holds?",
                expected="No",
                pattern="negation",
                derivation=(),
            )
        )
        script[f"Is {domain.value} claim {d} accurate?"] = "Yes."
        script[f"Is it false that {domain.value} claim {d} holds?"] = "No."
    return embedder, kb, items, script


def _run_nine_domain_once(out_dir):
    embedder, kb, items, script = _nine_domain_fixture()
    clock = FakeClock(tick=0.0)
    profiler = Profiler(clock=clock, mem_probe=lambda: 100.0, sample_interval_s=0.05)
    provider = MockProvider(script, sleeper=clock.sleep)
    cfg = RunConfig(
        provider=provider,
        grader=LexicalGrader(),
        profiler=profiler,
        embedder=embedder,
        kb=kb,
        top_k=2,
        seed=11,
        out_dir=out_dir,
    )
    result = run_suite(cfg, items)
    bundle = report_mod.build_bundle(result)
    written = report_mod.write_reports(bundle, out_dir)
    return result, written


def test_c08_end_to_end_reproducibility(tmp_path):
    """3 executions byte-identical; identity metrics; wall < 10 s."""
    started = time.monotonic()
    contents = []
    for run in range(3):
        result, written = _run_nine_domain_once(tmp_path / f"run{run}")
        contents.append({name: written[name].read_bytes() for name in ("report.csv", "report.json", "radar.json")})
        assert result.overall.report.improvements == 0.0
        assert result.overall.report.transformation == pytest.approx(1.0, abs=1e-9)
        assert result.overall.base.S == 1.0  # scripted answers are all correct
        assert len(result.per_domain) == 9
    assert contents[0] == contents[1] == contents[2]
    assert time.monotonic() - started < 10.0


def test_c09_profiler_sanity():
    """Exact fake-clock latency; visible 64 MB peak; flagged GPU fallback."""
    clock = FakeClock()
    prof = Profiler(clock=clock, mem_probe=lambda: 42.0)
    result, sample = prof.measure(lambda: clock.sleep(1.5))
    assert sample.latency_s == 1.5
    assert sample.sample_count >= 2
    assert sample.peak_gpu_mb is None

    baseline = rss_probe()
    real_prof = Profiler(sample_interval_s=0.02)

    def allocate():
        block = bytearray(64 * 1024 * 1024)
        block[::4096] = b"x" * len(block[::4096])
        time.sleep(0.2)
        return block[0]

    _, alloc_sample = real_prof.measure(allocate)
    assert alloc_sample.peak_mem_mb >= baseline + 50

    # absent GPU: ratios fall back to a flagged 1.0 and Eq. 2 still computes
    base = TrackSummary(track="base", S=0.5, T=1.0, U_mem=100.0, U_gpu=None, n=4)
    rag = TrackSummary(track="rag", S=0.6, T=2.0, U_mem=100.0, U_gpu=None, n=4)
    r = ratios(rag, base)
    assert r.r_gpu == 1.0
    assert FLAG_GPU_UNAVAILABLE in r.flags
    value = transformation(r, Weights())
    assert math.isfinite(value)
    assert value == pytest.approx(0.4 / 2.0 + 0.3 + 0.3, rel=1e-12)


def test_c10_context_attribution(tmp_path):
    """S_rag - S_base equals the hand-computed marker-retrieval fraction."""
    embedder = HashEmbedder(dim=64)
    # 6 questions; 3 have a marker chunk sharing their distinctive token
    questions = {
        "q0": ("Is qzeta first topic real?", "MARKQ0 qzeta notes"),
        "q1": ("Is yotqb second topic real?", "MARKQ1 yotqb notes"),
        "q2": ("Is poqrv third topic real?", "MARKQ2 poqrv notes"),
        "q3": ("Is xilqc fourth topic real?", None),
        "q4": ("Is wovqd fifth topic real?", None),
        "q5": ("Is kuqle sixth topic real?", None),
    }
    texts = ["aaaa filler text"] + [chunk_text for _, chunk_text in questions.values() if chunk_text]
    chunks = [Chunk(id=f"c#{i}", doc_id="d", seq=i, text=t, char_span=(0, len(t))) for i, t in enumerate(texts)]
    kb = build(chunks, embedder)

    # verify the geometry is collision-free: marked questions hit exactly
    # their marker chunk, unmarked questions have all-zero similarities
    marked = 0
    from omnibench_rag.testgen import QAItem
    from omnibench_rag.vindex import search as kb_search

    for qid, (question, chunk_text) in questions.items():
        hits = kb_search(kb, embedder.embed(question), 1)
        top_text = kb.meta[hits[0].chunk_id].text
        if chunk_text is not None:
            assert hits[0].score > 0 and top_text == chunk_text, f"{qid}: marker must rank first"
            marked += 1
        else:
            assert hits[0].score == 0.0 and top_text == "aaaa filler text", f"{qid}: filler must win zero ties"
    hand_fraction = marked / len(questions)
    assert hand_fraction == 0.5

    script = {"MARKQ0": "Yes.", "MARKQ1": "Yes.", "MARKQ2": "Yes.", "_default": "No."}
    clock = FakeClock(tick=0.0)
    profiler = Profiler(clock=clock, mem_probe=lambda: 64.0, sample_interval_s=0.05)
    provider = MockProvider({**script, "_delay_ms": 3}, sleeper=clock.sleep)
    items = [
        QAItem(id=qid, domain=DomainTag.TECHNOLOGY, question=q, expected="Yes", pattern="direct", derivation=())
        for qid, (q, _) in questions.items()
    ]
    cfg = RunConfig(
        provider=provider,
        grader=LexicalGrader(),
        profiler=profiler,
        embedder=embedder,
        kb=kb,
        top_k=1,
        out_dir=tmp_path,
    )
    result = run_suite(cfg, items)
    assert result.overall.base.S == 0.0
    assert result.overall.rag.S == hand_fraction
    assert result.overall.report.improvements == hand_fraction
