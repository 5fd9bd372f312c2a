"""Binary QA test-set generation from factual triples.

Seed triples are loaded from TSV, expanded to a fixpoint under four
inference rules (symmetric, inverse, transitive, and configured relation
compositions), then templated into Yes/No questions. False questions come
only from negation templates of true facts, so every expected label is
provably correct.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DomainTag
from .errors import ConfigError, IngestionError

log = logging.getLogger(__name__)

PATTERNS = ("direct", "negation", "inverse", "symmetric", "transitive", "composite")
#: rules whose derived facts feed the equally-named question patterns
DERIVATION_RULES = ("inverse", "symmetric", "transitive", "composite")

DEFAULT_MAX_DEPTH = 10


def fact_id(subject: str, relation: str, object_: str) -> str:
    digest = hashlib.sha256(f"{subject}\t{relation}\t{object_}".encode("utf-8")).hexdigest()
    return f"f{digest[:16]}"


@dataclass(frozen=True)
class Triple:
    subject: str
    relation: str
    object: str
    source: str = ""  # source_uri for seed facts, "derived" otherwise
    rule: str | None = None
    parents: tuple[str, ...] = ()

    def __post_init__(self):
        if not (self.subject and self.relation and self.object):
            raise ValueError(f"triple slots must be non-empty: {(self.subject, self.relation, self.object)}")
        if self.source == "derived" and not self.parents:
            raise ValueError("derived triple must list parent fact ids")

    @property
    def id(self) -> str:
        return fact_id(self.subject, self.relation, self.object)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.subject, self.relation, self.object)

    @property
    def derived(self) -> bool:
        return self.source == "derived"


@dataclass(frozen=True)
class RelationMeta:
    name: str
    domain: DomainTag
    symmetric: bool = False
    transitive: bool = False
    inverse_of: str | None = None
    templates: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Composition:
    first: str
    second: str
    result: str


@dataclass
class RuleSet:
    """Validated relation metadata plus composition rules."""

    relations: dict[str, RelationMeta]
    compositions: list[Composition] = field(default_factory=list)

    def __post_init__(self):
        for name, meta in self.relations.items():
            for required in ("direct", "negation"):
                if required not in meta.templates:
                    raise ConfigError(f"relation {name!r} lacks the required {required!r} template")
            if meta.inverse_of is not None:
                other = self.relations.get(meta.inverse_of)
                if other is None:
                    raise ConfigError(f"relation {name!r} declares inverse_of unknown relation {meta.inverse_of!r}")
                if other.inverse_of != name:
                    raise ConfigError(
                        f"inverse_of must be mutual: {name!r} -> {meta.inverse_of!r} but "
                        f"{meta.inverse_of!r} -> {other.inverse_of!r}"
                    )
        for comp in self.compositions:
            for rel in (comp.first, comp.second, comp.result):
                if rel not in self.relations:
                    raise ConfigError(f"composition {comp} references unknown relation {rel!r}")

    def require(self, relation: str) -> RelationMeta:
        meta = self.relations.get(relation)
        if meta is None:
            raise ConfigError(f"relation {relation!r} is not declared in the relation metadata")
        return meta


def load_ruleset(path: str | Path) -> RuleSet:
    """Read relation metadata JSON: {"relations": [...], "compositions": [...]}."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"relation metadata file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestionError(f"relation metadata {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "relations" not in payload:
        raise IngestionError(f"relation metadata {path} must be an object with a 'relations' array")
    relations: dict[str, RelationMeta] = {}
    for entry in payload["relations"]:
        name = entry.get("name")
        if not name:
            raise IngestionError(f"relation entry without a name in {path}")
        if name in relations:
            raise IngestionError(f"duplicate relation {name!r} in {path}")
        if "domain" not in entry:
            raise IngestionError(f"relation {name!r} lacks a domain (one of the nine knowledge fields)")
        relations[name] = RelationMeta(
            name=name,
            domain=DomainTag.parse(entry["domain"]),
            symmetric=bool(entry.get("symmetric", False)),
            transitive=bool(entry.get("transitive", False)),
            inverse_of=entry.get("inverse_of"),
            templates=dict(entry.get("templates", {})),
        )
    compositions = [
        Composition(first=c["first"], second=c["second"], result=c["result"])
        for c in payload.get("compositions", [])
    ]
    return RuleSet(relations=relations, compositions=compositions)


@dataclass
class TripleLoadResult:
    triples: list[Triple]
    duplicates_dropped: int


def load_triples(path: str | Path, ruleset: RuleSet) -> TripleLoadResult:
    """Parse seed triples from TSV: subject \\t relation \\t object \\t source_uri."""
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"triples file not found: {path}")
    triples: list[Triple] = []
    seen: set[tuple[str, str, str]] = set()
    unknown_relations: set[str] = set()
    duplicates = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                raise IngestionError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields, got {len(parts)}")
            subject, relation, object_ = (p.strip() for p in parts[:3])
            source = parts[3].strip() if len(parts) == 4 else ""
            if not subject or not relation or not object_:
                raise IngestionError(f"{path}:{lineno}: empty subject/relation/object field")
            if relation not in ruleset.relations:
                unknown_relations.add(relation)
                continue
            key = (subject, relation, object_)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            triples.append(Triple(subject=subject, relation=relation, object=object_, source=source))
    if unknown_relations:
        raise IngestionError(f"{path}: unknown relations (not in relation metadata): {sorted(unknown_relations)}")
    if duplicates:
        log.warning("%s: dropped %d duplicate triple(s)", path, duplicates)
    return TripleLoadResult(triples=triples, duplicates_dropped=duplicates)


def derive(facts: list[Triple], ruleset: RuleSet, max_depth: int = DEFAULT_MAX_DEPTH) -> list[Triple]:
    """Close the fact set under the inference rules, up to `max_depth` rounds.

    Semi-naive evaluation: each round joins only the facts new in the
    previous round. Output contains the inputs plus derivations, sorted by
    (relation, subject, object); a fact derivable several ways keeps its
    first (deterministic) derivation.
    """
    if max_depth < 1:
        raise ConfigError(f"max_depth must be >= 1, got {max_depth}")
    for fact in facts:
        ruleset.require(fact.relation)

    known: dict[tuple[str, str, str], Triple] = {}
    by_rel_subj: dict[tuple[str, str], set[str]] = {}
    by_rel_obj: dict[tuple[str, str], set[str]] = {}

    def admit(t: Triple) -> bool:
        if t.key in known:
            return False
        known[t.key] = t
        by_rel_subj.setdefault((t.relation, t.subject), set()).add(t.object)
        by_rel_obj.setdefault((t.relation, t.object), set()).add(t.subject)
        return True

    delta: list[Triple] = []
    for fact in facts:
        if admit(fact):
            delta.append(fact)

    comp_by_first: dict[str, list[Composition]] = {}
    comp_by_second: dict[str, list[Composition]] = {}
    for comp in ruleset.compositions:
        comp_by_first.setdefault(comp.first, []).append(comp)
        comp_by_second.setdefault(comp.second, []).append(comp)

    for _ in range(max_depth):
        candidates: list[Triple] = []

        def propose(subject, relation, object_, rule, parents):
            candidates.append(
                Triple(subject=subject, relation=relation, object=object_, source="derived", rule=rule, parents=parents)
            )

        for t in sorted(delta, key=lambda f: f.key):
            meta = ruleset.require(t.relation)
            if meta.symmetric:
                propose(t.object, t.relation, t.subject, "symmetric", (t.id,))
            if meta.inverse_of is not None:
                propose(t.object, meta.inverse_of, t.subject, "inverse", (t.id,))
            if meta.transitive:
                # delta fact on the left: (s, r, o) + (o, r, x) -> (s, r, x)
                for x in sorted(by_rel_subj.get((t.relation, t.object), ())):
                    other = known[(t.object, t.relation, x)]
                    propose(t.subject, t.relation, x, "transitive", (t.id, other.id))
                # delta fact on the right: (x, r, s) + (s, r, o) -> (x, r, o)
                for x in sorted(by_rel_obj.get((t.relation, t.subject), ())):
                    other = known[(x, t.relation, t.subject)]
                    propose(x, t.relation, t.object, "transitive", (other.id, t.id))
            for comp in comp_by_first.get(t.relation, ()):
                for x in sorted(by_rel_subj.get((comp.second, t.object), ())):
                    other = known[(t.object, comp.second, x)]
                    propose(t.subject, comp.result, x, "composite", (t.id, other.id))
            for comp in comp_by_second.get(t.relation, ()):
                for x in sorted(by_rel_obj.get((comp.first, t.subject), ())):
                    other = known[(x, comp.first, t.subject)]
                    propose(x, comp.result, t.object, "composite", (other.id, t.id))

        new_delta = [c for c in candidates if admit(c)]
        if not new_delta:
            break
        delta = new_delta

    return sorted(known.values(), key=lambda f: (f.relation, f.subject, f.object))


@dataclass(frozen=True)
class QAItem:
    id: str
    domain: DomainTag
    question: str
    expected: str  # "Yes" | "No"
    pattern: str
    derivation: tuple[str, ...]

    def __post_init__(self):
        if not self.question.endswith("?"):
            raise ValueError(f"question must end with '?': {self.question!r}")
        if self.expected not in ("Yes", "No"):
            raise ValueError(f"expected must be Yes or No, got {self.expected!r}")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if (self.pattern == "negation") != (self.expected == "No"):
            raise ValueError(f"pattern {self.pattern!r} is inconsistent with expected {self.expected!r}")


def _render(template: str, fact: Triple) -> str:
    return template.replace("{s}", fact.subject).replace("{o}", fact.object)


def _question_from(fact: Triple, ruleset: RuleSet, pattern: str) -> QAItem:
    meta = ruleset.require(fact.relation)
    template_key = "negation" if pattern == "negation" else "direct"
    template = meta.templates.get(template_key)
    if template is None:
        raise ConfigError(f"relation {fact.relation!r} lacks a {template_key!r} template (pattern {pattern!r})")
    question = _render(template, fact)
    derivation = (fact.id, *fact.parents)
    return QAItem(
        id=f"qa-{pattern}-{fact.id}",
        domain=meta.domain,
        question=question,
        expected="No" if pattern == "negation" else "Yes",
        pattern=pattern,
        derivation=derivation,
    )


def generate_qa(
    facts: list[Triple],
    ruleset: RuleSet,
    patterns: set[str] | list[str],
    per_pattern_cap: dict[str, int] | int,
    seed: int,
) -> list[QAItem]:
    """Template closure facts into QA items, capped and sampled per pattern.

    `facts` must already be the derived fixpoint. Direct and negation items
    draw from seed facts; inverse/symmetric/transitive/composite items draw
    from facts derived by the same-named rule. Sampling is a pure function
    of (facts, patterns, caps, seed).
    """
    patterns = list(patterns)
    unknown = [p for p in patterns if p not in PATTERNS]
    if unknown:
        raise ConfigError(f"unknown pattern(s) {unknown}; valid patterns: {list(PATTERNS)}")
    caps: dict[str, int] = {}
    for p in patterns:
        cap = per_pattern_cap if isinstance(per_pattern_cap, int) else per_pattern_cap.get(p, 0)
        if cap < 1:
            raise ConfigError(f"pattern {p!r} requested with cap < 1")
        caps[p] = cap

    seed_facts = sorted((f for f in facts if not f.derived), key=lambda f: f.key)
    by_rule: dict[str, list[Triple]] = {rule: [] for rule in DERIVATION_RULES}
    for f in sorted((f for f in facts if f.derived), key=lambda f: f.key):
        if f.rule in by_rule:
            by_rule[f.rule].append(f)

    rng = random.Random(seed)
    items: list[QAItem] = []
    for pattern in PATTERNS:  # fixed order keeps rng consumption deterministic
        if pattern not in caps:
            continue
        pool = seed_facts if pattern in ("direct", "negation") else by_rule[pattern]
        if len(pool) > caps[pattern]:
            picked_idx = sorted(rng.sample(range(len(pool)), caps[pattern]))
            picked = [pool[i] for i in picked_idx]
        else:
            picked = pool
        items.extend(_question_from(fact, ruleset, pattern) for fact in picked)
    return items


# ---------------------------------------------------------------------------
# dataset JSON (also the external "load an existing dataset" entry point)


def dataset_to_json(items: list[QAItem]) -> str:
    payload = [
        {
            "id": item.id,
            "domain": item.domain.value,
            "question": item.question,
            "expected": item.expected,
            "pattern": item.pattern,
            "derivation": list(item.derivation),
        }
        for item in items
    ]
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def save_dataset(items: list[QAItem], path: str | Path) -> None:
    Path(path).write_text(dataset_to_json(items), encoding="utf-8")


def load_dataset(path: str | Path) -> list[QAItem]:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"dataset file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestionError(f"dataset {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise IngestionError(f"dataset {path} must be a JSON array")
    items: list[QAItem] = []
    seen_ids: set[str] = set()
    for i, entry in enumerate(payload):
        try:
            item = QAItem(
                id=str(entry["id"]),
                domain=DomainTag.parse(entry["domain"]),
                question=str(entry["question"]),
                expected=str(entry["expected"]),
                pattern=str(entry["pattern"]),
                derivation=tuple(entry.get("derivation", ())),
            )
        except (KeyError, TypeError, ValueError, ConfigError) as exc:
            raise IngestionError(f"dataset {path}: invalid item at index {i}: {exc}") from exc
        if item.id in seen_ids:
            raise IngestionError(f"dataset {path}: duplicate item id {item.id!r}")
        seen_ids.add(item.id)
        items.append(item)
    return items
