"""Lexical binary grader: free-text answer -> Yes/No/Abstain judgment.

A deterministic replacement for learned answer classifiers: normalize,
look for affirmation/negation lexicon words in the first sentence, handle
"not false"-style double negation, fall back to whole-text first match,
abstain when nothing matches. Abstain always scores as incorrect.
"""

from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .errors import IngestionError

AFFIRM_WORDS = ("yes", "true", "correct", "indeed", "affirmative")
NEGATE_WORDS = ("no", "not", "false", "incorrect", "never")

#: two negation words at most this many positions apart flip to one affirmation
NEGATION_WINDOW = 2

_SENTENCE_END_RE = re.compile(r"[.!?]+(?=\s|$)")


@dataclass(frozen=True)
class Judgment:
    label: str  # "Yes" | "No" | "Abstain"
    matched_evidence: str = ""


@dataclass(frozen=True)
class _Match:
    pos: int
    label: str
    evidence: str


class LexicalGrader:
    def __init__(self, affirm: tuple[str, ...] = AFFIRM_WORDS, negate: tuple[str, ...] = NEGATE_WORDS):
        self.affirm = frozenset(w.lower() for w in affirm)
        self.negate = frozenset(w.lower() for w in negate)
        overlap = self.affirm & self.negate
        if overlap:
            raise ValueError(f"lexicons overlap: {sorted(overlap)}")

    @classmethod
    def from_file(cls, path: str | Path) -> "LexicalGrader":
        """Load lexicon overrides from JSON: {"affirm": [...], "negate": [...]}."""
        path = Path(path)
        if not path.is_file():
            raise IngestionError(f"grader lexicon file not found: {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IngestionError(f"grader lexicon {path} is not valid JSON: {exc}") from exc
        return cls(
            affirm=tuple(payload.get("affirm", AFFIRM_WORDS)),
            negate=tuple(payload.get("negate", NEGATE_WORDS)),
        )

    @property
    def grader_id(self) -> str:
        blob = json.dumps({"affirm": sorted(self.affirm), "negate": sorted(self.negate)}, sort_keys=True)
        return f"lexical:{hashlib.sha256(blob.encode()).hexdigest()[:8]}"

    @staticmethod
    def _tokens(text: str) -> list[str]:
        out = []
        for raw in text.lower().split():
            word = "".join(ch for ch in raw if not unicodedata.category(ch).startswith("P"))
            if word:
                out.append(word)
        return out

    def _matches(self, tokens: list[str]) -> list[_Match]:
        raw: list[_Match] = []
        for pos, tok in enumerate(tokens):
            if tok in self.affirm:
                raw.append(_Match(pos, "Yes", tok))
            elif tok in self.negate:
                raw.append(_Match(pos, "No", tok))
        # pair up close negations: "not false" flips polarity once
        out: list[_Match] = []
        pending: _Match | None = None
        for m in raw:
            if m.label == "Yes":
                out.append(m)
                continue
            if pending is not None and m.pos - pending.pos <= NEGATION_WINDOW:
                out.append(_Match(pending.pos, "Yes", f"{pending.evidence} {m.evidence}"))
                pending = None
            else:
                if pending is not None:
                    out.append(pending)
                pending = m
        if pending is not None:
            out.append(pending)
        out.sort(key=lambda m: m.pos)
        return out

    def judge(self, answer_text: str) -> Judgment:
        """Deterministic binary judgment of a free-text answer."""
        first_sentence = answer_text
        m = _SENTENCE_END_RE.search(answer_text)
        if m:
            first_sentence = answer_text[: m.start()]
        first_matches = self._matches(self._tokens(first_sentence))
        labels = {match.label for match in first_matches}
        if len(labels) == 1:
            first = first_matches[0]
            return Judgment(label=first.label, matched_evidence=first.evidence)
        # both classes or neither: whole-text first occurrence decides
        all_matches = self._matches(self._tokens(answer_text))
        if all_matches:
            first = all_matches[0]
            return Judgment(label=first.label, matched_evidence=first.evidence)
        return Judgment(label="Abstain", matched_evidence="")


DEFAULT_JUDGE_PROMPT = (
    "You are a strict binary classifier. Decide whether the following answer "
    "to a yes/no question is affirmative or negative.\n\n"
    "Answer to classify:\n{answer}\n\n"
    "Reply with exactly one word: Yes or No."
)


class RemoteGrader:
    """Opt-in classifier hook: judges answers through a chat-completions model.

    The model's reply is held to a strict one-word contract; anything that
    does not start with yes/no becomes Abstain. Provider failures propagate
    (a run must not silently degrade its scoring).
    """

    def __init__(self, provider, prompt_template: str = DEFAULT_JUDGE_PROMPT, max_tokens: int = 8):
        if "{answer}" not in prompt_template:
            raise ValueError("judge prompt template must contain the {answer} placeholder")
        self.provider = provider
        self.prompt_template = prompt_template
        self.max_tokens = max_tokens

    @property
    def grader_id(self) -> str:
        description = self.provider.describe() if hasattr(self.provider, "describe") else "provider"
        return f"remote:{description}"

    def judge(self, answer_text: str) -> Judgment:
        from .provider import GenerationRequest

        prompt = self.prompt_template.replace("{answer}", answer_text if answer_text else "(empty answer)")
        response = self.provider.generate(GenerationRequest(user_prompt=prompt, max_tokens=self.max_tokens))
        tokens = LexicalGrader._tokens(response.text)
        if tokens and tokens[0] == "yes":
            return Judgment(label="Yes", matched_evidence=tokens[0])
        if tokens and tokens[0] == "no":
            return Judgment(label="No", matched_evidence=tokens[0])
        return Judgment(label="Abstain", matched_evidence="")


def score(judgment: Judgment, expected: str) -> bool:
    """Correct iff the judgment label equals the expected binary label."""
    if expected not in ("Yes", "No"):
        raise ValueError(f"expected label must be Yes or No, got {expected!r}")
    return judgment.label == expected
