"""Rule-based answer verification for rollout trajectories.

The primary rule is a two-way substring exact match on the final boxed
answer: reward 1 iff the gold answer contains the extracted answer or vice
versa. Strict exact match, token-level F1, and a set-containment mode for
multi-value retrieval tasks are provided as alternatives.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

TWO_WAY = "two_way_substring"
EXACT = "exact"
F1 = "f1"
SET_MATCH = "set_match"

RULES = (TWO_WAY, EXACT, F1, SET_MATCH)


@dataclass(frozen=True)
class Normalization:
    """Text normalization applied to both sides before comparison."""

    case_fold: bool = True
    collapse_whitespace: bool = True
    trim: bool = True

    def apply(self, text: str) -> str:
        if self.case_fold:
            text = text.casefold()
        if self.collapse_whitespace:
            text = " ".join(text.split())
        elif self.trim:
            text = text.strip()
        return text


DEFAULT_NORMALIZATION = Normalization()


@dataclass(frozen=True)
class VerifierOutcome:
    reward: float
    extracted: str | None
    rule: str
    detail: str

    def to_record(self, task_id: str) -> dict:
        return {
            "task_id": task_id,
            "rule": self.rule,
            "reward": self.reward,
            "extracted": self.extracted,
        }


_BOXED = "\\boxed{"


def extract_boxed(trajectory: str) -> str | None:
    """Content of the last balanced \\boxed{...} in the trajectory, if any.

    Balanced-brace matching, so nested braces survive intact. Enclosing
    \\text{...} wrappers and surrounding whitespace are stripped. Returns
    None when no balanced occurrence exists.
    """
    last = None
    start = trajectory.find(_BOXED)
    while start != -1:
        content = _match_braces(trajectory, start + len(_BOXED) - 1)
        if content is not None:
            last = content
        start = trajectory.find(_BOXED, start + 1)
    if last is None:
        return None
    return _strip_text_wrappers(last).strip()


def _match_braces(text: str, open_idx: int) -> str | None:
    """Content between text[open_idx] == '{' and its balanced closer."""
    depth = 0
    for i in range(open_idx, len(text)):
        ch = text[i]
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[open_idx + 1 : i]
    return None


def _strip_text_wrappers(content: str) -> str:
    while True:
        inner = content.strip()
        if not inner.startswith("\\text{") or not inner.endswith("}"):
            return content
        body = _match_braces(inner, len("\\text{") - 1)
        if body is None or len("\\text{") + len(body) + 1 != len(inner):
            return content
        content = body


def verify_two_way(
    extracted: str | None,
    gold: str,
    normalization: Normalization = DEFAULT_NORMALIZATION,
) -> VerifierOutcome:
    """Reward 1 iff either normalized side is a substring of the other.

    An absent or empty-after-normalization extraction scores 0; without that
    guard the empty string would be a substring of everything and boxing
    nothing would be rewarded.
    """
    if not gold:
        raise ValueError("gold answer is empty")
    if extracted is None:
        return VerifierOutcome(0, None, TWO_WAY, "no boxed answer")
    y = normalization.apply(extracted)
    a = normalization.apply(gold)
    if not y or not a:
        return VerifierOutcome(0, extracted, TWO_WAY, "empty after normalization")
    if a in y or y in a:
        return VerifierOutcome(1, extracted, TWO_WAY, "substring match")
    return VerifierOutcome(0, extracted, TWO_WAY, "no substring either way")


def verify_exact(
    extracted: str | None,
    gold: str,
    normalization: Normalization = DEFAULT_NORMALIZATION,
) -> VerifierOutcome:
    """Reward 1 iff the normalized strings are equal."""
    if not gold:
        raise ValueError("gold answer is empty")
    if extracted is None:
        return VerifierOutcome(0, None, EXACT, "no boxed answer")
    y = normalization.apply(extracted)
    a = normalization.apply(gold)
    if y and y == a:
        return VerifierOutcome(1, extracted, EXACT, "exact match")
    return VerifierOutcome(0, extracted, EXACT, "mismatch")


def verify_f1(
    extracted: str | None,
    gold: str,
    normalization: Normalization = DEFAULT_NORMALIZATION,
) -> VerifierOutcome:
    """Token-level F1 over whitespace tokens; 0 when either side is empty."""
    if not gold:
        raise ValueError("gold answer is empty")
    if extracted is None:
        return VerifierOutcome(0.0, None, F1, "no boxed answer")
    y_tokens = normalization.apply(extracted).split()
    a_tokens = normalization.apply(gold).split()
    if not y_tokens or not a_tokens:
        return VerifierOutcome(0.0, extracted, F1, "empty token list")
    overlap = _multiset_overlap(y_tokens, a_tokens)
    if overlap == 0:
        return VerifierOutcome(0.0, extracted, F1, "no token overlap")
    precision = overlap / len(y_tokens)
    recall = overlap / len(a_tokens)
    score = 2 * precision * recall / (precision + recall)
    return VerifierOutcome(score, extracted, F1, f"P={precision:.4f} R={recall:.4f}")


def _multiset_overlap(xs: list[str], ys: list[str]) -> int:
    counts: dict[str, int] = {}
    for y in ys:
        counts[y] = counts.get(y, 0) + 1
    overlap = 0
    for x in xs:
        if counts.get(x, 0) > 0:
            counts[x] -= 1
            overlap += 1
    return overlap


def _infer_item_pattern(gold_set: list[str]) -> str | None:
    if all(re.fullmatch(r"[0-9]+", g) for g in gold_set):
        shortest = min(len(g) for g in gold_set)
        return rf"[0-9]{{{shortest},}}"
    if all(re.fullmatch(r"[A-Z]+", g) for g in gold_set):
        shortest = min(len(g) for g in gold_set)
        return rf"\b[A-Z]{{{shortest},}}\b"
    return None


def verify_set(
    extracted: str | None,
    gold_set: list[str],
    normalization: Normalization = DEFAULT_NORMALIZATION,
    item_pattern: str | None = None,
) -> VerifierOutcome:
    """Order-insensitive all-items match for multi-value answers.

    Reward 1 iff every gold item occurs in the extraction and the extraction
    names nothing extra: tokens matching the gold items' grammar
    (`item_pattern`, inferred from the gold set when not given) that are not
    themselves gold score 0.
    """
    if not gold_set or any(not g for g in gold_set):
        raise ValueError("gold set must be non-empty strings")
    if extracted is None:
        return VerifierOutcome(0, None, SET_MATCH, "no boxed answer")
    y = normalization.apply(extracted)
    if not y:
        return VerifierOutcome(0, extracted, SET_MATCH, "empty after normalization")
    missing = [g for g in gold_set if normalization.apply(g) not in y]
    if missing:
        return VerifierOutcome(0, extracted, SET_MATCH, f"missing {missing}")
    pattern = item_pattern if item_pattern is not None else _infer_item_pattern(gold_set)
    if pattern is not None:
        golds = set(gold_set)
        extras = [m for m in re.findall(pattern, extracted) if m not in golds]
        if extras:
            return VerifierOutcome(0, extracted, SET_MATCH, f"extra items {extras}")
    return VerifierOutcome(1, extracted, SET_MATCH, "all items present, none extra")


def verify(
    rule: str,
    extracted: str | None,
    gold: str | list[str],
    normalization: Normalization = DEFAULT_NORMALIZATION,
) -> VerifierOutcome:
    """Dispatch on rule name; `gold` is a list only for set_match."""
    if rule == TWO_WAY:
        return verify_two_way(extracted, gold, normalization)
    if rule == EXACT:
        return verify_exact(extracted, gold, normalization)
    if rule == F1:
        return verify_f1(extracted, gold, normalization)
    if rule == SET_MATCH:
        gold_list = gold if isinstance(gold, list) else [gold]
        return verify_set(extracted, gold_list, normalization)
    raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")


class JudgeVerifier:
    """Interface stub for model-judged verification; no judge is implemented."""

    def __call__(self, extracted: str | None, gold: str) -> VerifierOutcome:
        raise NotImplementedError("model-judged verification is out of scope")
