"""Context extension: grow a short QA context toward a length budget by
splicing in distractor documents, then shuffle the document order.

Lengths are measured in configurable counter units so budgets stay
tokenizer-agnostic; the default proxy is ceil(chars / 4).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from pathlib import Path

from .records import Document, QAInstance, RecordError

CHARS_DIV_4 = "chars_div_4"
WHITESPACE_WORDS = "whitespace_words"
EXTERNAL_VOCAB = "external_vocab"

COUNTER_MODES = (CHARS_DIV_4, WHITESPACE_WORDS, EXTERNAL_VOCAB)

DOC_SEPARATOR = "\n\n"


class ExtensionRejected(ValueError):
    """The instance cannot be extended under the given budget."""


@dataclass
class TokenCounter:
    """Deterministic text-length proxy in counter units."""

    mode: str = CHARS_DIV_4
    vocab_path: str | None = None

    def __post_init__(self):
        if self.mode not in COUNTER_MODES:
            raise ValueError(f"unknown counter mode {self.mode!r}")
        if self.mode == EXTERNAL_VOCAB and not self.vocab_path:
            raise ValueError("external_vocab mode requires vocab_path")
        self._vocab: set[str] | None = None
        self._vocab_maxlen = 0

    def count(self, text: str) -> int:
        if self.mode == CHARS_DIV_4:
            return (len(text) + 3) // 4
        if self.mode == WHITESPACE_WORDS:
            return len(text.split())
        return sum(self._count_word(w) for w in text.split())

    def _load_vocab(self) -> set[str]:
        if self._vocab is None:
            vocab = set()
            with Path(self.vocab_path).open("r", encoding="utf-8") as fh:
                for line in fh:
                    tok = line.rstrip("\n")
                    if tok:
                        vocab.add(tok)
            self._vocab = vocab
            self._vocab_maxlen = max((len(t) for t in vocab), default=0)
        return self._vocab

    def _count_word(self, word: str) -> int:
        # greedy longest-prefix segmentation; an unmatched char costs 1
        vocab = self._load_vocab()
        n, i, tokens = len(word), 0, 0
        while i < n:
            for j in range(min(n, i + self._vocab_maxlen), i, -1):
                if word[i:j] in vocab:
                    tokens += 1
                    i = j
                    break
            else:
                tokens += 1
                i += 1
        return tokens


def count_tokens(text: str, counter: TokenCounter) -> int:
    return counter.count(text)


@dataclass(frozen=True)
class Budget:
    target: int = 16384
    hard_cap: int = 16384

    def __post_init__(self):
        if self.target < 1:
            raise ValueError("budget target must be >= 1")
        if self.hard_cap < self.target:
            raise ValueError("hard_cap must be >= target")


def document_block(index: int, doc: Document) -> str:
    head = f"<Document {index}>"
    if doc.title:
        return f"{head}\n{doc.title}\n{doc.body}"
    return f"{head}\n{doc.body}"


def assemble_context(documents) -> str:
    return DOC_SEPARATOR.join(document_block(i, d) for i, d in enumerate(documents))


class _BudgetLedger:
    """Exact running count of the assembled context as documents are appended.

    Exactness relies on the separator being pure whitespace: word-based modes
    are additive across it, and the chars mode reduces to raw length
    bookkeeping.
    """

    def __init__(self, counter: TokenCounter):
        self.counter = counter
        self.n = 0
        self.chars = 0
        self.units = 0

    def _block_stats(self, doc: Document) -> tuple[int, int]:
        block = document_block(self.n, doc)
        return len(block), self.counter.count(block)

    def cost_with(self, doc: Document) -> int:
        chars, units = self._block_stats(doc)
        return self._total(self.n + 1, self.chars + chars, self.units + units)

    def add(self, doc: Document) -> None:
        chars, units = self._block_stats(doc)
        self.n += 1
        self.chars += chars
        self.units += units

    def _total(self, n: int, chars: int, units: int) -> int:
        if n == 0:
            return 0
        if self.counter.mode == CHARS_DIV_4:
            return (chars + len(DOC_SEPARATOR) * (n - 1) + 3) // 4
        return units

    @property
    def count(self) -> int:
        return self._total(self.n, self.chars, self.units)


@dataclass(frozen=True)
class ExtendedInstance:
    """A seed instance grown with shuffled distractor documents."""

    base: QAInstance
    all_documents: tuple[Document, ...]
    token_count: int
    budget: Budget
    pool_exhausted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "all_documents", tuple(self.all_documents))
        have = {d.content_hash for d in self.all_documents}
        for d in self.base.documents:
            if d.content_hash not in have:
                raise RecordError("original document missing from extended instance")

    def context(self) -> str:
        return assemble_context(self.all_documents)

    def to_record(self) -> dict:
        return {
            "id": self.base.instance_id,
            "source": self.base.source,
            "question": self.base.question,
            "answer": self.base.answer,
            "documents": [d.to_record() for d in self.all_documents],
            "original_hashes": sorted(d.content_hash for d in self.base.documents),
            "token_count": self.token_count,
            "budget": {"target": self.budget.target, "hard_cap": self.budget.hard_cap},
            "pool_exhausted": self.pool_exhausted,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "ExtendedInstance":
        docs = tuple(Document.from_record(d) for d in obj["documents"])
        originals_hashes = set(obj["original_hashes"])
        originals = []
        seen = set()
        for d in docs:
            if d.content_hash in originals_hashes and d.content_hash not in seen:
                originals.append(d)
                seen.add(d.content_hash)
        base = QAInstance(
            instance_id=str(obj["id"]),
            source=str(obj.get("source", "other")),
            documents=tuple(originals),
            question=str(obj["question"]),
            answer=str(obj["answer"]),
        )
        return cls(
            base=base,
            all_documents=docs,
            token_count=int(obj["token_count"]),
            budget=Budget(int(obj["budget"]["target"]), int(obj["budget"]["hard_cap"])),
            pool_exhausted=bool(obj.get("pool_exhausted", False)),
        )


def extend(
    instance: QAInstance,
    pool: list[Document],
    counter: TokenCounter,
    budget: Budget,
    rng: random.Random,
) -> ExtendedInstance:
    """Splice distractors into the instance until the next one would exceed
    the target, then shuffle the combined document order.

    Distractors are drawn without replacement, skipping any document whose
    content hash duplicates an original or an already-added distractor.
    Instances whose originals alone exceed the budget are rejected.
    """
    if not pool:
        raise ValueError("empty distractor pool")
    ledger = _BudgetLedger(counter)
    for doc in instance.documents:
        ledger.add(doc)
    if ledger.count > budget.target or ledger.count > budget.hard_cap:
        raise ExtensionRejected(
            f"instance {instance.instance_id}: originals alone are {ledger.count} units, "
            f"over budget (target {budget.target}, hard_cap {budget.hard_cap})"
        )
    seen = {d.content_hash for d in instance.documents}
    order = list(range(len(pool)))
    rng.shuffle(order)
    added: list[Document] = []
    exhausted = True
    for idx in order:
        doc = pool[idx]
        if doc.content_hash in seen:
            continue
        if ledger.cost_with(doc) > budget.target:
            exhausted = False
            break
        ledger.add(doc)
        added.append(doc)
        seen.add(doc.content_hash)
    all_docs = list(instance.documents) + added
    rng.shuffle(all_docs)
    token_count = ledger.count
    pool_exhausted = exhausted and token_count < math.ceil(0.9 * budget.target)
    return ExtendedInstance(
        base=instance,
        all_documents=tuple(all_docs),
        token_count=token_count,
        budget=budget,
        pool_exhausted=pool_exhausted,
    )
