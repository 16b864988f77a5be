"""Shared domain records, canonical JSONL serialization, and seeded RNG scoping.

Every record type round-trips through a line-delimited JSON form with a fixed
field order, so output files are diff-able and re-loading yields equal records.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

SEED_SOURCES = ("hotpotqa", "musique", "2wiki", "other")

# ChainRecord payload kinds
NEXT_KEY = "key"
TERMINAL_QUESTION = "question"


class RecordError(ValueError):
    """A record violates its schema or an invariant."""


@dataclass(frozen=True)
class LineError:
    """One malformed line in an input file."""

    line_no: int
    message: str


def normalized_body_hash(body: str) -> str:
    """SHA-256 of the whitespace-collapsed body, used for document dedup."""
    collapsed = " ".join(body.split())
    return hashlib.sha256(collapsed.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Document:
    title: str
    body: str
    doc_id: str = ""

    def __post_init__(self):
        if not self.body:
            raise RecordError("document body is empty")
        if not self.doc_id:
            digest = hashlib.sha256(
                (self.title + "\x00" + " ".join(self.body.split())).encode("utf-8")
            ).hexdigest()
            object.__setattr__(self, "doc_id", digest[:12])

    @property
    def content_hash(self) -> str:
        return normalized_body_hash(self.body)

    def to_record(self) -> dict:
        return {"title": self.title, "body": self.body}

    @classmethod
    def from_record(cls, obj: dict) -> "Document":
        return cls(title=str(obj.get("title", "")), body=str(obj["body"]))


@dataclass(frozen=True)
class QAInstance:
    """One multi-hop QA seed: short document list, question, gold answer."""

    instance_id: str
    source: str
    documents: tuple[Document, ...]
    question: str
    answer: str
    pass_rate: float | None = None

    def __post_init__(self):
        if self.source not in SEED_SOURCES:
            raise RecordError(f"unknown source {self.source!r}")
        if not self.documents:
            raise RecordError("instance has no documents")
        if not self.question:
            raise RecordError("instance question is empty")
        if not self.answer:
            raise RecordError("instance answer is empty")
        ids = [d.doc_id for d in self.documents]
        if len(set(ids)) != len(ids):
            raise RecordError(f"duplicate doc_id within instance {self.instance_id}")
        if self.pass_rate is not None and not 0.0 <= self.pass_rate <= 1.0:
            raise RecordError(f"pass_rate {self.pass_rate} outside [0, 1]")
        object.__setattr__(self, "documents", tuple(self.documents))

    def with_pass_rate(self, rate: float) -> "QAInstance":
        return QAInstance(
            instance_id=self.instance_id,
            source=self.source,
            documents=self.documents,
            question=self.question,
            answer=self.answer,
            pass_rate=rate,
        )

    def to_record(self) -> dict:
        rec = {
            "id": self.instance_id,
            "source": self.source,
            "question": self.question,
            "answer": self.answer,
            "documents": [d.to_record() for d in self.documents],
        }
        if self.pass_rate is not None:
            rec["pass_rate"] = self.pass_rate
        return rec

    @classmethod
    def from_record(cls, obj: dict) -> "QAInstance":
        for key in ("id", "question", "answer", "documents"):
            if key not in obj:
                raise RecordError(f"missing field {key!r}")
        docs = tuple(Document.from_record(d) for d in obj["documents"])
        return cls(
            instance_id=str(obj["id"]),
            source=str(obj.get("source", "other")),
            documents=docs,
            question=str(obj["question"]),
            answer=str(obj["answer"]),
            pass_rate=obj.get("pass_rate"),
        )


@dataclass(frozen=True)
class ChainRecord:
    """One key -> value link plus its insertion site in the assembled context."""

    key: str
    payload_kind: str  # NEXT_KEY or TERMINAL_QUESTION
    payload: str
    chain_id: str
    doc_index: int
    offset: int

    def __post_init__(self):
        if self.payload_kind not in (NEXT_KEY, TERMINAL_QUESTION):
            raise RecordError(f"bad payload_kind {self.payload_kind!r}")
        if not self.payload:
            raise RecordError("empty chain payload")

    @property
    def is_terminal(self) -> bool:
        return self.payload_kind == TERMINAL_QUESTION

    def to_record(self) -> dict:
        return {
            "key": self.key,
            "payload_kind": self.payload_kind,
            "payload": self.payload,
            "doc_index": self.doc_index,
            "offset": self.offset,
        }

    @classmethod
    def from_record(cls, obj: dict, chain_id: str) -> "ChainRecord":
        return cls(
            key=str(obj["key"]),
            payload_kind=str(obj["payload_kind"]),
            payload=str(obj["payload"]),
            chain_id=chain_id,
            doc_index=int(obj["doc_index"]),
            offset=int(obj["offset"]),
        )


@dataclass(frozen=True)
class KeyChainTask:
    """A synthesized long-context task with one true chain and decoy chains."""

    task_id: str
    context: str
    prompt: str
    start_key: str
    true_chain: tuple[ChainRecord, ...]
    decoy_chains: tuple[tuple[ChainRecord, ...], ...]
    hidden_question: str
    answer: str
    token_count: int
    rng_seed: int
    config_hash: str = ""

    def __post_init__(self):
        if not self.true_chain:
            raise RecordError("true chain is empty")
        if self.true_chain[0].key != self.start_key:
            raise RecordError("start_key is not the first key of the true chain")
        last = self.true_chain[-1]
        if not last.is_terminal or last.payload != self.hidden_question:
            raise RecordError("true chain does not terminate in the hidden question")
        terminals = sum(1 for c in self.all_chains() if c[-1].payload == self.hidden_question)
        if terminals != 1:
            raise RecordError("hidden question must terminate exactly one chain")
        object.__setattr__(self, "true_chain", tuple(self.true_chain))
        object.__setattr__(self, "decoy_chains", tuple(tuple(c) for c in self.decoy_chains))

    def all_chains(self) -> list[tuple[ChainRecord, ...]]:
        return [tuple(self.true_chain)] + [tuple(c) for c in self.decoy_chains]

    def all_records(self) -> list[ChainRecord]:
        return [rec for chain in self.all_chains() for rec in chain]

    def to_record(self) -> dict:
        chains = []
        for chain in self.all_chains():
            chains.append(
                {
                    "id": chain[0].chain_id,
                    "links": [rec.to_record() for rec in chain],
                }
            )
        return {
            "id": self.task_id,
            "prompt": self.prompt,
            "context": self.context,
            "start_key": self.start_key,
            "hidden_question": self.hidden_question,
            "answer": self.answer,
            "chains": chains,
            "token_count": self.token_count,
            "seed": self.rng_seed,
            "config_hash": self.config_hash,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "KeyChainTask":
        start_key = str(obj["start_key"])
        true_chain: tuple[ChainRecord, ...] | None = None
        decoys = []
        for chain_obj in obj["chains"]:
            chain_id = str(chain_obj["id"])
            links = tuple(ChainRecord.from_record(l, chain_id) for l in chain_obj["links"])
            if links and links[0].key == start_key:
                true_chain = links
            else:
                decoys.append(links)
        if true_chain is None:
            raise RecordError("no chain starts at start_key")
        return cls(
            task_id=str(obj["id"]),
            context=str(obj["context"]),
            prompt=str(obj["prompt"]),
            start_key=start_key,
            true_chain=true_chain,
            decoy_chains=tuple(decoys),
            hidden_question=str(obj["hidden_question"]),
            answer=str(obj["answer"]),
            token_count=int(obj["token_count"]),
            rng_seed=int(obj["seed"]),
            config_hash=str(obj.get("config_hash", "")),
        )


@dataclass(frozen=True)
class Trajectory:
    text: str
    extracted_answer: str | None
    reward: int

    def __post_init__(self):
        if self.reward not in (0, 1):
            raise RecordError(f"trajectory reward {self.reward!r} not in {{0, 1}}")


@dataclass(frozen=True)
class RolloutGroup:
    """G sampled trajectories for one task, with rewards and optional token stats."""

    task_id: str
    trajectories: tuple[Trajectory, ...]
    ratios: tuple[tuple[float, ...], ...] | None = None
    kl_terms: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if not self.trajectories:
            raise RecordError("rollout group is empty")
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for name in ("ratios", "kl_terms"):
            val = getattr(self, name)
            if val is not None:
                val = tuple(tuple(float(x) for x in row) for row in val)
                if len(val) != len(self.trajectories):
                    raise RecordError(f"{name} length != group size")
                object.__setattr__(self, name, val)
        if self.ratios is not None and self.kl_terms is not None:
            for i, (r, k) in enumerate(zip(self.ratios, self.kl_terms)):
                if len(r) != len(k):
                    raise RecordError(f"ratios/kl_terms length mismatch at trajectory {i}")

    @property
    def group_size(self) -> int:
        return len(self.trajectories)

    @property
    def rewards(self) -> list[int]:
        return [t.reward for t in self.trajectories]

    def to_record(self) -> dict:
        rec: dict[str, Any] = {"task_id": self.task_id, "rewards": self.rewards}
        if any(t.text for t in self.trajectories):
            rec["completions"] = [t.text for t in self.trajectories]
        if self.ratios is not None:
            rec["ratios"] = [list(r) for r in self.ratios]
        if self.kl_terms is not None:
            rec["kl_terms"] = [list(k) for k in self.kl_terms]
        return rec

    @classmethod
    def from_record(cls, obj: dict) -> "RolloutGroup":
        rewards = [int(r) for r in obj["rewards"]]
        texts = obj.get("completions") or [""] * len(rewards)
        if len(texts) != len(rewards):
            raise RecordError("completions/rewards length mismatch")
        trajs = tuple(Trajectory(text=t, extracted_answer=None, reward=r) for t, r in zip(texts, rewards))
        ratios = obj.get("ratios")
        kl = obj.get("kl_terms")
        return cls(
            task_id=str(obj["task_id"]),
            trajectories=trajs,
            ratios=tuple(tuple(r) for r in ratios) if ratios is not None else None,
            kl_terms=tuple(tuple(k) for k in kl) if kl is not None else None,
        )


STAGES = ("warmup", "stage1", "stage2")
DIFFICULTIES = ("easy", "medium", "hard")


@dataclass(frozen=True)
class MixtureEntry:
    name: str
    source_kind: str
    count: int
    length_lo: int
    length_hi: int
    difficulty: str
    stages: frozenset[str]

    def __post_init__(self):
        if self.count <= 0:
            raise RecordError(f"entry {self.name}: count must be positive")
        if self.length_lo > self.length_hi:
            raise RecordError(f"entry {self.name}: length window lo > hi")
        if self.difficulty not in DIFFICULTIES:
            raise RecordError(f"entry {self.name}: unknown difficulty {self.difficulty!r}")
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise RecordError(f"entry {self.name}: unknown stages {sorted(bad)}")
        object.__setattr__(self, "stages", frozenset(self.stages))

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "source_kind": self.source_kind,
            "count": self.count,
            "length": [self.length_lo, self.length_hi],
            "difficulty": self.difficulty,
            "stages": sorted(self.stages),
        }

    @classmethod
    def from_record(cls, obj: dict) -> "MixtureEntry":
        lo, hi = obj["length"]
        return cls(
            name=str(obj["name"]),
            source_kind=str(obj["source_kind"]),
            count=int(obj["count"]),
            length_lo=int(lo),
            length_hi=int(hi),
            difficulty=str(obj["difficulty"]),
            stages=frozenset(obj["stages"]),
        )


@dataclass(frozen=True)
class MixtureSpec:
    entries: tuple[MixtureEntry, ...]

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise RecordError("duplicate mixture entry names")
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def total_count(self) -> int:
        return sum(e.count for e in self.entries)

    def to_record(self) -> dict:
        return {"entries": [e.to_record() for e in self.entries]}

    @classmethod
    def from_record(cls, obj: dict) -> "MixtureSpec":
        return cls(entries=tuple(MixtureEntry.from_record(e) for e in obj["entries"]))


# --- JSONL I/O -------------------------------------------------------------


def dumps_record(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False)


def save_records(items: Iterable[Any], path: str | Path) -> int:
    """Write records one JSON object per line; returns the number written."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            rec = item.to_record() if hasattr(item, "to_record") else item
            fh.write(dumps_record(rec))
            fh.write("\n")
            n += 1
    return n


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_no, parsed object) for every non-blank line."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield line_no, json.loads(line)


def _instance_from_native(obj: dict, kind: str) -> QAInstance:
    """Parse one record in a public multi-hop QA dataset layout."""
    if kind == "hotpotqa" or kind == "2wiki":
        # {_id, question, answer, context: [[title, [sentence, ...]], ...]}
        docs = tuple(
            Document(title=str(title), body=" ".join(str(s) for s in sentences))
            for title, sentences in obj["context"]
        )
        raw_id = obj.get("_id") or obj.get("id")
        source = "hotpotqa" if kind == "hotpotqa" else "2wiki"
    elif kind == "musique":
        # {id, question, answer, paragraphs: [{title, paragraph_text}, ...]}
        docs = tuple(
            Document(title=str(p.get("title", "")), body=str(p["paragraph_text"]))
            for p in obj["paragraphs"]
        )
        raw_id = obj.get("id")
        source = "musique"
    else:
        raise RecordError(f"unknown seed layout {kind!r}")
    question = obj.get("question")
    answer = obj.get("answer")
    if not question:
        raise RecordError("missing field 'question'")
    if not answer:
        raise RecordError("missing field 'answer'")
    if raw_id:
        instance_id = f"{source}:{raw_id}"
    else:
        content = hashlib.sha256((str(question) + "\x00" + str(answer)).encode("utf-8")).hexdigest()
        instance_id = f"{source}:{content[:16]}"
    return QAInstance(
        instance_id=instance_id,
        source=source,
        documents=docs,
        question=str(question),
        answer=str(answer),
    )


SEED_LAYOUTS = ("seed", "hotpotqa", "musique", "2wiki")


def load_instances(path: str | Path, kind: str = "seed") -> tuple[list[QAInstance], list[LineError]]:
    """Load QA seed instances from a line-record file.

    Well-formed records are returned in file order; malformed lines are
    collected as LineErrors (never silently dropped). Duplicate instance ids
    are reported as errors against the later line.
    """
    if kind not in SEED_LAYOUTS:
        raise ValueError(f"unknown layout {kind!r}; expected one of {SEED_LAYOUTS}")
    instances: list[QAInstance] = []
    errors: list[LineError] = []
    seen: set[str] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if kind == "seed":
                    inst = QAInstance.from_record(obj)
                else:
                    inst = _instance_from_native(obj, kind)
            except (json.JSONDecodeError, RecordError, KeyError, TypeError, ValueError) as exc:
                errors.append(LineError(line_no, f"line {line_no}: {exc}"))
                continue
            if inst.instance_id in seen:
                errors.append(LineError(line_no, f"line {line_no}: duplicate instance id {inst.instance_id!r}"))
                continue
            seen.add(inst.instance_id)
            instances.append(inst)
    return instances, errors


def load_tasks(path: str | Path) -> list[KeyChainTask]:
    return [KeyChainTask.from_record(obj) for _, obj in iter_jsonl(path)]


def load_rollout_groups(path: str | Path) -> list[RolloutGroup]:
    return [RolloutGroup.from_record(obj) for _, obj in iter_jsonl(path)]


# --- Deterministic RNG scoping ---------------------------------------------


def derive_rng(master_seed: int, scope: str) -> random.Random:
    """Derive an independent generator for (master_seed, scope).

    The same pair always yields an identical stream; distinct scopes or seeds
    yield unrelated streams. Downstream randomized operations take only
    derived generators, never a shared global stream.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(int(master_seed).to_bytes(8, "little", signed=True))
    h.update(b"\x00")
    h.update(scope.encode("utf-8"))
    return random.Random(int.from_bytes(h.digest(), "little"))
