"""Seed difficulty filtering: sample each question with an oracle model,
keep instances of moderate pass rate, and pool the discards' documents as
distractor material."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .client import ChatCompletionsClient, SampleJob, SamplingParams
from .extension import assemble_context
from .records import Document, QAInstance, dumps_record, iter_jsonl
from .templates import render_qa_prompt, system_prompt
from .verify import VerifierOutcome, extract_boxed, verify_two_way


class CurationError(ValueError):
    pass


@dataclass(frozen=True)
class CurationReport:
    total: int
    kept: int
    discarded_trivial: int  # pass rate 1 (or otherwise too easy)
    discarded_unsolved: int  # pass rate 0
    per_instance: dict[str, float] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "kept": self.kept,
            "discarded_trivial": self.discarded_trivial,
            "discarded_unsolved": self.discarded_unsolved,
            "per_instance": dict(sorted(self.per_instance.items())),
        }


def build_curation_prompt(instance: QAInstance) -> tuple[str, str]:
    context = assemble_context(instance.documents)
    return system_prompt(), render_qa_prompt(context, instance.question)


def estimate_pass_rate(
    instance: QAInstance,
    client: ChatCompletionsClient,
    verifier: Callable[[str | None, str], VerifierOutcome] = verify_two_way,
    n: int = 8,
) -> float:
    """k/n where k counts completions whose boxed answer verifies against the
    gold answer. Completions without an extractable answer count as wrong."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not instance.documents:
        raise ValueError("instance has no documents")
    system, user = build_curation_prompt(instance)
    params = SamplingParams(n=n)
    batch = client.sample(system, user, params, prompt_id=instance.instance_id)
    k = 0
    for text in batch.completions:
        outcome = verifier(extract_boxed(text), instance.answer)
        if outcome.reward >= 1.0:
            k += 1
    return k / n


def estimate_pass_rates(
    instances: list[QAInstance],
    client: ChatCompletionsClient,
    n: int = 8,
    parallelism: int = 1,
    verifier: Callable[[str | None, str], VerifierOutcome] = verify_two_way,
) -> dict[str, float]:
    """Batch pass-rate estimation with bounded parallelism."""
    jobs = []
    for inst in instances:
        system, user = build_curation_prompt(inst)
        jobs.append(SampleJob(inst.instance_id, system, user, SamplingParams(n=n)))
    batches = client.sample_many(jobs, parallelism=parallelism)
    rates: dict[str, float] = {}
    for inst, batch in zip(instances, batches):
        k = sum(
            1
            for text in batch.completions
            if verifier(extract_boxed(text), inst.answer).reward >= 1.0
        )
        rates[inst.instance_id] = k / n
    return rates


def default_keep(rate: float) -> bool:
    return 0.0 < rate < 1.0


def curate(
    instances: list[QAInstance],
    keep_predicate: Callable[[float], bool] = default_keep,
) -> tuple[list[QAInstance], list[Document], CurationReport]:
    """Split instances by pass rate and pool the discards' documents.

    Every instance must carry a pass_rate (estimated or loaded from cache);
    a missing rate is a hard error rather than a silent discard. The pool is
    deduplicated by content hash and excludes any document whose hash appears
    in a kept instance.
    """
    missing = [i.instance_id for i in instances if i.pass_rate is None]
    if missing:
        raise CurationError(f"{len(missing)} instances missing pass_rate, e.g. {missing[:3]}")
    kept: list[QAInstance] = []
    discarded: list[QAInstance] = []
    trivial = unsolved = 0
    per_instance: dict[str, float] = {}
    for inst in instances:
        rate = float(inst.pass_rate)
        per_instance[inst.instance_id] = rate
        if keep_predicate(rate):
            kept.append(inst)
        else:
            discarded.append(inst)
            if rate == 0.0:
                unsolved += 1
            else:
                trivial += 1
    kept_hashes = {d.content_hash for inst in kept for d in inst.documents}
    pool: list[Document] = []
    seen: set[str] = set()
    for inst in discarded:
        for doc in inst.documents:
            h = doc.content_hash
            if h in seen or h in kept_hashes:
                continue
            seen.add(h)
            pool.append(doc)
    report = CurationReport(
        total=len(instances),
        kept=len(kept),
        discarded_trivial=trivial,
        discarded_unsolved=unsolved,
        per_instance=per_instance,
    )
    return kept, pool, report


# --- Pass-rate cache: resumable curation keyed by (instance, model, n) ------


class PassRateCache:
    """Line records {instance_id, model, n, k}; survives interrupted runs."""

    def __init__(self):
        self._entries: dict[tuple[str, str, int], int] = {}

    @classmethod
    def load(cls, path: str | Path) -> "PassRateCache":
        cache = cls()
        path = Path(path)
        if path.exists():
            for _, obj in iter_jsonl(path):
                cache.put(str(obj["instance_id"]), str(obj["model"]), int(obj["n"]), int(obj["k"]))
        return cache

    def put(self, instance_id: str, model: str, n: int, k: int) -> None:
        if not 0 <= k <= n:
            raise CurationError(f"cache entry k={k} out of range for n={n}")
        self._entries[(instance_id, model, n)] = k

    def get(self, instance_id: str, model: str, n: int) -> float | None:
        k = self._entries.get((instance_id, model, n))
        return None if k is None else k / n

    def save(self, path: str | Path) -> int:
        rows = [
            {"instance_id": iid, "model": model, "n": n, "k": k}
            for (iid, model, n), k in sorted(self._entries.items())
        ]
        with Path(path).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(dumps_record(row))
                fh.write("\n")
        return len(rows)

    def __len__(self) -> int:
        return len(self._entries)


def attach_pass_rates(
    instances: Iterable[QAInstance],
    cache: PassRateCache,
    model: str,
    n: int = 8,
) -> list[QAInstance]:
    """Populate pass_rate from the cache; instances without an entry keep
    pass_rate None (curate will then fail loudly)."""
    out = []
    for inst in instances:
        rate = cache.get(inst.instance_id, model, n)
        out.append(inst if rate is None else inst.with_pass_rate(rate))
    return out
