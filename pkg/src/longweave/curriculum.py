"""Mixture assembly and multi-stage schedule data operations.

A manifest is a view: it references records by id and source file, never
copies content. Stage selection is flag-based; the hard-mining pass keeps
exactly the tasks with at least one failed rollout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .extension import TokenCounter
from .records import MixtureEntry, MixtureSpec, dumps_record, iter_jsonl


class MixtureError(ValueError):
    pass


class MiningError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    entry: str
    record_id: str
    length: int

    def to_record(self) -> dict:
        return {"entry": self.entry, "id": self.record_id, "length": self.length}


@dataclass(frozen=True)
class Manifest:
    seed: int
    spec_hash: str
    entries: tuple[MixtureEntry, ...]
    sources: dict[str, str]
    rows: tuple[ManifestRow, ...]

    def entry_by_name(self, name: str) -> MixtureEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for row in self.rows:
            out[row.entry] = out.get(row.entry, 0) + 1
        return out

    @property
    def total(self) -> int:
        return len(self.rows)

    def save(self, path: str | Path) -> None:
        header = {
            "seed": self.seed,
            "spec_hash": self.spec_hash,
            "entries": [e.to_record() for e in self.entries],
            "sources": dict(sorted(self.sources.items())),
        }
        with Path(path).open("w", encoding="utf-8") as fh:
            fh.write(dumps_record(header))
            fh.write("\n")
            for row in self.rows:
                fh.write(dumps_record(row.to_record()))
                fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        rows = []
        header = None
        for line_no, obj in iter_jsonl(path):
            if header is None:
                header = obj
                continue
            rows.append(ManifestRow(entry=str(obj["entry"]), record_id=str(obj["id"]), length=int(obj["length"])))
        if header is None:
            raise MixtureError(f"manifest {path} has no header line")
        entries = tuple(MixtureEntry.from_record(e) for e in header["entries"])
        return cls(
            seed=int(header["seed"]),
            spec_hash=str(header["spec_hash"]),
            entries=entries,
            sources={str(k): str(v) for k, v in header.get("sources", {}).items()},
            rows=tuple(rows),
        )


def spec_hash(spec: MixtureSpec) -> str:
    blob = json.dumps(spec.to_record(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def record_id_and_length(obj: dict, counter: TokenCounter) -> tuple[str, int]:
    """Resolve a record's id and its length in counter units.

    An explicit token_count wins; otherwise the length is counted over the
    record's context, or over its documents plus question for seed-shaped
    records.
    """
    record_id = obj.get("id") or obj.get("task_id")
    if not record_id:
        raise MixtureError("record has neither 'id' nor 'task_id'")
    if "token_count" in obj:
        return str(record_id), int(obj["token_count"])
    if "context" in obj:
        return str(record_id), counter.count(str(obj["context"]))
    parts = [str(d.get("body", "")) for d in obj.get("documents", [])]
    parts.append(str(obj.get("question", "")))
    return str(record_id), counter.count("\n\n".join(p for p in parts if p))


def build_mixture(
    spec: MixtureSpec,
    sources: dict[str, str],
    seed: int,
    counter: TokenCounter | None = None,
) -> Manifest:
    """Sample exactly `count` in-window records per entry (seeded).

    Errors name the offending entry, with example out-of-window records when
    the eligible pool is too small.
    """
    from .records import derive_rng

    counter = counter or TokenCounter()
    rows: list[ManifestRow] = []
    for entry in spec.entries:
        source = sources.get(entry.name)
        if source is None:
            raise MixtureError(f"entry {entry.name!r} has no source file")
        if not Path(source).exists():
            raise MixtureError(f"entry {entry.name!r}: source file {source} does not exist")
        eligible: list[tuple[str, int]] = []
        violations: list[tuple[str, int]] = []
        seen_ids: set[str] = set()
        for _, obj in iter_jsonl(source):
            record_id, length = record_id_and_length(obj, counter)
            if record_id in seen_ids:
                continue
            seen_ids.add(record_id)
            if entry.length_lo <= length <= entry.length_hi:
                eligible.append((record_id, length))
            else:
                violations.append((record_id, length))
        if len(eligible) < entry.count:
            examples = "; ".join(f"{rid}@{ln}" for rid, ln in violations[:5])
            raise MixtureError(
                f"entry {entry.name!r}: {len(eligible)} records in window "
                f"[{entry.length_lo}, {entry.length_hi}], need {entry.count}"
                + (f" (out-of-window examples: {examples})" if examples else "")
            )
        rng = derive_rng(seed, f"mix:{entry.name}")
        chosen = rng.sample(eligible, entry.count)
        rows.extend(ManifestRow(entry.name, rid, ln) for rid, ln in chosen)
    return Manifest(
        seed=seed,
        spec_hash=spec_hash(spec),
        entries=spec.entries,
        sources=dict(sources),
        rows=tuple(rows),
    )


def stage_filter(manifest: Manifest, stage: str) -> Manifest:
    """Subset the manifest to the entries flagged for the given stage."""
    from .records import STAGES

    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    keep_entries = tuple(e for e in manifest.entries if stage in e.stages)
    keep_names = {e.name for e in keep_entries}
    return Manifest(
        seed=manifest.seed,
        spec_hash=manifest.spec_hash,
        entries=keep_entries,
        sources={k: v for k, v in manifest.sources.items() if k in keep_names},
        rows=tuple(r for r in manifest.rows if r.entry in keep_names),
    )


@dataclass(frozen=True)
class MiningReport:
    total: int
    retained: int
    all_correct_everywhere: bool

    @property
    def retained_fraction(self) -> float:
        return self.retained / self.total if self.total else 0.0

    def to_record(self) -> dict:
        return {
            "total": self.total,
            "retained": self.retained,
            "retained_fraction": self.retained_fraction,
            "all_correct_everywhere": self.all_correct_everywhere,
        }


def mine_hard(
    manifest: Manifest,
    rollout_results: dict[str, list[int]],
) -> tuple[Manifest, MiningReport]:
    """Keep only tasks with at least one failed rollout.

    A manifest task without recorded rollouts is a hard error; silently
    retaining (or dropping) it would corrupt the stage's difficulty mix.
    """
    kept_rows = []
    for row in manifest.rows:
        rewards = rollout_results.get(row.record_id)
        if not rewards:
            raise MiningError(f"task {row.record_id!r} has no recorded rollouts")
        if any(r != 1 for r in rewards):
            kept_rows.append(row)
    report = MiningReport(
        total=len(manifest.rows),
        retained=len(kept_rows),
        all_correct_everywhere=(len(kept_rows) == 0 and len(manifest.rows) > 0),
    )
    kept_names = {r.entry for r in kept_rows}
    subset = Manifest(
        seed=manifest.seed,
        spec_hash=manifest.spec_hash,
        entries=tuple(e for e in manifest.entries if e.name in kept_names),
        sources={k: v for k, v in manifest.sources.items() if k in kept_names},
        rows=tuple(kept_rows),
    )
    return subset, report


def load_mixture_config(path: str | Path) -> tuple[MixtureSpec, dict[str, str]]:
    """Read a mixture spec plus per-entry source paths from a TOML file.

    Relative source paths resolve against the config file's directory.
    """
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    path = Path(path)
    with path.open("rb") as fh:
        data = tomllib.load(fh)
    entries = []
    sources: dict[str, str] = {}
    for raw in data.get("entry", []):
        entry = MixtureEntry(
            name=str(raw["name"]),
            source_kind=str(raw.get("source_kind", "qa")),
            count=int(raw["count"]),
            length_lo=int(raw["length"][0]),
            length_hi=int(raw["length"][1]),
            difficulty=str(raw.get("difficulty", "medium")),
            stages=frozenset(raw.get("stages", ["warmup", "stage1", "stage2"])),
        )
        entries.append(entry)
        if "source" in raw:
            src = Path(raw["source"])
            if not src.is_absolute():
                src = path.parent / src
            sources[entry.name] = str(src)
    return MixtureSpec(entries=tuple(entries)), sources
