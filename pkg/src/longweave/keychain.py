"""Key-chain task synthesis.

One true chain of UUID key->value hops ends in the hidden original question;
decoy chains end in irrelevant questions. Pairs are rendered as JSON-style
segments spliced into the assembled context at shuffled sites, and a
text-level tracer recovers the hidden question from the context alone.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, replace

from .extension import (
    CHARS_DIV_4,
    DOC_SEPARATOR,
    ExtendedInstance,
    TokenCounter,
    assemble_context,
    document_block,
)
from .records import NEXT_KEY, TERMINAL_QUESTION, ChainRecord, KeyChainTask, derive_rng
from .templates import KEYCHAIN_TEMPLATE, get_template

DASHED_36 = "dashed_36"
RAW_32 = "raw_32"
UUID_STYLES = (DASHED_36, RAW_32)

BETWEEN_DOCS = "between_docs"
INSIDE_DOCS = "inside_docs"
MIXED = "mixed"
PLACEMENT_POLICIES = (BETWEEN_DOCS, INSIDE_DOCS, MIXED)

HEX_UPPER = "0123456789ABCDEF"

# accepts both supported styles; tracing is case-sensitive
KEY_RE = re.compile(r"(?:[0-9A-F]{8}-[0-9A-F]{4}-[0-9A-F]{4}-[0-9A-F]{4}-[0-9A-F]{12}|[0-9A-F]{32})")
_PAIR_RE = re.compile(r'\{"(?:[^"\\]|\\.)*": "(?:[^"\\]|\\.)*"\}')

PAIR_SUFFIX = "\n\n"
MAX_TRACE_HOPS = 10_000
MAX_KEY_RETRIES = 100


class ChainBuildError(ValueError):
    pass


class SpliceError(ValueError):
    pass


class TraceError(ValueError):
    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason  # "start_key_absent" | "dangling_key" | "cycle" | "hop_cap"


@dataclass(frozen=True)
class ChainConfig:
    true_chain_len: int = 4
    decoy_count: int = 4
    decoy_len_lo: int = 2
    decoy_len_hi: int = 4
    uuid_style: str = DASHED_36
    pair_format: str = '{{"{key}": "{value}"}}'
    placement: str = MIXED

    def __post_init__(self):
        if self.true_chain_len < 1:
            raise ValueError("true_chain_len must be >= 1")
        if self.decoy_count < 0:
            raise ValueError("decoy_count must be >= 0")
        if self.decoy_len_lo < 1 or self.decoy_len_hi < self.decoy_len_lo:
            raise ValueError("decoy length range must satisfy 1 <= lo <= hi")
        if self.uuid_style not in UUID_STYLES:
            raise ValueError(f"unknown uuid_style {self.uuid_style!r}")
        if self.placement not in PLACEMENT_POLICIES:
            raise ValueError(f"unknown placement {self.placement!r}")
        if "{key}" not in self.pair_format or "{value}" not in self.pair_format:
            raise ValueError("pair_format needs {key} and {value} slots")

    def to_record(self) -> dict:
        return {
            "true_chain_len": self.true_chain_len,
            "decoy_count": self.decoy_count,
            "decoy_len_range": [self.decoy_len_lo, self.decoy_len_hi],
            "uuid_style": self.uuid_style,
            "pair_format": self.pair_format,
            "placement": self.placement,
        }


@dataclass(frozen=True)
class InsertionPlan:
    sites: tuple[tuple[int, int], ...]  # (doc_index, char offset within block)
    policy: str


def gen_uuid(rng: random.Random, style: str = DASHED_36) -> str:
    """32 uppercase-hex characters, optionally grouped 8-4-4-4-12 with dashes."""
    chars = "".join(rng.choice(HEX_UPPER) for _ in range(32))
    if style == RAW_32:
        return chars
    if style == DASHED_36:
        return f"{chars[:8]}-{chars[8:12]}-{chars[12:16]}-{chars[16:20]}-{chars[20:]}"
    raise ValueError(f"unknown uuid_style {style!r}")


def is_uuid_key(text: str) -> bool:
    return KEY_RE.fullmatch(text) is not None


def render_pair(key: str, value: str, pair_format: str = '{{"{key}": "{value}"}}') -> str:
    """Render one key:value pair with JSON-escaped contents."""
    esc = lambda s: json.dumps(s, ensure_ascii=False)[1:-1]
    return pair_format.format(key=esc(key), value=esc(value))


def _fresh_key(rng: random.Random, style: str, used: set[str]) -> str:
    for _ in range(MAX_KEY_RETRIES):
        key = gen_uuid(rng, style)
        if key not in used:
            used.add(key)
            return key
    raise ChainBuildError(f"could not draw a fresh key after {MAX_KEY_RETRIES} tries")


def _make_chain(
    chain_id: str,
    length: int,
    terminal_question: str,
    rng: random.Random,
    style: str,
    used_keys: set[str],
) -> list[ChainRecord]:
    keys = [_fresh_key(rng, style, used_keys) for _ in range(length)]
    records = []
    for i, key in enumerate(keys):
        if i + 1 < length:
            payload_kind, payload = NEXT_KEY, keys[i + 1]
        else:
            payload_kind, payload = TERMINAL_QUESTION, terminal_question
        records.append(
            ChainRecord(
                key=key,
                payload_kind=payload_kind,
                payload=payload,
                chain_id=chain_id,
                doc_index=-1,
                offset=-1,
            )
        )
    return records


def build_chains(
    hidden_question: str,
    distractor_questions: list[str],
    cfg: ChainConfig,
    rng: random.Random,
) -> tuple[list[ChainRecord], list[list[ChainRecord]]]:
    """True chain ending in the hidden question plus decoys ending in
    distinct distractor questions; all keys globally unique."""
    if not hidden_question:
        raise ChainBuildError("hidden question is empty")
    if is_uuid_key(hidden_question):
        raise ChainBuildError("hidden question collides with the key grammar")
    candidates = []
    seen = set()
    for q in distractor_questions:
        if not q or q == hidden_question or is_uuid_key(q) or q in seen:
            continue
        seen.add(q)
        candidates.append(q)
    if len(candidates) < cfg.decoy_count:
        raise ChainBuildError(
            f"need {cfg.decoy_count} distinct distractor questions, have {len(candidates)}"
        )
    decoy_questions = rng.sample(candidates, cfg.decoy_count)
    used_keys: set[str] = set()
    true_chain = _make_chain("c00", cfg.true_chain_len, hidden_question, rng, cfg.uuid_style, used_keys)
    decoys = []
    for d, question in enumerate(decoy_questions, start=1):
        length = rng.randint(cfg.decoy_len_lo, cfg.decoy_len_hi)
        decoys.append(_make_chain(f"c{d:02d}", length, question, rng, cfg.uuid_style, used_keys))
    return true_chain, decoys


_SENTENCE_BOUNDARY = re.compile(r"\. ")


def candidate_sites(documents, policy: str) -> list[tuple[int, int]]:
    """Rendering-safe insertion sites as (doc_index, offset within block).

    Offset 0 is the gap before the document; inside-document sites sit just
    after a ". " sentence boundary in the body.
    """
    sites: list[tuple[int, int]] = []
    if policy in (BETWEEN_DOCS, MIXED):
        sites.extend((i, 0) for i in range(len(documents)))
    if policy in (INSIDE_DOCS, MIXED):
        for i, doc in enumerate(documents):
            block = document_block(i, doc)
            body_start = len(block) - len(doc.body)
            for m in _SENTENCE_BOUNDARY.finditer(doc.body):
                sites.append((i, body_start + m.end()))
    return sites


def splice(
    extended: ExtendedInstance,
    records: list[ChainRecord],
    policy: str,
    rng: random.Random,
    pair_format: str = '{{"{key}": "{value}"}}',
) -> tuple[str, InsertionPlan]:
    """Insert every rendered pair at a distinct site of the assembled context.

    Sites are sampled in shuffled order, so the links of one chain do not
    appear in textual chain order. Removing every rendered segment restores
    the pre-splice context byte-exactly.
    """
    docs = extended.all_documents
    base = assemble_context(docs)
    sites = candidate_sites(docs, policy)
    if len(sites) < len(records):
        raise SpliceError(
            f"context offers {len(sites)} insertion sites for {len(records)} records"
        )
    chosen = rng.sample(sites, len(records))

    block_starts = []
    pos = 0
    for i, doc in enumerate(docs):
        block_starts.append(pos)
        pos += len(document_block(i, doc)) + len(DOC_SEPARATOR)
    placements = []
    for record, (doc_index, offset) in zip(records, chosen):
        segment = render_pair(record.key, record.payload, pair_format) + PAIR_SUFFIX
        if segment[: -len(PAIR_SUFFIX)] in base:
            raise SpliceError(f"rendered pair for key {record.key} already occurs in context")
        placements.append((block_starts[doc_index] + offset, segment))
    placements.sort(key=lambda p: p[0])
    pieces = []
    cursor = 0
    for abs_pos, segment in placements:
        pieces.append(base[cursor:abs_pos])
        pieces.append(segment)
        cursor = abs_pos
    pieces.append(base[cursor:])
    context = "".join(pieces)
    return context, InsertionPlan(sites=tuple(chosen), policy=policy)


def render_prompt(context: str, start_key: str, template_id: str = KEYCHAIN_TEMPLATE) -> str:
    if not start_key:
        raise ValueError("start_key is empty")
    template = get_template(template_id)
    return template.format(context=context, start_key=start_key)


def parse_pairs(context: str) -> list[tuple[str, str]]:
    """All rendered key:value pairs found in the text, in textual order."""
    pairs = []
    for m in _PAIR_RE.finditer(context):
        try:
            obj = json.loads(m.group(0))
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and len(obj) == 1:
            (key, value), = obj.items()
            if isinstance(value, str):
                pairs.append((key, value))
    return pairs


@dataclass(frozen=True)
class TraceResult:
    question: str
    hops: int


def trace_context(context: str, start_key: str) -> TraceResult:
    """Follow the chain hop by hop using only the context text."""
    mapping = dict(parse_pairs(context))
    if start_key not in mapping:
        raise TraceError("start_key_absent", f"start key {start_key!r} not found in context")
    current = start_key
    visited = {start_key}
    hops = 0
    while True:
        hops += 1
        if hops > MAX_TRACE_HOPS:
            raise TraceError("hop_cap", f"exceeded {MAX_TRACE_HOPS} hops")
        value = mapping[current]
        if not is_uuid_key(value):
            return TraceResult(question=value, hops=hops)
        if value not in mapping:
            raise TraceError("dangling_key", f"value {value!r} references an absent key")
        if value in visited:
            raise TraceError("cycle", f"key {value!r} revisited")
        visited.add(value)
        current = value


def trace(task: KeyChainTask) -> TraceResult:
    return trace_context(task.context, task.start_key)


def config_hash(cfg: ChainConfig, counter: TokenCounter, template_id: str) -> str:
    payload = {
        "chain": cfg.to_record(),
        "counter": {"mode": counter.mode, "vocab_path": counter.vocab_path},
        "template": template_id,
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def synthesize(
    extended: ExtendedInstance,
    distractor_questions: list[str],
    cfg: ChainConfig,
    seed: int,
    task_id: str | None = None,
    counter: TokenCounter | None = None,
    template_id: str = KEYCHAIN_TEMPLATE,
) -> KeyChainTask:
    """build_chains -> splice -> render_prompt for one extended instance.

    Pure function of its arguments: the generator is derived from
    (seed, task_id), so re-running yields identical bytes.
    """
    counter = counter or TokenCounter(CHARS_DIV_4)
    task_id = task_id or f"{extended.base.instance_id}/kc0"
    rng = derive_rng(seed, f"synthesize:{task_id}")
    true_chain, decoys = build_chains(extended.base.question, distractor_questions, cfg, rng)
    flat = list(true_chain) + [rec for chain in decoys for rec in chain]
    context, plan = splice(extended, flat, cfg.placement, rng, cfg.pair_format)
    positioned = [
        replace(rec, doc_index=site[0], offset=site[1]) for rec, site in zip(flat, plan.sites)
    ]
    pos_true = positioned[: len(true_chain)]
    pos_decoys = []
    at = len(true_chain)
    for chain in decoys:
        pos_decoys.append(tuple(positioned[at : at + len(chain)]))
        at += len(chain)
    prompt = render_prompt(context, true_chain[0].key, template_id)
    return KeyChainTask(
        task_id=task_id,
        context=context,
        prompt=prompt,
        start_key=true_chain[0].key,
        true_chain=tuple(pos_true),
        decoy_chains=tuple(pos_decoys),
        hidden_question=extended.base.question,
        answer=extended.base.answer,
        token_count=counter.count(context),
        rng_seed=seed,
        config_hash=config_hash(cfg, counter, template_id),
    )
