"""Retrieval task synthesis: book needles, variable tracking, NIAH grids.

All gold answers are recoverable by exact substring search over the
generated context, and stripping the inserted segments restores the base
text byte-exactly.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass

from .extension import TokenCounter

MULTI_KEY = "multi_key"
MULTI_VALUE = "multi_value"
NIAH_SINGLE = "niah_single"
NEEDLE_KINDS = (MULTI_KEY, MULTI_VALUE, NIAH_SINGLE)

NEEDLE_TEMPLATE = "One of the special magic numbers for {key} is: {value}."
SINGLE_QUERY = "What is the special magic number for {key} mentioned in the provided text?"
MULTI_QUERY = "What are all the special magic numbers for {key} mentioned in the provided text?"

VT_FILLER = "The grass is green. The sky is blue. The sun is yellow. Here we go. There and back again."
VT_QUERY = "Find all variables that are assigned the value {value} in the text above."

_KEY_WORDS = (
    "wandering", "age", "harbor", "marble", "copper", "violet", "ember", "willow",
    "quiet", "meadow", "lantern", "summit", "cedar", "drift", "hollow", "iron",
    "maple", "north", "orchard", "pebble", "raven", "saffron", "thistle", "umber",
    "vessel", "winter", "yonder", "zephyr", "amber", "birch", "canyon", "dune",
)

MAX_NAME_RETRIES = 100


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class NeedleTask:
    context: str
    query: str
    gold: tuple[str, ...]
    keys: tuple[str, ...]
    values: tuple[str, ...]
    positions: tuple[int, ...]  # char offset of each needle sentence in context
    kind: str

    def to_record(self, task_id: str, token_count: int | None = None, seed: int | None = None) -> dict:
        rec = {
            "id": task_id,
            "kind": self.kind,
            "context": self.context,
            "query": self.query,
            "gold": list(self.gold),
            "needle": {
                "keys": list(self.keys),
                "values": list(self.values),
                "positions": list(self.positions),
            },
        }
        if token_count is not None:
            rec["token_count"] = token_count
        if seed is not None:
            rec["seed"] = seed
        return rec


@dataclass(frozen=True)
class AssignmentChain:
    """One value flowing through a tree of variable assignments."""

    value: str
    variables: tuple[str, ...]
    statements: tuple[str, ...]


@dataclass(frozen=True)
class VTTask:
    context: str
    target_value: str
    gold_vars: frozenset[str]
    chain_specs: tuple[AssignmentChain, ...]

    def question(self) -> str:
        return VT_QUERY.format(value=self.target_value)

    def to_record(self, task_id: str, token_count: int | None = None, seed: int | None = None) -> dict:
        rec = {
            "id": task_id,
            "context": self.context,
            "query": self.question(),
            "target_value": self.target_value,
            "gold_vars": sorted(self.gold_vars),
        }
        if token_count is not None:
            rec["token_count"] = token_count
        if seed is not None:
            rec["seed"] = seed
        return rec


@dataclass(frozen=True)
class NIAHGrid:
    lengths: tuple[int, ...]
    depths: tuple[float, ...]
    cells: tuple[tuple[NeedleTask, ...], ...]  # cells[i][j]: lengths[i] x depths[j]


def truncate_to_budget(text: str, counter: TokenCounter, budget: int) -> str:
    """Longest prefix whose count fits the budget (counts are monotone in
    prefix length)."""
    if counter.count(text) <= budget:
        return text
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter.count(text[:mid]) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return text[:lo]


def _sentence_starts(text: str) -> list[int]:
    starts = [0]
    starts.extend(m.end() for m in re.finditer(r"\. ", text))
    return starts


def _draw_key(rng: random.Random, used: set[str]) -> str:
    for _ in range(MAX_NAME_RETRIES):
        key = f"{rng.choice(_KEY_WORDS)}-{rng.choice(_KEY_WORDS)}"
        if key not in used:
            used.add(key)
            return key
    raise RetrievalError("could not draw a fresh needle key")


def _draw_value(rng: random.Random, base: str, used: set[str]) -> str:
    for _ in range(MAX_NAME_RETRIES):
        value = str(rng.randint(10000, 99999))
        if value not in used and value not in base:
            used.add(value)
            return value
    raise RetrievalError("could not draw a needle value absent from the text")


def _insert_segments(base: str, inserts: list[tuple[int, str]]) -> tuple[str, list[int]]:
    """Insert segments at base-text positions; returns (text, final offsets)."""
    order = sorted(range(len(inserts)), key=lambda i: inserts[i][0])
    pieces = []
    cursor = 0
    shift = 0
    final = [0] * len(inserts)
    for i in order:
        pos, segment = inserts[i]
        pieces.append(base[cursor:pos])
        final[i] = pos + shift
        pieces.append(segment)
        shift += len(segment)
        cursor = pos
    pieces.append(base[cursor:])
    return "".join(pieces), final


def _needle_segment(sentence: str, at_end: bool) -> str:
    return (" " + sentence) if at_end else (sentence + " ")


def gen_needle_task(
    book: str,
    kind: str,
    counter: TokenCounter,
    budget: int,
    rng: random.Random,
    num_keys: int = 20,
    num_values: int = 20,
    template: str = NEEDLE_TEMPLATE,
) -> NeedleTask:
    """Insert needle sentences at distinct sentence boundaries of a book slice.

    multi_key: `num_keys` keys with one value each, one key queried.
    multi_value: one key repeated with `num_values` values, all gold.
    niah_single: a single needle.
    """
    if kind not in NEEDLE_KINDS:
        raise ValueError(f"unknown needle kind {kind!r}")
    if counter.count(book) < budget:
        raise RetrievalError(f"book shorter than budget {budget}")
    base = truncate_to_budget(book, counter, budget)
    starts = _sentence_starts(base)

    used_keys: set[str] = set()
    used_values: set[str] = set()
    if kind == MULTI_KEY:
        keys = [_draw_key(rng, used_keys) for _ in range(num_keys)]
        values = [_draw_value(rng, base, used_values) for _ in range(num_keys)]
    elif kind == MULTI_VALUE:
        key = _draw_key(rng, used_keys)
        keys = [key] * num_values
        values = [_draw_value(rng, base, used_values) for _ in range(num_values)]
    else:
        keys = [_draw_key(rng, used_keys)]
        values = [_draw_value(rng, base, used_values)]

    n = len(keys)
    if len(starts) < n:
        raise RetrievalError(f"base text offers {len(starts)} sentence boundaries for {n} needles")
    positions = sorted(rng.sample(starts, n))
    sentences = [template.format(key=k, value=v) for k, v in zip(keys, values)]
    inserts = [
        (pos, _needle_segment(s, at_end=(pos == len(base))))
        for pos, s in zip(positions, sentences)
    ]
    context, final_offsets = _insert_segments(base, inserts)
    needle_offsets = [
        off + (1 if pos == len(base) else 0) for off, pos in zip(final_offsets, positions)
    ]

    if kind == MULTI_KEY:
        queried = rng.randrange(n)
        query = SINGLE_QUERY.format(key=keys[queried])
        gold = (values[queried],)
    elif kind == MULTI_VALUE:
        query = MULTI_QUERY.format(key=keys[0])
        gold = tuple(values)  # insertion order
    else:
        query = SINGLE_QUERY.format(key=keys[0])
        gold = (values[0],)
    return NeedleTask(
        context=context,
        query=query,
        gold=gold,
        keys=tuple(keys),
        values=tuple(values),
        positions=tuple(needle_offsets),
        kind=kind,
    )


def _draw_var_name(rng: random.Random, used: set[str]) -> str:
    for _ in range(MAX_NAME_RETRIES):
        name = "".join(rng.choice("ABCDEFGHIJKLMNOPQRSTUVWXYZ") for _ in range(rng.randint(3, 5)))
        if name not in used:
            used.add(name)
            return name
    raise RetrievalError("could not draw a fresh variable name")


def gen_vt_task(
    num_chains: int,
    chain_depth: int,
    fanout: int,
    filler: str = VT_FILLER,
    rng: random.Random | None = None,
) -> VTTask:
    """Chained variable assignments hidden in filler text.

    Each chain assigns a fresh 5-digit value to a root variable and forwards
    it through depth levels; the final level fans out to `fanout` variables.
    Exactly one chain carries the target value and its variables are gold.
    """
    if num_chains < 1 or chain_depth < 1:
        raise ValueError("num_chains and chain_depth must be >= 1")
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    rng = rng or random.Random(0)
    used_names: set[str] = set()
    used_values: set[str] = set()
    chains = []
    for _ in range(num_chains):
        value = _draw_value(rng, filler, used_values)
        variables = [_draw_var_name(rng, used_names)]
        statements = [f"VAR {variables[0]} = {value}"]
        if chain_depth > 1:
            for _ in range(chain_depth - 2):
                nxt = _draw_var_name(rng, used_names)
                statements.append(f"VAR {nxt} = VAR {variables[-1]}")
                variables.append(nxt)
            parent = variables[-1]
            for _ in range(fanout):
                leaf = _draw_var_name(rng, used_names)
                statements.append(f"VAR {leaf} = VAR {parent}")
                variables.append(leaf)
        chains.append(AssignmentChain(value=value, variables=tuple(variables), statements=tuple(statements)))

    target = chains[rng.randrange(num_chains)]
    all_statements = [s for c in chains for s in c.statements]
    rng.shuffle(all_statements)
    context = " ".join(f"{stmt} {filler}" for stmt in all_statements)
    return VTTask(
        context=context,
        target_value=target.value,
        gold_vars=frozenset(target.variables),
        chain_specs=tuple(chains),
    )


_VT_LITERAL = re.compile(r"VAR ([A-Z]+) = (\d+)")
_VT_EDGE = re.compile(r"VAR ([A-Z]+) = VAR ([A-Z]+)")


class VTOracleError(ValueError):
    pass


def vt_oracle(context: str, target_value: str) -> set[str]:
    """Independent re-parse: propagate literal values through assignment
    edges to a fixpoint and return the variables holding target_value.

    Variables in a cycle with no literal source never resolve and are
    excluded. A reference to a variable that is never assigned is an error.
    """
    literals: dict[str, str] = {}
    edges: list[tuple[str, str]] = []
    for m in _VT_LITERAL.finditer(context):
        literals[m.group(1)] = m.group(2)
    for m in _VT_EDGE.finditer(context):
        edges.append((m.group(1), m.group(2)))
    assignees = set(literals) | {child for child, _ in edges}
    for _, parent in edges:
        if parent not in assignees:
            raise VTOracleError(f"reference to undefined variable {parent}")
    resolved = dict(literals)
    changed = True
    while changed:
        changed = False
        for child, parent in edges:
            if parent in resolved and child not in resolved:
                resolved[child] = resolved[parent]
                changed = True
    return {var for var, value in resolved.items() if value == target_value}


def gen_niah_grid(
    book: str,
    lengths: list[int],
    depths: list[float],
    counter: TokenCounter,
    rng: random.Random,
) -> NIAHGrid:
    """One single-needle task per (length, depth) cell.

    The needle lands on the sentence boundary nearest depth * text length;
    keys and values are distinct across the whole grid.
    """
    if not lengths or not depths:
        raise ValueError("lengths and depths must be non-empty")
    if any(not 0.0 <= d <= 1.0 for d in depths):
        raise ValueError("depths must lie in [0, 1]")
    capacity = counter.count(book)
    if max(lengths) > capacity:
        raise RetrievalError(f"book capacity {capacity} units < max length {max(lengths)}")
    used_keys: set[str] = set()
    used_values: set[str] = set()
    rows = []
    for length in lengths:
        base = truncate_to_budget(book, counter, length)
        starts = _sentence_starts(base)
        boundaries = starts + ([len(base)] if starts[-1] != len(base) else [])
        row = []
        for depth in depths:
            target_pos = depth * len(base)
            pos = min(boundaries, key=lambda b: abs(b - target_pos))
            key = _draw_key(rng, used_keys)
            value = _draw_value(rng, base, used_values)
            sentence = NEEDLE_TEMPLATE.format(key=key, value=value)
            segment = _needle_segment(sentence, at_end=(pos == len(base)))
            context, offsets = _insert_segments(base, [(pos, segment)])
            needle_offset = offsets[0] + (1 if pos == len(base) else 0)
            row.append(
                NeedleTask(
                    context=context,
                    query=SINGLE_QUERY.format(key=key),
                    gold=(value,),
                    keys=(key,),
                    values=(value,),
                    positions=(needle_offset,),
                    kind=NIAH_SINGLE,
                )
            )
        rows.append(tuple(row))
    return NIAHGrid(lengths=tuple(lengths), depths=tuple(depths), cells=tuple(rows))
