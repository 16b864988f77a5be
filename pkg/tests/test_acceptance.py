"""Acceptance suite: one test per criterion, each printing a PASS line.

Everything runs offline against deterministic synthetic fixtures. Criteria
cover chain round-trips, the single-solution property, the verifier truth
table, advantage/objective math, length budgets, the full data recipe,
retrieval oracles, hard mining, CLI determinism, and fuzz safety.
"""

import hashlib
import json
import math
import time
from pathlib import Path

import pytest

from longweave.cli import main as cli_main
from longweave.curation import PassRateCache
from longweave.curriculum import build_mixture, load_mixture_config, mine_hard, stage_filter
from longweave.extension import Budget, TokenCounter, extend
from longweave.grpo import GrpoConfig, group_advantage, surrogate_objective
from longweave.keychain import (
    PAIR_SUFFIX,
    ChainConfig,
    TraceError,
    is_uuid_key,
    parse_pairs,
    render_pair,
    synthesize,
    trace,
    trace_context,
)
from longweave.records import RolloutGroup, Trajectory, derive_rng, save_records
from longweave.retrieval import (
    MULTI_KEY,
    MULTI_VALUE,
    NEEDLE_TEMPLATE,
    gen_needle_task,
    gen_niah_grid,
    gen_vt_task,
    truncate_to_budget,
    vt_oracle,
)
from longweave.verify import (
    extract_boxed,
    verify_exact,
    verify_f1,
    verify_set,
    verify_two_way,
)

from conftest import make_book, make_corpus, make_pool

MASTER_SEED = 20240801
CHAIN_CFG = ChainConfig()  # n=4 hops, 4 decoys of length 2-4


def ok(criterion: int, message: str) -> None:
    print(f"ACCEPTANCE {criterion}: PASS - {message}")


@pytest.fixture(scope="module")
def corpus200():
    return make_corpus(200, seed=MASTER_SEED)


@pytest.fixture(scope="module")
def thousand_tasks(corpus200):
    """1,000 synthesized tasks (5 per instance) on a compact budget."""
    pool = make_pool(80, seed=MASTER_SEED)
    counter = TokenCounter()
    budget = Budget(target=1200, hard_cap=1200)
    questions = [inst.question for inst in corpus200]
    tasks = []
    started = time.monotonic()
    for i, inst in enumerate(corpus200):
        ext = extend(inst, pool, counter, budget, derive_rng(MASTER_SEED, f"extend:{inst.instance_id}"))
        others = questions[:i] + questions[i + 1 :]
        for k in range(5):
            tasks.append(
                synthesize(ext, others, CHAIN_CFG, MASTER_SEED,
                           task_id=f"{inst.instance_id}/kc{k}", counter=counter)
            )
    elapsed = time.monotonic() - started
    assert len(tasks) == 1000
    return tasks, elapsed


def test_criterion_1_keychain_roundtrip(thousand_tasks):
    tasks, build_elapsed = thousand_tasks
    started = time.monotonic()
    recovered = 0
    for task in tasks:
        result = trace(task)
        assert result.question == task.hidden_question
        assert result.hops == CHAIN_CFG.true_chain_len
        recovered += 1
    elapsed = build_elapsed + (time.monotonic() - started)
    assert recovered == 1000
    assert elapsed < 60.0, f"round-trip took {elapsed:.1f}s"
    ok(1, f"1000/1000 traces recovered the hidden question in {elapsed:.1f}s")


def test_criterion_2_single_solution(thousand_tasks):
    tasks, _ = thousand_tasks
    violations = 0
    for task in tasks:
        pairs = parse_pairs(task.context)
        mapping = dict(pairs)
        assert len(mapping) == len(pairs)  # keys unique
        terminals = [v for v in mapping.values() if not is_uuid_key(v)]
        if len(terminals) != CHAIN_CFG.decoy_count + 1:
            violations += 1
            continue
        reached = []
        current = task.start_key
        for _ in range(len(pairs) + 1):
            value = mapping[current]
            if not is_uuid_key(value):
                reached.append(value)
                break
            current = value
        if reached != [task.hidden_question]:
            violations += 1
    assert violations == 0
    ok(2, f"{len(tasks)} tasks expose exactly {CHAIN_CFG.decoy_count + 1} terminals, one reachable")


# --- criterion 3: verifier truth table ----------------------------------------

SUN = "the Sun"
# (label, trajectory, gold, two_way, exact, f1 or None)
TRUTH_TABLE = [
    # Eq. 3 quadrants
    ("identity", r"\boxed{the Sun}", SUN, 1, 1, 1.0),
    ("extracted-in-gold", r"\boxed{Sun}", SUN, 1, 0, 2 / 3),
    ("gold-in-extracted", r"\boxed{the Sun is the primary destination}", SUN, 1, 0, None),
    ("disjoint", r"\boxed{Jupiter}", SUN, 0, 0, 0.0),
    # extraction mechanics
    ("text-wrapper", r"\boxed{\text{the Sun}}", SUN, 1, 1, 1.0),
    ("double-text-wrapper", r"\boxed{\text{\text{the Sun}}}", SUN, 1, 1, 1.0),
    ("nested-braces", r"\boxed{f(x) = {a+b}}", "f(x) = {a+b}", 1, 1, None),
    ("empty-box", r"\boxed{}", SUN, 0, 0, 0.0),
    ("whitespace-box", r"\boxed{   }", SUN, 0, 0, 0.0),
    ("no-box", "the Sun appears but unboxed", SUN, 0, 0, 0.0),
    ("think-prefix", r"<think>alpha beta</think> \boxed{the Sun}", SUN, 1, 1, 1.0),
    ("last-box-wins", r"\boxed{Mars} revised: \boxed{the Sun}", SUN, 1, 1, 1.0),
    ("last-box-wrong", r"\boxed{the Sun} revised: \boxed{Mars}", SUN, 0, 0, 0.0),
    ("unbalanced-tail", r"\boxed{the Sun} junk \boxed{never closed", SUN, 1, 1, 1.0),
    ("boxed-inside-boxed", r"\boxed{\boxed{the Sun}}", SUN, 1, 1, 1.0),
    ("newline-content", "\\boxed{the\nSun}", SUN, 1, 1, 1.0),
    ("surrounding-space", r"\boxed{  the Sun  }", SUN, 1, 1, 1.0),
    ("mid-reasoning-box", r"we get \boxed{4} steps, final \boxed{the Sun}", SUN, 1, 1, 1.0),
    # normalization
    ("case-fold", r"\boxed{THE SUN}", SUN, 1, 1, 1.0),
    ("inner-whitespace", r"\boxed{the    Sun}", SUN, 1, 1, 1.0),
    ("tab-separated", "\\boxed{the\tSun}", SUN, 1, 1, 1.0),
    ("gold-case", r"\boxed{the sun}", "The Sun", 1, 1, 1.0),
    # two-way substring shapes (token-aligned so the dominance chain holds)
    ("trailing-period", r"\boxed{the Sun.}", SUN, 1, 0, None),
    ("leading-article", r"\boxed{Sun}", "Sun", 1, 1, 1.0),
    ("extra-words-right", r"\boxed{the Sun obviously}", SUN, 1, 0, None),
    ("extra-words-left", r"\boxed{clearly the Sun}", SUN, 1, 0, None),
    ("gold-sentence", r"\boxed{the Sun}", "the Sun is the primary destination", 1, 0, None),
    ("substring-both-multiword", r"\boxed{George Washington}", "President George Washington", 1, 0, None),
    ("no-partial-word-match", r"\boxed{Sunday}", SUN, 0, 0, 0.0),
    ("reversed-words", r"\boxed{Sun the}", SUN, 0, 0, None),
    ("date-exact", r"\boxed{July 4, 1776}", "July 4, 1776", 1, 1, 1.0),
    ("date-partial", r"\boxed{1776}", "July 4, 1776", 1, 0, None),
    ("number-identity", r"\boxed{42}", "42", 1, 1, 1.0),
    ("number-disjoint", r"\boxed{41}", "42", 0, 0, 0.0),
    ("yes-vs-no", r"\boxed{yes}", "no", 0, 0, 0.0),
    ("entity-with-comma", r"\boxed{Paris, France}", "Paris, France", 1, 1, 1.0),
    ("entity-subphrase", r"\boxed{Paris, France}", "France", 1, 0, None),
    ("long-answer-contains-gold", r"\boxed{it was the Sun that the probe orbited}", SUN, 1, 0, None),
    ("unicode", r"\boxed{José Saramago}", "José Saramago", 1, 1, 1.0),
    ("unicode-partial", r"\boxed{Saramago}", "José Saramago", 1, 0, None),
    # exact-match strictness
    ("exact-vs-article", r"\boxed{Sun}", SUN, 1, 0, 2 / 3),
    ("exact-extra-space-ok", r"\boxed{ the Sun }", SUN, 1, 1, 1.0),
    ("exact-hyphen-differs", r"\boxed{long-context}", "long context", 0, 0, 0.0),
    # F1 hand arithmetic
    ("f1-two-thirds", r"\boxed{the Sun}", "Sun", 1, 0, 2 / 3),
    ("f1-half-overlap", r"\boxed{alpha beta gamma delta}", "alpha beta", 1, 0, 2 / 3),
    ("f1-middle-token", r"\boxed{x y z}", "x q z", 0, 0, 2 / 3),
    ("f1-disjoint", r"\boxed{alpha beta}", "gamma delta", 0, 0, 0.0),
    # adversarial-ish
    ("morphological-mismatch", r"\boxed{disharmony}", "unity", 0, 0, 0.0),
    ("repeated-gold", r"\boxed{the Sun the Sun}", SUN, 1, 0, None),
    ("multiline-noise", "answer: \\boxed{\n  the   Sun\n}", SUN, 1, 1, 1.0),
]

SET_CASES = [
    ("vt-all-any-order", "YYZJM, QPKBX, EANSM, PBDME, SGMLJ",
     ["SGMLJ", "PBDME", "EANSM", "QPKBX", "YYZJM"], 1),
    ("vt-four-of-five", "SGMLJ, PBDME, EANSM, QPKBX",
     ["SGMLJ", "PBDME", "EANSM", "QPKBX", "YYZJM"], 0),
    ("vt-extra-wrong-var", "SGMLJ, PBDME, EANSM, QPKBX, YYZJM, FAIQQ",
     ["SGMLJ", "PBDME", "EANSM", "QPKBX", "YYZJM"], 0),
    ("values-all", "92018 and 64886", ["92018", "64886"], 1),
    ("values-missing", "92018 only", ["92018", "64886"], 0),
    ("values-extra", "92018, 64886, 55555", ["92018", "64886"], 0),
]


def test_criterion_3_verifier_truth_table():
    assert len(TRUTH_TABLE) >= 50 - len(SET_CASES)
    for label, trajectory, gold, want_two, want_exact, want_f1 in TRUTH_TABLE:
        extracted = extract_boxed(trajectory)
        two = verify_two_way(extracted, gold)
        exact = verify_exact(extracted, gold)
        f1 = verify_f1(extracted, gold)
        assert two.reward == want_two, f"{label}: two_way {two.reward} != {want_two}"
        assert exact.reward == want_exact, f"{label}: exact {exact.reward} != {want_exact}"
        if want_f1 is not None:
            assert f1.reward == pytest.approx(want_f1), f"{label}: f1 {f1.reward} != {want_f1}"
        # dominance chain on every case
        if exact.reward == 1:
            assert two.reward == 1, f"{label}: exact=1 but two_way=0"
        y_tokens = extracted.split() if extracted else []
        if two.reward == 1 and y_tokens and gold.split():
            assert f1.reward > 0, f"{label}: two_way=1 but f1=0"
    for label, extracted, gold_set, want in SET_CASES:
        outcome = verify_set(extracted, gold_set)
        assert outcome.reward == want, f"{label}: set {outcome.reward} != {want}"
    total = len(TRUTH_TABLE) + len(SET_CASES)
    ok(3, f"{total}-case truth table exact, dominance chain holds throughout")


def test_criterion_4_grpo_math():
    rng = derive_rng(MASTER_SEED, "grpo-sweep")
    sizes = (2, 4, 8, 16)
    checked = degenerate = 0
    for i in range(100_000):
        g = sizes[i & 3]
        if i % 3 == 0:
            rewards = [rng.random() for _ in range(g)]
        else:
            p = rng.random()
            rewards = [1.0 if rng.random() < p else 0.0 for _ in range(g)]
        result = group_advantage(rewards)
        if result.degenerate:
            degenerate += 1
            assert result.advantages == (0.0,) * g
            continue
        mean = math.fsum(result.advantages) / g
        std = math.sqrt(math.fsum(a * a for a in result.advantages) / g - mean * mean)
        assert abs(mean) < 1e-12
        assert abs(std - 1.0) < 1e-12
        checked += 1
    assert checked > 0

    # frozen hand-computed examples at 1e-12
    two = group_advantage([1, 0]).advantages
    assert abs(two[0] - 1.0) < 1e-12 and abs(two[1] + 1.0) < 1e-12
    eight = group_advantage([1, 0, 0, 0, 0, 0, 0, 0]).advantages
    assert abs(eight[0] - math.sqrt(7)) < 1e-12
    assert all(abs(a + 1 / math.sqrt(7)) < 1e-12 for a in eight[1:])

    def one_token_group(rho):
        return RolloutGroup("t", (Trajectory("", None, 1),), ratios=((rho,),))

    cfg = GrpoConfig(epsilon=0.2, beta=0.0)
    assert abs(surrogate_objective(one_token_group(1.5), [1.0], cfg) - 1.2) < 1e-12
    assert abs(surrogate_objective(one_token_group(0.5), [-1.0], cfg) + 0.8) < 1e-12
    ok(4, f"{checked} non-degenerate groups normalized at 1e-12; clip examples exact")


def test_criterion_5_budget_property(corpus200):
    counter = TokenCounter()
    budget = Budget(target=16384, hard_cap=16384)
    pool = make_pool(360, seed=MASTER_SEED + 1, sentences=14)
    questions = [inst.question for inst in corpus200]
    violations = 0
    arithmetic_misses = 0
    n_instances = 0
    for r in range(5):  # 5 rounds over the 200-instance corpus -> 1,000
        for i, inst in enumerate(corpus200):
            ext = extend(
                inst, pool, counter, budget,
                derive_rng(MASTER_SEED, f"budget:{r}:{inst.instance_id}"),
            )
            n_instances += 1
            if ext.token_count > budget.hard_cap:
                violations += 1
            pre = ext.token_count
            others = questions[:i] + questions[i + 1 :]
            task = synthesize(ext, others, CHAIN_CFG, MASTER_SEED,
                              task_id=f"{inst.instance_id}/b{r}", counter=counter)
            segments = [render_pair(rec.key, rec.payload) + PAIR_SUFFIX for rec in task.all_records()]
            expected = sum(counter.count(s) for s in segments)
            if abs((task.token_count - pre) - expected) > len(segments):
                arithmetic_misses += 1
    assert n_instances == 1000
    assert violations == 0
    assert arithmetic_misses == 0
    ok(5, "1000 instances within 16384 units; splice deltas match rendered lengths +-1/pair")


def test_criterion_6_table2_mixture(tmp_path):
    config_path = Path(__file__).parent.parent / "configs" / "table2.toml"
    spec, _ = load_mixture_config(config_path)
    assert spec.total_count == 21024  # 6x2500 + 2x512 + 2x2500
    rng = derive_rng(MASTER_SEED, "table2-fixtures")
    sources = {}
    for entry in spec.entries:
        path = tmp_path / f"{entry.name}.jsonl"
        with path.open("w") as fh:
            for i in range(entry.count + 100):
                rec = {
                    "id": f"{entry.name}/{i:06d}",
                    "token_count": rng.randint(entry.length_lo, entry.length_hi),
                }
                fh.write(json.dumps(rec) + "\n")
        sources[entry.name] = str(path)
    manifest = build_mixture(spec, sources, seed=MASTER_SEED)
    counts = manifest.counts()
    assert manifest.total == 21024
    for entry in spec.entries:
        assert counts[entry.name] == entry.count

    warmup = stage_filter(manifest, "warmup")
    keychain_entries = {e.name for e in spec.entries if e.source_kind == "keychain"}
    assert len(keychain_entries) == 3
    # manifest diff: warmup rows = full rows minus exactly the keychain rows
    full_rows = set(manifest.rows)
    warmup_rows = set(warmup.rows)
    removed = full_rows - warmup_rows
    assert warmup_rows <= full_rows
    assert {r.entry for r in removed} == keychain_entries
    assert len(removed) == 7500
    ok(6, "recipe manifest reproduces 21024 records; warmup drops exactly the 3 chain entries")


def test_criterion_7_retrieval_oracles(book):
    counter = TokenCounter()
    agree = 0
    for i in range(1000):
        rng = derive_rng(MASTER_SEED, f"vt:{i}")
        task = gen_vt_task(1 + i % 4, 1 + i % 5, 1 + i % 3, rng=rng)
        assert vt_oracle(task.context, task.target_value) == set(task.gold_vars)
        agree += 1

    base_cache = {}
    for i in range(1000):
        rng = derive_rng(MASTER_SEED, f"needle:{i}")
        kind = MULTI_KEY if i % 2 == 0 else MULTI_VALUE
        task = gen_needle_task(book, kind, counter, 1200, rng)
        base = base_cache.setdefault(1200, truncate_to_budget(book, counter, 1200))
        stripped = task.context
        for key, value in zip(task.keys, task.values):
            sentence = NEEDLE_TEMPLATE.format(key=key, value=value)
            assert task.context.count(sentence) == 1  # substring uniqueness
            assert task.context.count(value) == 1
            for segment in (sentence + " ", " " + sentence):
                if stripped.count(segment):
                    stripped = stripped.replace(segment, "", 1)
                    break
        assert stripped == base  # strip-and-compare identity

    depths = [i / 9 for i in range(10)]
    lengths = [400, 800, 1200, 1600]
    grid = gen_niah_grid(book, lengths, depths, counter, derive_rng(MASTER_SEED, "grid"))
    cells_checked = 0
    for i, length in enumerate(lengths):
        base = truncate_to_budget(book, counter, length)
        tolerance = max(len(s) + 2 for s in base.split(". "))
        for j, depth in enumerate(depths):
            cell = grid.cells[i][j]
            assert abs(cell.positions[0] - depth * len(base)) <= tolerance
            cells_checked += 1
    assert cells_checked == 40
    ok(7, f"{agree} VT oracle agreements, 1000 needle strip-checks, 40/40 grid depths on target")


def test_criterion_8_stage2_mining(tmp_path):
    from longweave.curriculum import Manifest, ManifestRow
    from longweave.records import MixtureEntry

    entry = MixtureEntry("mined", "keychain", 300, 1, 10**6, "hard", frozenset({"stage2"}))
    rows = tuple(ManifestRow("mined", f"task/{i:04d}", 5000 + i) for i in range(300))
    manifest = Manifest(seed=1, spec_hash="x", entries=(entry,), sources={}, rows=rows)
    rng = derive_rng(MASTER_SEED, "mining")
    results = {}
    expected_keep = set()
    for row in rows:
        if rng.random() < 0.4:
            rewards = [1] * 8
        else:
            rewards = [1] * 8
            for _ in range(1 + rng.randrange(3)):
                rewards[rng.randrange(8)] = 0
            expected_keep.add(row.record_id)
        results[row.record_id] = rewards
    subset, report = mine_hard(manifest, results)
    assert {r.record_id for r in subset.rows} == expected_keep
    assert report.retained == len(expected_keep)
    assert all(min(results[r.record_id]) == 0 for r in subset.rows)
    assert not any(all(v == 1 for v in results[r.record_id]) for r in subset.rows)
    ok(8, f"mining retained exactly the {len(expected_keep)} non-all-correct tasks")


def _hash_files(paths: list[Path]) -> list[str]:
    return [hashlib.sha256(p.read_bytes()).hexdigest() for p in paths]


def test_criterion_9_cli_determinism(tmp_path):
    corpus = make_corpus(12, seed=MASTER_SEED)
    seeds = tmp_path / "seeds.jsonl"
    save_records(corpus, seeds)
    cache = PassRateCache()
    for i, inst in enumerate(corpus):
        cache.put(inst.instance_id, "oracle", 8, (0, 8, 4, 5, 3, 8, 0, 4, 6, 2, 5, 7)[i])
    rates = tmp_path / "rates.jsonl"
    cache.save(rates)
    book_path = tmp_path / "book.txt"
    book_path.write_text(make_book(1200, seed=MASTER_SEED), encoding="utf-8")

    mix_source = tmp_path / "mix_source.jsonl"
    save_records([{"id": f"rec{i}", "token_count": 100 + i} for i in range(40)], mix_source)
    mix_config = tmp_path / "mix.toml"
    mix_config.write_text(
        '[[entry]]\nname = "kc_demo"\nsource_kind = "keychain"\ncount = 8\n'
        'length = [100, 140]\ndifficulty = "hard"\nstages = ["stage1", "stage2"]\n'
        f'source = "{mix_source.name}"\n'
        '\n[[entry]]\nname = "qa_demo"\nsource_kind = "qa"\ncount = 6\n'
        'length = [100, 140]\ndifficulty = "medium"\nstages = ["warmup", "stage1", "stage2"]\n'
        f'source = "{mix_source.name}"\n'
    )

    def run_all(tag: str) -> list[Path]:
        d = tmp_path / tag
        d.mkdir()
        out = {name: d / name for name in (
            "kept.jsonl", "pool.jsonl", "curation.json", "extended.jsonl", "tasks.jsonl",
            "mk.jsonl", "vt.jsonl", "cells.jsonl", "grid.json", "verify.jsonl",
            "adv.jsonl", "manifest.jsonl", "mined.jsonl", "trace.jsonl", "report.txt",
        )}
        assert cli_main(["curate", "--seeds", str(seeds), "--rates", str(rates), "--model", "oracle",
                         "--out-kept", str(out["kept.jsonl"]), "--out-pool", str(out["pool.jsonl"]),
                         "--out-report", str(out["curation.json"])]) == 0
        assert cli_main(["extend", "--kept", str(out["kept.jsonl"]), "--pool", str(out["pool.jsonl"]),
                         "--target", "900", "--hard-cap", "900", "--seed", "42",
                         "--out", str(out["extended.jsonl"])]) == 0
        assert cli_main(["keychain", "--extended", str(out["extended.jsonl"]), "--seed", "42",
                         "--decoys", "3", "--out", str(out["tasks.jsonl"])]) == 0
        assert cli_main(["ruler", "--book", str(book_path), "--kind", "multi_key", "--count", "3",
                         "--budget", "900", "--seed", "42", "--out", str(out["mk.jsonl"])]) == 0
        assert cli_main(["vt", "--count", "4", "--seed", "42", "--out", str(out["vt.jsonl"])]) == 0
        assert cli_main(["niah", "--book", str(book_path), "--lengths", "300,600",
                         "--depths", "0,0.5,1", "--seed", "42", "--out", str(out["cells.jsonl"]),
                         "--manifest-out", str(out["grid.json"])]) == 0
        preds = d / "preds.jsonl"
        pred_rows = []
        for line in out["tasks.jsonl"].read_text().splitlines():
            obj = json.loads(line)
            pred_rows.append({"task_id": obj["id"], "prediction": f"\\boxed{{{obj['answer']}}}"})
        save_records(pred_rows, preds)
        assert cli_main(["verify", "--rule", "two_way_substring", "--pred", str(preds),
                         "--gold", str(out["tasks.jsonl"]), "--out", str(out["verify.jsonl"])]) == 0
        rollouts = d / "rollouts.jsonl"
        save_records(
            [{"task_id": r["task_id"], "rewards": [1, 0, 1, 0]} for r in pred_rows], rollouts
        )
        assert cli_main(["advantage", "--results", str(rollouts), "--out", str(out["adv.jsonl"])]) == 0
        assert cli_main(["mix", "--config", str(mix_config), "--seed", "42",
                         "--out", str(out["manifest.jsonl"])]) == 0
        mine_results = d / "mine_results.jsonl"
        manifest_rows = [json.loads(l) for l in out["manifest.jsonl"].read_text().splitlines()[1:]]
        save_records(
            [{"task_id": row["id"], "rewards": [1] * 8 if i % 2 else [1, 0] * 4}
             for i, row in enumerate(manifest_rows)],
            mine_results,
        )
        assert cli_main(["mine", "--manifest", str(out["manifest.jsonl"]), "--results",
                         str(mine_results), "--out", str(out["mined.jsonl"])]) == 0
        assert cli_main(["trace", "--tasks", str(out["tasks.jsonl"]), "--out", str(out["trace.jsonl"])]) == 0
        assert cli_main(["report", "--records", str(out["tasks.jsonl"]), "--out", str(out["report.txt"])]) == 0
        return list(out.values())

    first = run_all("run1")
    second = run_all("run2")
    assert _hash_files(first) == _hash_files(second)
    ok(9, f"{len(first)} output files byte-identical across reruns of all 12 subcommands")


def test_criterion_10_fuzz_safety():
    rng = derive_rng(MASTER_SEED, "fuzz")
    fragments = (b"\\boxed{", b"}", b"{\"", b"\": \"", b"\"}", b"\\text{", b"{", b"\n\n")
    start_key = "ABCDEF01-2345-6789-ABCD-EF0123456789"
    blob = rng.randbytes(1 << 20)
    n = 1_000_000
    for i in range(n):
        off = (i * 37) % (len(blob) - 64)
        raw = blob[off : off + (i % 48)]
        if i % 5 == 0:
            raw = fragments[i % len(fragments)] + raw + fragments[(i * 7) % len(fragments)]
        text = raw.decode("latin-1")
        extract_boxed(text)
        try:
            trace_context(text, start_key)
        except TraceError:
            pass
    ok(10, f"{n} random byte strings through extract_boxed and trace without crash")
