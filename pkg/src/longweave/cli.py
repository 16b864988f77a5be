"""Command-line pipeline: each subcommand wraps one stage.

Every subcommand accepts a TOML --config whose keys mirror the flags; flags
win over config values. All randomness flows from --seed, so rerunning any
subcommand with identical inputs, config and seed is byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import curation, curriculum, extension, grpo, keychain, retrieval
from . import verify as verify_mod
from .client import ChatCompletionsClient
from .records import (
    Document,
    QAInstance,
    derive_rng,
    iter_jsonl,
    load_instances,
    load_rollout_groups,
    load_tasks,
    save_records,
)

SUBCOMMANDS = (
    "curate", "extend", "keychain", "ruler", "vt", "niah",
    "verify", "advantage", "mix", "mine", "trace", "report",
)


class DataError(Exception):
    """Input data or pipeline failure; maps to exit code 1."""


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


class Options:
    """Flag-over-config-over-default resolution."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = _load_config(getattr(args, "config", None))

    def get(self, name: str, default: Any = None) -> Any:
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        if name in self.config:
            return self.config[name]
        return default

    def require(self, name: str) -> Any:
        value = self.get(name)
        if value is None:
            raise DataError(f"missing required option --{name.replace('_', '-')}")
        return value


def _counter(opts: Options) -> extension.TokenCounter:
    return extension.TokenCounter(
        mode=opts.get("counter", extension.CHARS_DIV_4),
        vocab_path=opts.get("vocab"),
    )


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_jsonl(records: Iterable[dict], path: str) -> int:
    return save_records(records, path)


def _load_documents(path: str) -> list[Document]:
    docs = []
    for line_no, obj in iter_jsonl(path):
        try:
            docs.append(Document.from_record(obj))
        except Exception as exc:
            raise DataError(f"{path}:{line_no}: bad document record: {exc}")
    return docs


# --- subcommand handlers -----------------------------------------------------


def cmd_curate(opts: Options) -> int:
    instances, errors = load_instances(opts.require("seeds"), kind=opts.get("layout", "seed"))
    for err in errors:
        print(f"warning: {err.message}", file=sys.stderr)
    model = opts.get("model", "")
    n = int(opts.get("n", 8))
    cache_path = opts.get("rates")
    cache = curation.PassRateCache.load(cache_path) if cache_path else curation.PassRateCache()
    if cache_path:
        instances = curation.attach_pass_rates(instances, cache, model, n)
    missing = [i for i in instances if i.pass_rate is None]
    base_url = opts.get("base_url")
    if missing and base_url:
        client = ChatCompletionsClient(base_url=base_url, model=model)
        rates = curation.estimate_pass_rates(
            missing, client, n=n, parallelism=int(opts.get("jobs", 1))
        )
        for iid, rate in rates.items():
            cache.put(iid, model, n, round(rate * n))
        if cache_path:
            cache.save(cache_path)
        instances = curation.attach_pass_rates(instances, cache, model, n)
    try:
        kept, pool, report = curation.curate(instances)
    except curation.CurationError as exc:
        raise DataError(str(exc))
    if opts.args.dry_run:
        print(f"dry-run: {report.kept} kept of {report.total}")
        return 0
    save_records(kept, opts.require("out_kept"))
    save_records(pool, opts.require("out_pool"))
    report_out = opts.get("out_report")
    if report_out:
        Path(report_out).write_text(json.dumps(report.to_record(), indent=2) + "\n", encoding="utf-8")
    print(
        f"curated {report.total}: kept {report.kept}, "
        f"trivial {report.discarded_trivial}, unsolved {report.discarded_unsolved}, "
        f"pool {len(pool)} documents"
    )
    return 0


def cmd_extend(opts: Options) -> int:
    seed = int(opts.require("seed"))
    instances, errors = load_instances(opts.require("kept"))
    for err in errors:
        print(f"warning: {err.message}", file=sys.stderr)
    pool = _load_documents(opts.require("pool"))
    counter = _counter(opts)
    budget = extension.Budget(
        target=int(opts.get("target", 16384)),
        hard_cap=int(opts.get("hard_cap", opts.get("target", 16384))),
    )
    if opts.args.dry_run:
        print(f"dry-run: would extend {len(instances)} instances against pool of {len(pool)}")
        return 0

    def one(inst: QAInstance):
        rng = derive_rng(seed, f"extend:{inst.instance_id}")
        try:
            return extension.extend(inst, pool, counter, budget, rng)
        except extension.ExtensionRejected as exc:
            return exc

    results = _parallel_map(one, instances, int(opts.get("jobs", 1)))
    extended = [r for r in results if not isinstance(r, Exception)]
    rejected = [r for r in results if isinstance(r, Exception)]
    for exc in rejected:
        print(f"warning: {exc}", file=sys.stderr)
    n = save_records(extended, opts.require("out"))
    print(f"extended {n} instances ({len(rejected)} rejected)")
    return 0


def _chain_config(opts: Options) -> keychain.ChainConfig:
    decoy_len = opts.get("decoy_len", [2, 4])
    return keychain.ChainConfig(
        true_chain_len=int(opts.get("chain_len", 4)),
        decoy_count=int(opts.get("decoys", 4)),
        decoy_len_lo=int(decoy_len[0]),
        decoy_len_hi=int(decoy_len[1]),
        uuid_style=opts.get("uuid_style", keychain.DASHED_36),
        placement=opts.get("placement", keychain.MIXED),
    )


def cmd_keychain(opts: Options) -> int:
    seed = int(opts.require("seed"))
    cfg = _chain_config(opts)
    counter = _counter(opts)
    per_instance = int(opts.get("per_instance", 1))
    path = opts.require("extended")
    extended = []
    for line_no, obj in iter_jsonl(path):
        try:
            extended.append(extension.ExtendedInstance.from_record(obj))
        except Exception as exc:
            raise DataError(f"{path}:{line_no}: bad extended record: {exc}")
    if opts.args.dry_run:
        print(f"dry-run: would synthesize {len(extended) * per_instance} tasks")
        return 0
    questions = [e.base.question for e in extended]

    def one(item):
        idx, ext = item
        others = questions[:idx] + questions[idx + 1 :]
        tasks = []
        for k in range(per_instance):
            task_id = f"{ext.base.instance_id}/kc{k}"
            tasks.append(
                keychain.synthesize(
                    ext, others, cfg, seed, task_id=task_id, counter=counter,
                    template_id=opts.get("template", keychain.KEYCHAIN_TEMPLATE),
                )
            )
        return tasks

    results = _parallel_map(one, list(enumerate(extended)), int(opts.get("jobs", 1)))
    tasks = [t for group in results for t in group]
    n = save_records(tasks, opts.require("out"))
    print(f"synthesized {n} keychain tasks")
    return 0


def cmd_ruler(opts: Options) -> int:
    seed = int(opts.require("seed"))
    kind = opts.require("kind")
    count = int(opts.get("count", 512))
    budget = int(opts.get("budget", 16384))
    counter = _counter(opts)
    book = Path(opts.require("book")).read_text(encoding="utf-8")
    if opts.args.dry_run:
        print(f"dry-run: would generate {count} {kind} needle tasks")
        return 0

    def one(i: int) -> dict:
        rng = derive_rng(seed, f"ruler:{kind}:{i}")
        task = retrieval.gen_needle_task(
            book, kind, counter, budget, rng,
            num_keys=int(opts.get("num_keys", 20)),
            num_values=int(opts.get("num_values", 20)),
        )
        return task.to_record(f"{kind}/{i:05d}", token_count=counter.count(task.context), seed=seed)

    records = _parallel_map(one, list(range(count)), int(opts.get("jobs", 1)))
    n = _write_jsonl(records, opts.require("out"))
    print(f"generated {n} {kind} needle tasks")
    return 0


def cmd_vt(opts: Options) -> int:
    seed = int(opts.require("seed"))
    count = int(opts.get("count", 512))
    counter = _counter(opts)
    if opts.args.dry_run:
        print(f"dry-run: would generate {count} variable-tracking tasks")
        return 0

    def one(i: int) -> dict:
        rng = derive_rng(seed, f"vt:{i}")
        task = retrieval.gen_vt_task(
            num_chains=int(opts.get("chains", 2)),
            chain_depth=int(opts.get("depth", 4)),
            fanout=int(opts.get("fanout", 2)),
            rng=rng,
        )
        return task.to_record(f"vt/{i:05d}", token_count=counter.count(task.context), seed=seed)

    records = _parallel_map(one, list(range(count)), int(opts.get("jobs", 1)))
    n = _write_jsonl(records, opts.require("out"))
    print(f"generated {n} variable-tracking tasks")
    return 0


def cmd_niah(opts: Options) -> int:
    seed = int(opts.require("seed"))
    counter = _counter(opts)
    lengths = [int(x) for x in str(opts.require("lengths")).split(",")]
    depths = [float(x) for x in str(opts.require("depths")).split(",")]
    book = Path(opts.require("book")).read_text(encoding="utf-8")
    if opts.args.dry_run:
        print(f"dry-run: would build a {len(lengths)}x{len(depths)} grid")
        return 0
    rng = derive_rng(seed, "niah")
    try:
        grid = retrieval.gen_niah_grid(book, lengths, depths, counter, rng)
    except retrieval.RetrievalError as exc:
        raise DataError(str(exc))
    records = []
    manifest_cells = []
    for i, length in enumerate(grid.lengths):
        for j, depth in enumerate(grid.depths):
            cell = grid.cells[i][j]
            cell_id = f"niah/L{length}/D{j:02d}"
            records.append(
                cell.to_record(cell_id, token_count=counter.count(cell.context), seed=seed)
            )
            manifest_cells.append(
                {"id": cell_id, "length": length, "depth": depth, "value": cell.values[0]}
            )
    n = _write_jsonl(records, opts.require("out"))
    manifest_out = opts.get("manifest_out")
    if manifest_out:
        manifest = {"lengths": lengths, "depths": depths, "cells": manifest_cells}
        Path(manifest_out).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"generated {n} grid cells")
    return 0


def _gold_for(obj: dict):
    if "answer" in obj:
        return str(obj["answer"])
    if "gold" in obj:
        gold = obj["gold"]
        return [str(g) for g in gold] if isinstance(gold, list) else str(gold)
    if "gold_vars" in obj:
        return [str(g) for g in obj["gold_vars"]]
    raise DataError(f"gold record {obj.get('id') or obj.get('task_id')} has no answer/gold field")


def cmd_verify(opts: Options) -> int:
    rule = opts.get("rule", verify_mod.TWO_WAY)
    if rule not in verify_mod.RULES:
        raise DataError(f"unknown rule {rule!r}; expected one of {verify_mod.RULES}")
    golds = {}
    for line_no, obj in iter_jsonl(opts.require("gold")):
        rid = obj.get("id") or obj.get("task_id")
        if rid is None:
            raise DataError(f"gold line {line_no}: record has no id")
        golds[str(rid)] = _gold_for(obj)
    norm = verify_mod.Normalization(
        case_fold=bool(opts.get("case_fold", True)),
        collapse_whitespace=bool(opts.get("collapse_whitespace", True)),
    )
    rows = []
    correct = 0.0
    for line_no, obj in iter_jsonl(opts.require("pred")):
        task_id = str(obj.get("task_id") or obj.get("id"))
        if task_id not in golds:
            raise DataError(f"prediction line {line_no}: unknown task {task_id!r}")
        prediction = obj.get("prediction")
        if prediction is None:
            raise DataError(f"prediction line {line_no}: missing 'prediction' field")
        extracted = verify_mod.extract_boxed(str(prediction))
        outcome = verify_mod.verify(rule, extracted, golds[task_id], norm)
        correct += outcome.reward
        rows.append(outcome.to_record(task_id))
    if opts.args.dry_run:
        print(f"dry-run: {len(rows)} predictions verified in memory")
        return 0
    out = opts.get("out")
    if out:
        _write_jsonl(rows, out)
    accuracy = correct / len(rows) if rows else 0.0
    print(f"verified {len(rows)} predictions with rule {rule}: accuracy {accuracy:.4f}")
    return 0


def cmd_advantage(opts: Options) -> int:
    cfg = grpo.GrpoConfig(
        epsilon=float(opts.get("epsilon", 0.2)),
        beta=float(opts.get("beta", 0.001)),
        std_floor=float(opts.get("std_floor", 1e-8)),
    )
    groups = load_rollout_groups(opts.require("results"))
    rows = []
    for group in groups:
        result = grpo.group_advantage(group.rewards, cfg)
        row = {
            "task_id": group.task_id,
            "advantages": list(result.advantages),
            "mean": result.mean,
            "std": result.std,
            "degenerate": result.degenerate,
        }
        if group.ratios is not None:
            row["objective"] = grpo.surrogate_objective(group, result.advantages, cfg)
        rows.append(row)
    if opts.args.dry_run:
        print(f"dry-run: {len(rows)} groups computed in memory")
        return 0
    out = opts.get("out")
    if out:
        _write_jsonl(rows, out)
    degenerate = sum(1 for r in rows if r["degenerate"])
    print(f"computed advantages for {len(rows)} groups ({degenerate} degenerate)")
    return 0


def cmd_mix(opts: Options) -> int:
    seed = int(opts.require("seed"))
    spec, sources = curriculum.load_mixture_config(opts.require("config"))
    counter = _counter(opts)
    try:
        manifest = curriculum.build_mixture(spec, sources, seed, counter)
    except curriculum.MixtureError as exc:
        raise DataError(str(exc))
    stage = opts.get("stage")
    if stage:
        manifest = curriculum.stage_filter(manifest, stage)
    if opts.args.dry_run:
        print(f"dry-run: manifest of {manifest.total} records")
        return 0
    manifest.save(opts.require("out"))
    counts = manifest.counts()
    for entry in manifest.entries:
        print(f"  {entry.name}: {counts.get(entry.name, 0)}")
    print(f"manifest total {manifest.total} records")
    return 0


def cmd_mine(opts: Options) -> int:
    manifest = curriculum.Manifest.load(opts.require("manifest"))
    results: dict[str, list[int]] = {}
    for _, obj in iter_jsonl(opts.require("results")):
        results[str(obj["task_id"])] = [int(r) for r in obj["rewards"]]
    try:
        subset, report = curriculum.mine_hard(manifest, results)
    except curriculum.MiningError as exc:
        raise DataError(str(exc))
    if opts.args.dry_run:
        print(f"dry-run: would retain {report.retained}/{report.total}")
        return 0
    subset.save(opts.require("out"))
    report_out = opts.get("report_out")
    if report_out:
        Path(report_out).write_text(json.dumps(report.to_record(), indent=2) + "\n", encoding="utf-8")
    if report.all_correct_everywhere:
        print("warning: every task solved in all rollouts; mined subset is empty", file=sys.stderr)
    print(f"retained {report.retained}/{report.total} tasks ({report.retained_fraction:.2f})")
    return 0


def cmd_trace(opts: Options) -> int:
    tasks = load_tasks(opts.require("tasks"))
    rows = []
    failures = 0
    for task in tasks:
        row: dict[str, Any] = {"task_id": task.task_id}
        try:
            result = keychain.trace(task)
            ok = (
                result.question == task.hidden_question
                and result.hops == len(task.true_chain)
            )
            row.update(ok=ok, hops=result.hops)
            if not ok:
                row["reason"] = "trace disagrees with task metadata"
        except keychain.TraceError as exc:
            row.update(ok=False, hops=0, reason=exc.reason)
        if not row["ok"]:
            failures += 1
        rows.append(row)
    out = opts.get("out")
    if out and not opts.args.dry_run:
        _write_jsonl(rows, out)
    print(f"traced {len(rows)} tasks: {len(rows) - failures} ok, {failures} failed")
    return 1 if failures else 0


def cmd_report(opts: Options) -> int:
    path = opts.require("records")
    counter = _counter(opts)
    lengths = []
    count = 0
    for _, obj in iter_jsonl(path):
        count += 1
        try:
            _, length = curriculum.record_id_and_length(obj, counter)
            lengths.append(length)
        except curriculum.MixtureError:
            pass
    lines = [f"file: {Path(path).name}", f"records: {count}"]
    if lengths:
        lengths.sort()
        mean = sum(lengths) / len(lengths)
        lines += [
            f"length min: {lengths[0]}",
            f"length median: {lengths[len(lengths) // 2]}",
            f"length mean: {mean:.1f}",
            f"length max: {lengths[-1]}",
        ]
    text = "\n".join(lines) + "\n"
    out = opts.get("out")
    if out and not opts.args.dry_run:
        Path(out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


HANDLERS = {
    "curate": cmd_curate,
    "extend": cmd_extend,
    "keychain": cmd_keychain,
    "ruler": cmd_ruler,
    "vt": cmd_vt,
    "niah": cmd_niah,
    "verify": cmd_verify,
    "advantage": cmd_advantage,
    "mix": cmd_mix,
    "mine": cmd_mine,
    "trace": cmd_trace,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="longweave",
        description="Long-context RL data synthesis, verification and curriculum tooling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML config; flags override its values")
        p.add_argument("--seed", type=int, help="master seed for all randomness")
        p.add_argument("--jobs", type=int, help="worker pool size (ordering-independent)")
        p.add_argument("--dry-run", action="store_true", help="validate without writing")
        p.add_argument("--counter", choices=extension.COUNTER_MODES, help="length proxy mode")
        p.add_argument("--vocab", help="vocab file for external_vocab counting")
        return p

    p = add("curate", "filter seeds by oracle pass rate")
    p.add_argument("--seeds", help="seed instance JSONL")
    p.add_argument("--layout", choices=("seed", "hotpotqa", "musique", "2wiki"))
    p.add_argument("--rates", help="pass-rate cache file")
    p.add_argument("--model", help="oracle model name")
    p.add_argument("--n", type=int, help="samples per question")
    p.add_argument("--base-url", dest="base_url", help="chat-completions endpoint")
    p.add_argument("--out-kept", dest="out_kept")
    p.add_argument("--out-pool", dest="out_pool")
    p.add_argument("--out-report", dest="out_report")

    p = add("extend", "grow contexts with distractor documents")
    p.add_argument("--kept", help="kept seed instances JSONL")
    p.add_argument("--pool", help="distractor document JSONL")
    p.add_argument("--target", type=int)
    p.add_argument("--hard-cap", dest="hard_cap", type=int)
    p.add_argument("--out")

    p = add("keychain", "insert key chains and render prompts")
    p.add_argument("--extended", help="extended instance JSONL")
    p.add_argument("--chain-len", dest="chain_len", type=int)
    p.add_argument("--decoys", type=int)
    p.add_argument("--decoy-len", dest="decoy_len", type=int, nargs=2)
    p.add_argument("--uuid-style", dest="uuid_style", choices=keychain.UUID_STYLES)
    p.add_argument("--placement", choices=keychain.PLACEMENT_POLICIES)
    p.add_argument("--per-instance", dest="per_instance", type=int)
    p.add_argument("--template")
    p.add_argument("--out")

    p = add("ruler", "generate book needle retrieval tasks")
    p.add_argument("--book", help="plain-text base book")
    p.add_argument("--kind", choices=retrieval.NEEDLE_KINDS)
    p.add_argument("--count", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--num-keys", dest="num_keys", type=int)
    p.add_argument("--num-values", dest="num_values", type=int)
    p.add_argument("--out")

    p = add("vt", "generate variable-tracking tasks")
    p.add_argument("--count", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--fanout", type=int)
    p.add_argument("--out")

    p = add("niah", "generate a needle grid over lengths and depths")
    p.add_argument("--book")
    p.add_argument("--lengths", help="comma-separated context sizes")
    p.add_argument("--depths", help="comma-separated fractions in [0, 1]")
    p.add_argument("--out")
    p.add_argument("--manifest-out", dest="manifest_out")

    p = add("verify", "score predictions against gold answers")
    p.add_argument("--rule", choices=verify_mod.RULES)
    p.add_argument("--pred", help="predictions JSONL with {task_id, prediction}")
    p.add_argument("--gold", help="task records with answers")
    p.add_argument("--out")

    p = add("advantage", "group advantages and objective values")
    p.add_argument("--results", help="rollout results JSONL")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--out")

    p = add("mix", "assemble a mixture manifest from a recipe")
    p.add_argument("--stage", choices=("warmup", "stage1", "stage2"))
    p.add_argument("--out")

    p = add("mine", "keep only tasks with a failed rollout")
    p.add_argument("--manifest")
    p.add_argument("--results")
    p.add_argument("--out")
    p.add_argument("--report-out", dest="report_out")

    p = add("trace", "re-derive hidden questions from context text")
    p.add_argument("--tasks")
    p.add_argument("--out")

    p = add("report", "summarize a record file")
    p.add_argument("--records")
    p.add_argument("--out")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = Options(args)
    try:
        return HANDLERS[args.command](opts)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
