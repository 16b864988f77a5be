#!/usr/bin/env python3
"""Drive the full pipeline on the demo corpus via the CLI entry points:
curate -> extend -> keychain -> trace, plus retrieval generation, mock
rollout scoring, advantages, a small mixture, and hard mining."""

from __future__ import annotations

import argparse
from pathlib import Path

from longweave.cli import main as cli
from longweave.records import iter_jsonl, save_records


def run(argv: list[str]) -> None:
    code = cli(argv)
    if code != 0:
        raise SystemExit(f"step failed ({code}): {' '.join(argv)}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data-dir", default="data", help="directory from make_fixtures.py")
    ap.add_argument("--out-dir", default="data/pipeline")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--target", type=int, default=4096, help="context budget in counter units")
    args = ap.parse_args()

    data = Path(args.data_dir)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = str(args.seed)

    run(["curate", "--seeds", str(data / "seeds.jsonl"), "--rates", str(data / "rates.jsonl"),
         "--model", "oracle", "--out-kept", str(out / "kept.jsonl"),
         "--out-pool", str(out / "pool.jsonl"), "--out-report", str(out / "curation.json")])
    run(["extend", "--kept", str(out / "kept.jsonl"), "--pool", str(out / "pool.jsonl"),
         "--target", str(args.target), "--hard-cap", str(args.target),
         "--seed", seed, "--out", str(out / "extended.jsonl")])
    run(["keychain", "--extended", str(out / "extended.jsonl"), "--seed", seed,
         "--out", str(out / "keychain.jsonl")])
    run(["trace", "--tasks", str(out / "keychain.jsonl"), "--out", str(out / "trace.jsonl")])

    run(["ruler", "--book", str(data / "book.txt"), "--kind", "multi_key", "--count", "32",
         "--budget", str(args.target), "--seed", seed, "--out", str(out / "ruler_mk.jsonl")])
    run(["ruler", "--book", str(data / "book.txt"), "--kind", "multi_value", "--count", "32",
         "--budget", str(args.target), "--seed", seed, "--out", str(out / "ruler_mv.jsonl")])
    run(["vt", "--count", "32", "--seed", seed, "--out", str(out / "vt.jsonl")])
    run(["niah", "--book", str(data / "book.txt"), "--lengths", "1024,2048,4096",
         "--depths", "0,0.25,0.5,0.75,1", "--seed", seed,
         "--out", str(out / "niah_cells.jsonl"), "--manifest-out", str(out / "niah_grid.json")])

    # mock rollouts: four boxed answers per task, half of them correct
    tasks = [obj for _, obj in iter_jsonl(out / "keychain.jsonl")]
    preds, rollouts = [], []
    for i, task in enumerate(tasks):
        answer = task["answer"] if i % 3 else "not the answer"
        preds.append({"task_id": task["id"], "prediction": f"<think>demo</think> \\boxed{{{answer}}}"})
        rollouts.append({"task_id": task["id"], "rewards": [1, 1, 1, 1] if i % 3 else [1, 0, 0, 1]})
    save_records(preds, out / "preds.jsonl")
    save_records(rollouts, out / "rollouts.jsonl")

    run(["verify", "--rule", "two_way_substring", "--pred", str(out / "preds.jsonl"),
         "--gold", str(out / "keychain.jsonl"), "--out", str(out / "verify.jsonl")])
    run(["advantage", "--results", str(out / "rollouts.jsonl"), "--out", str(out / "advantages.jsonl")])

    mix_config = out / "mix.toml"
    mix_config.write_text(
        "[[entry]]\n"
        'name = "keychain_demo"\nsource_kind = "keychain"\ncount = 8\n'
        f"length = [1, {args.target * 4}]\n"
        'difficulty = "hard"\nstages = ["stage1", "stage2"]\n'
        'source = "keychain.jsonl"\n\n'
        "[[entry]]\n"
        'name = "math_demo"\nsource_kind = "math"\ncount = 16\n'
        "length = [1, 1024]\n"
        'difficulty = "easy"\nstages = ["warmup", "stage1", "stage2"]\n'
        f'source = "{(data / "math.jsonl").resolve().as_posix()}"\n',
        encoding="utf-8",
    )
    run(["mix", "--config", str(mix_config), "--seed", seed, "--out", str(out / "manifest.jsonl")])

    # mining needs a rollout group for every manifest row
    manifest_rows = [obj for _, obj in iter_jsonl(out / "manifest.jsonl")][1:]
    mining_rollouts = [
        {"task_id": row["id"], "rewards": [1] * 8 if i % 2 else [1, 1, 0, 1, 1, 1, 1, 1]}
        for i, row in enumerate(manifest_rows)
    ]
    save_records(mining_rollouts, out / "mining_rollouts.jsonl")
    run(["mine", "--manifest", str(out / "manifest.jsonl"), "--results",
         str(out / "mining_rollouts.jsonl"), "--out", str(out / "mined.jsonl"),
         "--report-out", str(out / "mining.json")])
    run(["report", "--records", str(out / "keychain.jsonl"), "--out", str(out / "report.txt")])

    trace_rows = [obj for _, obj in iter_jsonl(out / "trace.jsonl")]
    print(f"\npipeline complete: {len(tasks)} keychain tasks, "
          f"{sum(1 for r in trace_rows if r['ok'])} traced ok -> {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
