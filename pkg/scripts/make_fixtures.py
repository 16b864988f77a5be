#!/usr/bin/env python3
"""Generate a self-contained demo corpus: seed instances, a pass-rate cache,
a plain-text book, and short math records. Everything is synthetic and
seeded, so the files are reproducible byte for byte."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from conftest import make_book, make_corpus  # noqa: E402

from longweave.curation import PassRateCache  # noqa: E402
from longweave.records import save_records  # noqa: E402


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data", help="output directory")
    ap.add_argument("--instances", type=int, default=120)
    ap.add_argument("--book-sentences", type=int, default=4000)
    ap.add_argument("--math", type=int, default=200)
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--oracle-model", default="oracle")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    corpus = make_corpus(args.instances, seed=args.seed)
    save_records(corpus, out / "seeds.jsonl")

    # scripted pass rates: every 5th instance trivial, every 7th unsolved
    cache = PassRateCache()
    for i, inst in enumerate(corpus):
        if i % 5 == 0:
            k = 8
        elif i % 7 == 0:
            k = 0
        else:
            k = 1 + (i * 3) % 7
        cache.put(inst.instance_id, args.oracle_model, 8, k)
    cache.save(out / "rates.jsonl")

    (out / "book.txt").write_text(make_book(args.book_sentences, seed=args.seed), encoding="utf-8")

    math_records = [
        {
            "id": f"math/{i:05d}",
            "source": "other",
            "question": f"Compute {i} + {i * 2} and box the result.",
            "answer": str(i + i * 2),
            "documents": [],
        }
        for i in range(args.math)
    ]
    save_records(math_records, out / "math.jsonl")

    print(f"wrote seeds({args.instances}), rates, book, math({args.math}) -> {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
