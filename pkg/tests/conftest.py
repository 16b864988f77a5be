"""Deterministic synthetic corpora shared across the suite.

Everything is generated from seeded RNGs: word-salad documents with real
sentence boundaries, QA seed instances with unique gold answers, and a
book-like text for needle tasks. No licensed data ships with the tests.
"""

from __future__ import annotations

import random

import pytest

from longweave.records import Document, QAInstance, derive_rng

_WORDS = (
    "river", "stone", "cloud", "meadow", "lantern", "harbor", "forest", "ember",
    "signal", "garden", "copper", "marble", "village", "window", "summer",
    "bridge", "meridian", "compass", "orchard", "whisper", "granite", "saffron",
    "timber", "valley", "horizon", "quiet", "motor", "anchor", "barrel", "cinder",
)

_ANSWER_WORDS = (
    "falcon", "juniper", "obsidian", "quartz", "sparrow", "walnut", "cobalt",
    "heather", "ivory", "magnolia", "onyx", "pine", "sienna", "teal", "umber",
)


def make_sentence(rng: random.Random, n_words: int | None = None) -> str:
    n = n_words or rng.randint(5, 9)
    words = [rng.choice(_WORDS) for _ in range(n)]
    words[0] = words[0].capitalize()
    return " ".join(words) + "."


def make_paragraph(rng: random.Random, n_sentences: int) -> str:
    return " ".join(make_sentence(rng) for _ in range(n_sentences))


def make_document(rng: random.Random, n_sentences: int = 6, title: str = "") -> Document:
    return Document(title=title, body=make_paragraph(rng, n_sentences))


def make_instance(index: int, seed: int = 1234, n_docs: int = 2) -> QAInstance:
    rng = derive_rng(seed, f"fixture-instance:{index}")
    answer = f"the {rng.choice(_ANSWER_WORDS)} {rng.choice(_ANSWER_WORDS)} {index}"
    docs = []
    for d in range(n_docs):
        body = make_paragraph(rng, 5)
        if d == 0:
            body += f" The hidden fact number {index} is {answer}."
        docs.append(Document(title=f"Fixture {index}.{d}", body=body))
    return QAInstance(
        instance_id=f"other:fx{index:04d}",
        source="other",
        documents=tuple(docs),
        question=f"What is the hidden fact number {index}?",
        answer=answer,
    )


def make_corpus(n_instances: int, seed: int = 1234) -> list[QAInstance]:
    return [make_instance(i, seed=seed) for i in range(n_instances)]


def make_pool(n_docs: int, seed: int = 99, sentences: int = 6) -> list[Document]:
    rng = derive_rng(seed, "fixture-pool")
    return [
        Document(title=f"Pool {i}", body=f"Pool entry {i}. " + make_paragraph(rng, sentences))
        for i in range(n_docs)
    ]


def make_book(n_sentences: int, seed: int = 7) -> str:
    rng = derive_rng(seed, "fixture-book")
    return " ".join(make_sentence(rng) for _ in range(n_sentences))


@pytest.fixture(scope="session")
def corpus() -> list[QAInstance]:
    return make_corpus(20)


@pytest.fixture(scope="session")
def pool() -> list[Document]:
    return make_pool(60)


@pytest.fixture(scope="session")
def book() -> str:
    return make_book(2500)
