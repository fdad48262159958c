"""Shared fixtures: synthetic corpora and scripted mock responders."""

from __future__ import annotations

import hashlib
import random
import re

import pytest

from crevtax import (
    Category,
    Corpus,
    MockBackend,
    ReviewComment,
    Taxonomy,
    load_taxonomy,
)

GROUP_LINE_PATTERNS = [
    re.compile(r"^Functional: ", re.M),
    re.compile(r"^Refactoring: ", re.M),
    re.compile(r"^Documentation: ", re.M),
    re.compile(r"^Discussion: ", re.M),
    re.compile(r"^False Positive: ", re.M),
]

_COMMENT_LINE = re.compile(r"^Review comment: (.*)$", re.M)


@pytest.fixture(scope="session")
def taxonomy() -> Taxonomy:
    return load_taxonomy()


def build_items(
    counts: dict[Category, int],
    with_code: bool = True,
    id_prefix: str = "c",
) -> list[ReviewComment]:
    """Synthetic items with unique single-line texts, in a stable order."""
    items: list[ReviewComment] = []
    index = 0
    for category, count in counts.items():
        for _ in range(count):
            items.append(
                ReviewComment(
                    id=f"{id_prefix}{index:05d}",
                    comment_text=f"review comment {index:05d} about {category.value}",
                    old_code=f"old_{index} = compute()" if with_code and index % 2 else None,
                    new_code=f"new_{index} = compute()" if with_code else None,
                    gold=category,
                )
            )
            index += 1
    return items


def reference_counts(taxonomy: Taxonomy) -> dict[Category, int]:
    return {c.id: c.reference_frequency for c in taxonomy.categories}


@pytest.fixture(scope="session")
def reference_corpus(taxonomy: Taxonomy) -> Corpus:
    """1828 items matching the reference per-category counts exactly."""
    return Corpus(items=tuple(build_items(reference_counts(taxonomy))))


@pytest.fixture(scope="session")
def small_corpus(taxonomy: Taxonomy) -> Corpus:
    """200 items covering all 17 categories, roughly reference-proportioned."""
    counts = {c.id: 1 for c in taxonomy.categories}
    rng = random.Random(20240501)
    categories = [c.id for c in taxonomy.categories]
    weights = [c.reference_frequency for c in taxonomy.categories]
    for category in rng.choices(categories, weights=weights, k=200 - len(counts)):
        counts[category] += 1
    return Corpus(items=tuple(build_items(counts)))


def is_group_step(user_text: str) -> bool:
    """True when the prompt offers the five groups (hierarchical step one)."""
    return all(p.search(user_text) for p in GROUP_LINE_PATTERNS)


def comment_text_of(user_text: str) -> str:
    match = _COMMENT_LINE.search(user_text)
    assert match is not None, "prompt lacks a review comment line"
    return match.group(1)


def _mangle(name: str, key: str) -> str:
    """Deterministic casing/whitespace/terminator variation of a response."""
    digest = int(hashlib.sha256(key.encode("utf-8")).hexdigest(), 16)
    forms = (
        name,
        name.upper(),
        name.lower(),
        name.title(),
        f"  {name}  ",
        f'"{name}"',
    )
    wrapped = forms[digest % len(forms)]
    terminators = ("$", " $", "$ since that fits best", "$$")
    return wrapped + terminators[(digest // 7) % len(terminators)]


def make_oracle_responder(corpus: Corpus, taxonomy: Taxonomy, vary: bool = True):
    """Responder that answers every prompt with the item's gold label.

    Step-one prompts get the gold group, other prompts the gold category,
    optionally with varied casing, padding, and terminator placement.
    """
    by_text = {item.comment_text: item for item in corpus.items}
    assert len(by_text) == len(corpus.items), "fixture texts must be unique"

    def responder(system_text: str, user_text: str) -> str:
        item = by_text[comment_text_of(user_text)]
        if is_group_step(user_text):
            name = taxonomy.group_of(item.gold).display_name
        else:
            name = taxonomy.display_name(item.gold)
        if not vary:
            return name + "$"
        return _mangle(name, item.id + name)

    return responder


def make_group_error_responder(
    corpus: Corpus, taxonomy: Taxonomy, error_rate: float, seed: int = 13
):
    """Responder whose step-one answer is wrong for a fixed share of items.

    Wrong answers name the next group in canonical order; step two always
    answers the gold category (so a wrong group forces an unparseable
    second step). Selection is deterministic per item.
    """
    from crevtax.taxonomy import CANONICAL_GROUP_ORDER

    by_text = {item.comment_text: item for item in corpus.items}
    rng = random.Random(seed)
    wrong_ids = {
        item.id for item in corpus.items if rng.random() < error_rate
    }

    def responder(system_text: str, user_text: str) -> str:
        item = by_text[comment_text_of(user_text)]
        if is_group_step(user_text):
            group = taxonomy.group_of(item.gold)
            if item.id in wrong_ids:
                order = list(CANONICAL_GROUP_ORDER)
                group = order[(order.index(group) + 1) % len(order)]
            return group.display_name + "$"
        return taxonomy.display_name(item.gold) + "$"

    return responder


def oracle_backend(corpus: Corpus, taxonomy: Taxonomy, vary: bool = True) -> MockBackend:
    return MockBackend(responder=make_oracle_responder(corpus, taxonomy, vary))
