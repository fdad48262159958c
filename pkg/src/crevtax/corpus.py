"""Loading, validating, filtering, and partitioning the labeled corpus.

The corpus file format is JSON Lines: one object per line, UTF-8, with the
fields exactly ``id``, ``comment``, ``old_code``, ``new_code``, ``label``.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .taxonomy import Category, Taxonomy, load_taxonomy

CORPUS_FIELDS = frozenset({"id", "comment", "old_code", "new_code", "label"})

#: Tolerance for the class-weight normalization check.
WEIGHT_SUM_TOLERANCE = 1e-9


class CorpusError(Exception):
    """Raised for malformed corpus files or invalid corpus operations."""


@dataclass(frozen=True)
class ReviewComment:
    """A single labeled review comment with optional code context."""

    id: str
    comment_text: str
    old_code: str | None
    new_code: str | None
    gold: Category

    @property
    def has_code(self) -> bool:
        return self.new_code is not None and self.new_code.strip() != ""


@dataclass(frozen=True)
class Corpus:
    """An ordered, validated collection of review comments."""

    items: tuple[ReviewComment, ...]
    source: str = "<memory>"
    filter_log: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        by_id: dict[str, ReviewComment] = {}
        for item in self.items:
            if item.id in by_id:
                raise CorpusError(f"duplicate id: {item.id}")
            by_id[item.id] = item
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[ReviewComment]:
        return iter(self.items)

    def by_id(self, comment_id: str) -> ReviewComment:
        try:
            return self._by_id[comment_id]
        except KeyError:
            raise CorpusError(f"unknown comment id: {comment_id}") from None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self.items)

    def gold_counts(self) -> Counter[Category]:
        return Counter(item.gold for item in self.items)

    def digest(self) -> str:
        """Stable content hash over ids, texts, code, and labels."""
        h = hashlib.sha256()
        for item in self.items:
            record = json.dumps(
                [item.id, item.comment_text, item.old_code, item.new_code, item.gold.value],
                ensure_ascii=False,
            )
            h.update(record.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class ClassWeights:
    """Per-category proportions of the evaluated comment population."""

    weights: dict[Category, float]

    def __post_init__(self) -> None:
        total = sum(self.weights.values())
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise CorpusError(f"class weights sum to {total!r}, expected 1")
        if any(w < 0 for w in self.weights.values()):
            raise CorpusError("class weights must be non-negative")

    def __getitem__(self, category: Category) -> float:
        return self.weights.get(category, 0.0)

    @classmethod
    def from_counts(cls, counts: dict[Category, int]) -> "ClassWeights":
        total = sum(counts.values())
        if total <= 0:
            raise CorpusError("cannot derive class weights from an empty set")
        weights = {cat: counts.get(cat, 0) / total for cat in Category}
        return cls(weights=weights)

    @classmethod
    def from_reference(cls, taxonomy: Taxonomy) -> "ClassWeights":
        """Weights from the taxonomy's reference frequency distribution."""
        return cls.from_counts(
            {c.id: c.reference_frequency for c in taxonomy.categories}
        )


@dataclass(frozen=True)
class FoldAssignment:
    """A deterministic partition of corpus ids into k folds."""

    k: int
    seed: int
    assignment: dict[str, int]
    stratified: bool = True

    def fold_of(self, comment_id: str) -> int:
        return self.assignment[comment_id]

    def test_ids(self, fold: int) -> tuple[str, ...]:
        return tuple(cid for cid, f in self.assignment.items() if f == fold)

    def test_items(self, corpus: Corpus, fold: int) -> tuple[ReviewComment, ...]:
        """Items of one fold, in corpus order."""
        return tuple(
            item for item in corpus.items if self.assignment[item.id] == fold
        )


def load_corpus(path: str | Path, taxonomy: Taxonomy | None = None) -> Corpus:
    """Load and validate a JSON Lines corpus file.

    Labels are resolved case-insensitively with documented aliases. Blank
    lines are skipped.

    Raises:
        CorpusError: On malformed records, unknown labels, or duplicate
            ids; messages carry the 1-based line number.
    """
    taxonomy = taxonomy or load_taxonomy()
    path = Path(path)
    items: list[ReviewComment] = []
    seen_ids: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record is not an object")
            keys = set(record)
            if keys != CORPUS_FIELDS:
                missing = sorted(CORPUS_FIELDS - keys)
                extra = sorted(keys - CORPUS_FIELDS)
                detail = []
                if missing:
                    detail.append(f"missing fields {missing}")
                if extra:
                    detail.append(f"unexpected fields {extra}")
                raise CorpusError(f"{path}:{lineno}: {'; '.join(detail)}")
            comment_id = record["id"]
            if not isinstance(comment_id, str) or not comment_id:
                raise CorpusError(f"{path}:{lineno}: id must be a non-empty string")
            if comment_id in seen_ids:
                raise CorpusError(f"{path}:{lineno}: duplicate id: {comment_id}")
            comment_text = record["comment"]
            if not isinstance(comment_text, str) or not comment_text.strip():
                raise CorpusError(f"{path}:{lineno}: comment must be non-empty")
            label = record["label"]
            category = taxonomy.resolve_category_label(str(label))
            if category is None:
                raise CorpusError(f"{path}:{lineno}: unknown label: {label!r}")
            old_code = record["old_code"]
            new_code = record["new_code"]
            if old_code is not None and not isinstance(old_code, str):
                raise CorpusError(f"{path}:{lineno}: old_code must be text or null")
            if new_code is not None and not isinstance(new_code, str):
                raise CorpusError(f"{path}:{lineno}: new_code must be text or null")
            seen_ids.add(comment_id)
            items.append(
                ReviewComment(
                    id=comment_id,
                    comment_text=comment_text,
                    old_code=old_code,
                    new_code=new_code,
                    gold=category,
                )
            )
    return Corpus(items=tuple(items), source=str(path))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back to the JSON Lines format."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for item in corpus.items:
            record = {
                "id": item.id,
                "comment": item.comment_text,
                "old_code": item.old_code,
                "new_code": item.new_code,
                "label": item.gold.value,
            }
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def filter_with_code(corpus: Corpus) -> Corpus:
    """Drop comments without an associated code change.

    Retains items whose new code is present and non-empty; the number of
    excluded items is appended to the corpus filter log. Idempotent.
    """
    kept = tuple(item for item in corpus.items if item.has_code)
    excluded = len(corpus.items) - len(kept)
    log = corpus.filter_log + (f"excluded {excluded} items without code",)
    return Corpus(items=kept, source=corpus.source, filter_log=log)


def class_weights(corpus: Corpus) -> ClassWeights:
    """Per-category proportions of the corpus; absent categories get 0."""
    if len(corpus) == 0:
        raise CorpusError("cannot derive class weights from an empty corpus")
    return ClassWeights.from_counts(dict(corpus.gold_counts()))


def stratified_kfold(
    corpus: Corpus, k: int, seed: int, stratified: bool = True
) -> FoldAssignment:
    """Deterministically partition the corpus into k folds.

    In stratified mode (default), each category's items are spread so that
    per-category counts across folds differ by at most one, and extras are
    placed on the currently smallest folds so overall fold sizes also differ
    by at most one. Categories with fewer items than folds land on distinct
    folds; the remaining folds legitimately hold none of that category.

    Args:
        corpus: The corpus to split.
        k: Number of folds, at least 2.
        seed: Seed for the shuffle; the same (corpus, k, seed) always
            yields the same assignment.
        stratified: When False, a plain shuffled round-robin split is used.

    Raises:
        CorpusError: If k < 2 or k exceeds the corpus size.
    """
    if k < 2:
        raise CorpusError(f"fold count must be at least 2, got {k}")
    if k > len(corpus):
        raise CorpusError(
            f"fold count {k} exceeds corpus size {len(corpus)}"
        )
    rng = random.Random(seed)
    assignment: dict[str, int] = {}

    if not stratified:
        ids = list(corpus.ids)
        rng.shuffle(ids)
        for i, comment_id in enumerate(ids):
            assignment[comment_id] = i % k
        return FoldAssignment(k=k, seed=seed, assignment=assignment, stratified=False)

    by_category: dict[Category, list[str]] = defaultdict(list)
    for item in corpus.items:
        by_category[item.gold].append(item.id)

    fold_sizes = [0] * k
    for category in Category:  # canonical order keeps the split reproducible
        ids = by_category.get(category)
        if not ids:
            continue
        rng.shuffle(ids)
        base, extra = divmod(len(ids), k)
        # Extras go to the currently smallest folds so overall sizes stay
        # within one of each other.
        order = sorted(range(k), key=lambda f: (fold_sizes[f], f))
        per_fold = {fold: base for fold in range(k)}
        for fold in order[:extra]:
            per_fold[fold] += 1
        cursor = 0
        for fold in range(k):
            for comment_id in ids[cursor : cursor + per_fold[fold]]:
                assignment[comment_id] = fold
            fold_sizes[fold] += per_fold[fold]
            cursor += per_fold[fold]
    return FoldAssignment(k=k, seed=seed, assignment=assignment, stratified=True)
