"""Corpus loading, filtering, weights, and fold assignment."""

import json
import random
from collections import Counter

import pytest

from crevtax import (
    Category,
    ClassWeights,
    Corpus,
    CorpusError,
    class_weights,
    filter_with_code,
    load_corpus,
    save_corpus,
    stratified_kfold,
)
from conftest import build_items, reference_counts


def _write_jsonl(path, records):
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")


def _record(i, label, new_code="x = 1"):
    return {
        "id": f"r{i}",
        "comment": f"comment {i}",
        "old_code": None,
        "new_code": new_code,
        "label": label,
    }


class TestLoadCorpus:
    def test_loads_valid_records(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        _write_jsonl(path, [_record(0, "Praise"), _record(1, "Timing")])
        corpus = load_corpus(path, taxonomy)
        assert len(corpus) == 2
        assert corpus.items[0].gold is Category.PRAISE
        assert corpus.items[1].gold is Category.TIMING

    def test_alias_labels_resolve(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        _write_jsonl(path, [_record(0, "CODE ORGANIZATION")])
        corpus = load_corpus(path, taxonomy)
        assert corpus.items[0].gold is Category.CODE_ORGANIZATION

    def test_unknown_label_reports_line(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        _write_jsonl(path, [_record(0, "Praise"), _record(1, "Bugs")])
        with pytest.raises(CorpusError, match=r":2: unknown label: 'Bugs'"):
            load_corpus(path, taxonomy)

    def test_duplicate_id_rejected(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        records = [_record(0, "Praise"), _record(0, "Timing")]
        _write_jsonl(path, records)
        with pytest.raises(CorpusError, match="duplicate id"):
            load_corpus(path, taxonomy)

    def test_malformed_record_reports_line(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a"}\n', encoding="utf-8")
        with pytest.raises(CorpusError, match=":1:"):
            load_corpus(path, taxonomy)

    def test_unexpected_field_rejected(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        record = _record(0, "Praise")
        record["extra"] = True
        _write_jsonl(path, [record])
        with pytest.raises(CorpusError, match="unexpected fields"):
            load_corpus(path, taxonomy)

    def test_order_stable_across_loads(self, tmp_path, taxonomy):
        path = tmp_path / "corpus.jsonl"
        _write_jsonl(path, [_record(i, "Praise") for i in range(20)])
        first = load_corpus(path, taxonomy)
        second = load_corpus(path, taxonomy)
        assert first.ids == second.ids
        assert first.digest() == second.digest()

    def test_round_trip(self, tmp_path, taxonomy):
        items = build_items({Category.PRAISE: 2, Category.TIMING: 1})
        corpus = Corpus(items=tuple(items))
        path = tmp_path / "corpus.jsonl"
        save_corpus(corpus, path)
        loaded = load_corpus(path, taxonomy)
        assert loaded.items == corpus.items


class TestFilterWithCode:
    def test_excludes_items_without_code(self):
        items = build_items({Category.PRAISE: 2})
        no_code = build_items({Category.TIMING: 1}, with_code=False, id_prefix="n")
        corpus = Corpus(items=tuple(items + no_code))
        filtered = filter_with_code(corpus)
        assert len(filtered) == 2
        assert filtered.filter_log == ("excluded 1 items without code",)

    def test_identity_when_all_have_code(self):
        corpus = Corpus(items=tuple(build_items({Category.PRAISE: 3})))
        filtered = filter_with_code(corpus)
        assert filtered.items == corpus.items

    def test_idempotent(self):
        items = build_items({Category.PRAISE: 4})
        no_code = build_items({Category.TIMING: 2}, with_code=False, id_prefix="n")
        corpus = Corpus(items=tuple(items + no_code))
        once = filter_with_code(corpus)
        twice = filter_with_code(once)
        assert twice.items == once.items

    def test_full_scale_filter(self, taxonomy):
        """2,500 records of which 672 lack code reduce to 1,828."""
        with_code = build_items(reference_counts(taxonomy))
        without = build_items({Category.QUESTION: 672}, with_code=False, id_prefix="n")
        corpus = Corpus(items=tuple(with_code + without))
        assert len(corpus) == 2500
        filtered = filter_with_code(corpus)
        assert len(filtered) == 1828


class TestClassWeights:
    def test_weights_sum_to_one(self, reference_corpus):
        weights = class_weights(reference_corpus)
        assert abs(sum(weights.weights.values()) - 1.0) < 1e-9

    def test_documentation_weight(self, reference_corpus):
        weights = class_weights(reference_corpus)
        assert weights[Category.DOCUMENTATION] == pytest.approx(387 / 1828)

    def test_single_item_corpus(self):
        corpus = Corpus(items=tuple(build_items({Category.TIMING: 1})))
        weights = class_weights(corpus)
        assert weights[Category.TIMING] == 1.0
        assert all(
            weights[c] == 0.0 for c in Category if c is not Category.TIMING
        )

    def test_uniform_corpus(self):
        corpus = Corpus(items=tuple(build_items({c: 1 for c in Category})))
        weights = class_weights(corpus)
        for category in Category:
            assert weights[category] == pytest.approx(1 / 17)

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError, match="empty"):
            class_weights(Corpus(items=()))

    def test_order_independent(self, small_corpus):
        shuffled = list(small_corpus.items)
        random.Random(5).shuffle(shuffled)
        reordered = Corpus(items=tuple(shuffled))
        assert class_weights(small_corpus).weights == class_weights(reordered).weights

    def test_invalid_sum_rejected(self):
        with pytest.raises(CorpusError, match="sum"):
            ClassWeights(weights={Category.PRAISE: 0.5})


class TestStratifiedKFold:
    def test_reference_corpus_fold_sizes(self, reference_corpus):
        folds = stratified_kfold(reference_corpus, k=10, seed=7)
        sizes = Counter(folds.assignment.values())
        assert set(sizes) == set(range(10))
        assert set(sizes.values()) <= {182, 183}
        assert sum(sizes.values()) == 1828

    def test_per_category_counts_within_one(self, reference_corpus):
        folds = stratified_kfold(reference_corpus, k=10, seed=7)
        per_fold_category: dict[tuple[int, Category], int] = Counter()
        for item in reference_corpus.items:
            per_fold_category[(folds.fold_of(item.id), item.gold)] += 1
        for category in Category:
            counts = [per_fold_category.get((f, category), 0) for f in range(10)]
            assert max(counts) - min(counts) <= 1, category

    def test_forced_stratification_on_balanced_corpus(self):
        items = build_items({Category.PRAISE: 2, Category.TIMING: 2})
        corpus = Corpus(items=tuple(items))
        folds = stratified_kfold(corpus, k=2, seed=0)
        for fold in (0, 1):
            golds = [item.gold for item in folds.test_items(corpus, fold)]
            assert sorted(g.value for g in golds) == ["Praise", "Timing"]

    def test_deterministic_for_fixed_seed(self, small_corpus):
        first = stratified_kfold(small_corpus, k=10, seed=42)
        second = stratified_kfold(small_corpus, k=10, seed=42)
        assert first.assignment == second.assignment

    def test_different_seed_changes_assignment(self, small_corpus):
        first = stratified_kfold(small_corpus, k=10, seed=1)
        second = stratified_kfold(small_corpus, k=10, seed=2)
        assert first.assignment != second.assignment

    def test_partition_properties(self, small_corpus):
        folds = stratified_kfold(small_corpus, k=5, seed=3)
        assert set(folds.assignment) == set(small_corpus.ids)
        union = [cid for fold in range(5) for cid in folds.test_ids(fold)]
        assert sorted(union) == sorted(small_corpus.ids)

    def test_rare_category_lands_on_distinct_folds(self, reference_corpus):
        folds = stratified_kfold(reference_corpus, k=10, seed=7)
        timing_folds = [
            folds.fold_of(item.id)
            for item in reference_corpus.items
            if item.gold is Category.TIMING
        ]
        assert len(timing_folds) == 4
        assert len(set(timing_folds)) == 4

    def test_plain_mode_balances_sizes(self, small_corpus):
        folds = stratified_kfold(small_corpus, k=3, seed=11, stratified=False)
        sizes = Counter(folds.assignment.values())
        assert max(sizes.values()) - min(sizes.values()) <= 1

    def test_k_bounds(self, small_corpus):
        with pytest.raises(CorpusError, match="at least 2"):
            stratified_kfold(small_corpus, k=1, seed=0)
        with pytest.raises(CorpusError, match="exceeds"):
            stratified_kfold(small_corpus, k=1000, seed=0)
