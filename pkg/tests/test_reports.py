"""Report assembly, fold summaries, comparisons, and table rendering."""

import random

import pytest

from crevtax import (
    Category,
    Prediction,
    baseline_majority,
    build_evaluation_report,
    stratified_kfold,
)
from crevtax.metrics import MetricsError
from crevtax.reports import (
    align_predictions,
    compare_runs,
    mean_per_category_metrics,
    mean_weighted_metrics,
    per_fold_summaries,
    render_category_comparison_table,
    render_category_table,
    render_comparison_table,
    render_weighted_rows,
    sorted_categories,
)


def _oracle_predictions(corpus, jitter_rate=0.0, seed=0):
    rng = random.Random(seed)
    categories = list(Category)
    preds = []
    for item in corpus.items:
        category = item.gold
        if jitter_rate and rng.random() < jitter_rate:
            category = rng.choice(categories)
        preds.append(
            Prediction(
                comment_id=item.id,
                category=category,
                step1_group=None,
                raw_responses=(),
                model_id="synthetic",
            )
        )
    return preds


class TestAlignment:
    def test_reorders_to_corpus_order(self, small_corpus):
        preds = list(reversed(_oracle_predictions(small_corpus)))
        aligned = align_predictions(small_corpus, preds)
        assert [p.comment_id for p in aligned] == list(small_corpus.ids)

    def test_missing_prediction_rejected(self, small_corpus):
        preds = _oracle_predictions(small_corpus)[:-1]
        with pytest.raises(MetricsError, match="missing predictions"):
            align_predictions(small_corpus, preds)

    def test_unknown_id_rejected(self, small_corpus):
        preds = _oracle_predictions(small_corpus)
        preds.append(
            Prediction(
                comment_id="stranger",
                category=Category.PRAISE,
                step1_group=None,
                raw_responses=(),
                model_id="synthetic",
            )
        )
        with pytest.raises(MetricsError, match="unknown ids"):
            align_predictions(small_corpus, preds)

    def test_duplicate_prediction_rejected(self, small_corpus):
        preds = _oracle_predictions(small_corpus)
        preds.append(preds[0])
        with pytest.raises(MetricsError, match="duplicate"):
            align_predictions(small_corpus, preds)


class TestEvaluationReport:
    def test_oracle_report_is_all_ones(self, small_corpus, taxonomy):
        report = build_evaluation_report(
            small_corpus, _oracle_predictions(small_corpus), taxonomy
        )
        assert report.weighted.f1 == 1.0
        assert report.unparseable_count == 0
        for category in Category:
            metrics = report.per_category[category]
            if metrics.support:
                assert metrics.f1 == 1.0

    def test_majority_report_matches_closed_form(self, reference_corpus, taxonomy):
        report = build_evaluation_report(
            reference_corpus, baseline_majority(reference_corpus), taxonomy
        )
        w = 387 / 1828
        assert report.weighted.f1 == pytest.approx(w * 2 * w / (1 + w))
        assert report.model_id == "baseline:majority"

    def test_step1_accuracy_present_only_for_hierarchical(self, small_corpus, taxonomy):
        flat_report = build_evaluation_report(
            small_corpus, _oracle_predictions(small_corpus), taxonomy
        )
        assert flat_report.step1_group_accuracy is None
        hier_preds = [
            Prediction(
                comment_id=item.id,
                category=item.gold,
                step1_group=taxonomy.group_of(item.gold),
                raw_responses=(),
                model_id="synthetic",
            )
            for item in small_corpus.items
        ]
        hier_report = build_evaluation_report(small_corpus, hier_preds, taxonomy)
        assert hier_report.step1_group_accuracy == 1.0


class TestFolds:
    def test_oracle_every_fold_perfect(self, small_corpus, taxonomy):
        folds = stratified_kfold(small_corpus, k=5, seed=1)
        reports = per_fold_summaries(
            small_corpus, _oracle_predictions(small_corpus), folds, taxonomy
        )
        assert len(reports) == 5
        assert all(r.weighted.f1 == 1.0 for r in reports)
        means = mean_weighted_metrics(reports)
        assert means["f1"] == 1.0

    def test_fold_reports_deterministic(self, small_corpus, taxonomy):
        preds = _oracle_predictions(small_corpus, jitter_rate=0.3, seed=4)
        folds = stratified_kfold(small_corpus, k=5, seed=9)
        first = per_fold_summaries(small_corpus, preds, folds, taxonomy)
        second = per_fold_summaries(small_corpus, preds, folds, taxonomy)
        assert [r.weighted.as_dict() for r in first] == [
            r.weighted.as_dict() for r in second
        ]


class TestCompareRuns:
    def test_identical_runs_degenerate(self, small_corpus, taxonomy):
        preds = _oracle_predictions(small_corpus, jitter_rate=0.3, seed=4)
        folds = stratified_kfold(small_corpus, k=5, seed=9)
        comparisons = compare_runs(
            small_corpus, preds, preds, folds, taxonomy
        )
        for comparison in comparisons.values():
            assert comparison.percent_change == 0.0
            assert comparison.test.degenerate
            assert comparison.test.p_value == 1.0

    def test_better_run_wins(self, small_corpus, taxonomy):
        good = _oracle_predictions(small_corpus, jitter_rate=0.05, seed=1)
        bad = _oracle_predictions(small_corpus, jitter_rate=0.6, seed=2)
        folds = stratified_kfold(small_corpus, k=5, seed=9)
        comparisons = compare_runs(small_corpus, good, bad, folds, taxonomy)
        f1 = comparisons["f1"]
        assert f1.ours_mean > f1.baseline_mean
        assert f1.percent_change > 0
        assert f1.test.p_value < 0.1


class TestRendering:
    def test_category_table_sorted_by_rating(self, small_corpus, taxonomy):
        report = build_evaluation_report(
            small_corpus, _oracle_predictions(small_corpus), taxonomy
        )
        table = render_category_table(report, taxonomy, sort="rating")
        lines = table.splitlines()
        assert lines[0].startswith("Category")
        assert lines[2].startswith("Functional Defect")
        assert lines[-1].startswith("False Positive")

    def test_rating_order_matches_published_report_order(self, taxonomy):
        order = sorted_categories(taxonomy, sort="rating")
        assert order[:5] == [
            Category.FUNCTIONAL_DEFECT,
            Category.VALIDATION,
            Category.LOGICAL,
            Category.INTERFACE,
            Category.SOLUTION_APPROACH,
        ]
        assert order[-2:] == [
            Category.VISUAL_REPRESENTATION,
            Category.FALSE_POSITIVE,
        ]

    def test_weighted_rows_scaled_to_hundred(self):
        text = render_weighted_rows(
            [("run", {"f1": 0.074, "precision": 0.045, "recall": 0.212,
                      "accuracy": 0.212})]
        )
        assert "7.4" in text
        assert "4.5" in text
        assert "21.2" in text

    def test_comparison_table_contains_stars_and_note(self, small_corpus, taxonomy):
        good = _oracle_predictions(small_corpus, jitter_rate=0.0)
        bad = _oracle_predictions(small_corpus, jitter_rate=0.9, seed=3)
        folds = stratified_kfold(small_corpus, k=5, seed=9)
        comparisons = compare_runs(small_corpus, good, bad, folds, taxonomy)
        table = render_comparison_table(comparisons)
        assert "Sig" in table
        assert "***" in table or "**" in table or "*" in table

    def test_delta_table_from_two_stored_runs(self, small_corpus, taxonomy):
        """Definition-style ablation rows recomputed from two run outputs."""
        from crevtax import definition_delta
        from crevtax.reports import render_delta_table

        refined_run = build_evaluation_report(
            small_corpus, _oracle_predictions(small_corpus, jitter_rate=0.1, seed=1),
            taxonomy,
        )
        brief_run = build_evaluation_report(
            small_corpus, _oracle_predictions(small_corpus, jitter_rate=0.3, seed=2),
            taxonomy,
        )
        delta = definition_delta(brief_run.weighted, refined_run.weighted)
        expected_f1 = (
            (brief_run.weighted.f1 - refined_run.weighted.f1)
            / refined_run.weighted.f1 * 100
        )
        assert delta.f1 == pytest.approx(expected_f1)
        table = render_delta_table([("model-x", delta)])
        lines = table.splitlines()
        assert lines[0].split() == ["Run", "F1", "Precision", "Recall", "Accuracy"]
        assert lines[2].startswith("model-x")
        assert "%" in lines[2]

    def test_category_comparison_table_has_na_cells(self, small_corpus, taxonomy):
        """Categories the baseline never gets right render (n/a) deltas."""
        good = _oracle_predictions(small_corpus)
        bad = [
            Prediction(
                comment_id=item.id,
                category=Category.DOCUMENTATION,
                step1_group=None,
                raw_responses=(),
                model_id="always-doc",
            )
            for item in small_corpus.items
        ]
        folds = stratified_kfold(small_corpus, k=5, seed=9)
        ours = mean_per_category_metrics(
            per_fold_summaries(small_corpus, good, folds, taxonomy)
        )
        base = mean_per_category_metrics(
            per_fold_summaries(small_corpus, bad, folds, taxonomy)
        )
        table = render_category_comparison_table(ours, base, taxonomy)
        assert "(n/a)" in table
