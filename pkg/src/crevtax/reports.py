"""Evaluation report assembly and plain-text table rendering.

Reports come in two forms: structured dictionaries for machine reading and
monospace tables for eyeballing. Metric values are stored as fractions in
[0, 1] and rendered multiplied by 100 with one decimal, the convention the
weighted summary tables use.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

from .classify import Prediction
from .corpus import ClassWeights, Corpus, FoldAssignment
from .metrics import (
    CategoryMetrics,
    ConfusionCounts,
    DeltaReport,
    MetricsError,
    METRIC_NAMES,
    WeightedSummary,
    WilcoxonResult,
    category_metrics,
    confusion,
    group_accuracy,
    percent_change,
    predicted_group,
    weighted_summary,
    wilcoxon_signed_rank,
)
from .taxonomy import Category, Taxonomy


def align_predictions(
    corpus: Corpus, predictions: Sequence[Prediction]
) -> list[Prediction]:
    """Order predictions by the corpus and verify the id sets coincide.

    Raises:
        MetricsError: When ids are missing, duplicated, or unknown.
    """
    by_id: dict[str, Prediction] = {}
    for prediction in predictions:
        if prediction.comment_id in by_id:
            raise MetricsError(f"duplicate prediction for id: {prediction.comment_id}")
        by_id[prediction.comment_id] = prediction
    unknown = set(by_id) - set(corpus.ids)
    if unknown:
        raise MetricsError(f"predictions for unknown ids: {sorted(unknown)[:5]}")
    missing = [item.id for item in corpus.items if item.id not in by_id]
    if missing:
        raise MetricsError(f"missing predictions for ids: {missing[:5]}")
    return [by_id[item.id] for item in corpus.items]


@dataclass(frozen=True)
class EvaluationReport:
    """Per-category and weighted results of one evaluated prediction set."""

    per_category: dict[Category, CategoryMetrics]
    weighted: WeightedSummary
    counts: ConfusionCounts
    n_items: int
    unparseable_count: int
    weight_mode: str
    model_id: str
    step1_group_accuracy: float | None = None

    def as_dict(self) -> dict[str, object]:
        return {
            "model_id": self.model_id,
            "n_items": self.n_items,
            "unparseable_count": self.unparseable_count,
            "weight_mode": self.weight_mode,
            "weighted": self.weighted.as_dict(),
            "step1_group_accuracy": self.step1_group_accuracy,
            "per_category": {
                cat.value: {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                }
                for cat, m in self.per_category.items()
            },
        }


def build_evaluation_report(
    corpus: Corpus,
    predictions: Sequence[Prediction],
    taxonomy: Taxonomy,
    weight_mode: str = "evaluated",
    unparseable_as_false_positive: bool = False,
) -> EvaluationReport:
    """Align, score, and summarize one prediction set against a corpus.

    Args:
        weight_mode: "evaluated" weights by the evaluated set's own label
            proportions; "reference" weights by the taxonomy's reference
            distribution.
    """
    aligned = align_predictions(corpus, predictions)
    gold = [item.gold for item in corpus.items]
    counts = confusion(gold, aligned, unparseable_as_false_positive)
    if weight_mode == "evaluated":
        weights: ClassWeights | None = None
    elif weight_mode == "reference":
        weights = ClassWeights.from_reference(taxonomy)
    else:
        raise ValueError(f"unknown weight mode: {weight_mode}")
    summary = weighted_summary(counts, weights)

    step1_accuracy = None
    if any(p.step1_group is not None for p in aligned):
        gold_groups = [taxonomy.group_of(item.gold) for item in corpus.items]
        pred_groups = [predicted_group(p, taxonomy) for p in aligned]
        step1_accuracy = group_accuracy(gold_groups, pred_groups)

    model_ids = {p.model_id for p in aligned}
    return EvaluationReport(
        per_category=category_metrics(counts),
        weighted=summary,
        counts=counts,
        n_items=len(aligned),
        unparseable_count=sum(1 for p in aligned if not p.is_classified),
        weight_mode=weight_mode,
        model_id=model_ids.pop() if len(model_ids) == 1 else "mixed",
        step1_group_accuracy=step1_accuracy,
    )


def per_fold_summaries(
    corpus: Corpus,
    predictions: Sequence[Prediction],
    folds: FoldAssignment,
    taxonomy: Taxonomy,
    unparseable_as_false_positive: bool = False,
) -> list[EvaluationReport]:
    """Evaluate cached full-corpus predictions on each test fold.

    Weights come from each test fold itself, as required when averaging
    fold scores.
    """
    aligned = align_predictions(corpus, predictions)
    by_id = {p.comment_id: p for p in aligned}
    reports = []
    for fold in range(folds.k):
        items = folds.test_items(corpus, fold)
        if not items:
            raise MetricsError(f"fold {fold} is empty")
        sub_corpus = Corpus(items=items, source=corpus.source)
        sub_preds = [by_id[item.id] for item in items]
        reports.append(
            build_evaluation_report(
                sub_corpus,
                sub_preds,
                taxonomy,
                weight_mode="evaluated",
                unparseable_as_false_positive=unparseable_as_false_positive,
            )
        )
    return reports


def mean_weighted_metrics(reports: Sequence[EvaluationReport]) -> dict[str, float]:
    """Unweighted mean of the weighted metrics across folds."""
    return {
        name: sum(r.weighted.metric(name) for r in reports) / len(reports)
        for name in METRIC_NAMES
    }


def mean_per_category_metrics(
    reports: Sequence[EvaluationReport],
) -> dict[Category, dict[str, float]]:
    """Per-category precision/recall/F1 averaged across folds.

    Folds without any item of a category contribute 0 for that category,
    following the zero-division convention.
    """
    result: dict[Category, dict[str, float]] = {}
    for category in Category:
        result[category] = {
            "f1": sum(r.per_category[category].f1 for r in reports) / len(reports),
            "precision": sum(r.per_category[category].precision for r in reports)
            / len(reports),
            "recall": sum(r.per_category[category].recall for r in reports)
            / len(reports),
            "support": sum(r.per_category[category].support for r in reports),
        }
    return result


@dataclass(frozen=True)
class MetricComparison:
    """Fold-averaged comparison of one metric between two runs."""

    metric: str
    ours_mean: float
    baseline_mean: float
    percent_change: float | None
    test: WilcoxonResult


def compare_runs(
    corpus: Corpus,
    ours: Sequence[Prediction],
    baseline: Sequence[Prediction],
    folds: FoldAssignment,
    taxonomy: Taxonomy,
    alternative: str = "greater",
    unparseable_as_false_positive: bool = False,
) -> dict[str, MetricComparison]:
    """Per-fold paired comparison of two prediction sets.

    For each weighted metric, the per-fold values of both runs feed a
    one-sided Wilcoxon signed-rank test, and the percent change is computed
    on the fold means.
    """
    ours_reports = per_fold_summaries(
        corpus, ours, folds, taxonomy, unparseable_as_false_positive
    )
    base_reports = per_fold_summaries(
        corpus, baseline, folds, taxonomy, unparseable_as_false_positive
    )
    comparisons = {}
    for name in METRIC_NAMES:
        ours_values = [r.weighted.metric(name) for r in ours_reports]
        base_values = [r.weighted.metric(name) for r in base_reports]
        ours_mean = sum(ours_values) / len(ours_values)
        base_mean = sum(base_values) / len(base_values)
        comparisons[name] = MetricComparison(
            metric=name,
            ours_mean=ours_mean,
            baseline_mean=base_mean,
            percent_change=percent_change(ours_mean, base_mean),
            test=wilcoxon_signed_rank(ours_values, base_values, alternative),
        )
    return comparisons


# --- Rendering -------------------------------------------------------------

def _fmt(value: float | None, scale: float = 100.0, digits: int = 1) -> str:
    if value is None:
        return "n/a"
    return f"{value * scale:.{digits}f}"


def _fmt_pct(value: float | None) -> str:
    if value is None:
        return "(n/a)"
    return f"({value:+.1f}%)"


def config_digest(payload: dict) -> str:
    """Digest of the semantic run configuration, embedded in every output."""
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells: list[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    separator = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), separator] + [line(r) for r in rows])


def sorted_categories(taxonomy: Taxonomy, sort: str = "rating") -> list[Category]:
    """Category order for reports: by usefulness rating or canonical order.

    Rating order is descending; unrated categories come last.
    """
    if sort == "canonical":
        return [c.id for c in taxonomy.categories]
    if sort == "rating":
        def key(cdef):
            rating = cdef.usefulness_rating
            return (0, -rating) if rating is not None else (1, 0.0)
        return [c.id for c in sorted(taxonomy.categories, key=key)]
    raise ValueError(f"unknown sort: {sort}")


def render_category_table(
    report: EvaluationReport, taxonomy: Taxonomy, sort: str = "rating"
) -> str:
    headers = ["Category", "F1", "Prec", "Rec", "#Comments"]
    rows = []
    for category in sorted_categories(taxonomy, sort):
        m = report.per_category[category]
        rows.append(
            [
                taxonomy.display_name(category),
                _fmt(m.f1),
                _fmt(m.precision),
                _fmt(m.recall),
                str(m.support),
            ]
        )
    return _table(headers, rows)


def render_weighted_rows(rows: Sequence[tuple[str, dict[str, float]]]) -> str:
    headers = ["Run", "F1", "Precision", "Recall", "Accuracy"]
    body = [
        [
            label,
            _fmt(values["f1"]),
            _fmt(values["precision"]),
            _fmt(values["recall"]),
            _fmt(values["accuracy"]),
        ]
        for label, values in rows
    ]
    return _table(headers, body)


def render_comparison_table(comparisons: dict[str, MetricComparison]) -> str:
    headers = ["Metric", "Ours", "Baseline", "Change", "W", "p-value", "Sig"]
    rows = []
    for name in METRIC_NAMES:
        c = comparisons[name]
        rows.append(
            [
                name,
                _fmt(c.ours_mean),
                _fmt(c.baseline_mean),
                _fmt_pct(c.percent_change),
                f"{c.test.statistic_w:g}",
                f"{c.test.p_value:.6g}",
                c.test.stars,
            ]
        )
    return _table(headers, rows)


def render_category_comparison_table(
    ours: dict[Category, dict[str, float]],
    baseline: dict[Category, dict[str, float]],
    taxonomy: Taxonomy,
    sort: str = "rating",
) -> str:
    """Per-category fold-averaged metrics with percent change vs baseline."""
    headers = ["Category", "F1", "Prec", "Rec", "#Comments"]
    rows = []
    for category in sorted_categories(taxonomy, sort):
        ours_m, base_m = ours[category], baseline[category]
        cells = [taxonomy.display_name(category)]
        for name in ("f1", "precision", "recall"):
            delta = percent_change(ours_m[name], base_m[name])
            if ours_m[name] == 0 and base_m[name] == 0:
                cells.append(_fmt(ours_m[name]))
            else:
                cells.append(f"{_fmt(ours_m[name])} {_fmt_pct(delta)}")
        cells.append(str(int(base_m["support"])))
        rows.append(cells)
    return _table(headers, rows)


def render_delta_table(rows: Sequence[tuple[str, DeltaReport]]) -> str:
    """Definition-style ablation table: percent change per metric."""
    headers = ["Run", "F1", "Precision", "Recall", "Accuracy"]
    body = []
    for label, delta in rows:
        body.append(
            [
                label,
                _fmt_pct(delta.f1),
                _fmt_pct(delta.precision),
                _fmt_pct(delta.recall),
                _fmt_pct(delta.accuracy),
            ]
        )
    return _table(headers, body)
