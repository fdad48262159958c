"""Per-category and weighted metrics, baselines, deltas, significance.

Every metric treats one category as positive and the rest as negative.
Overall effectiveness is a weighted average with weights equal to each
category's share of comments, which suits the heavily imbalanced label
distribution. Precision, recall, and F1 are defined as 0 whenever their
denominator is 0, so categories a fold misses entirely score 0 rather
than poisoning an average.

Unparseable predictions match no label by default: they contribute a
false negative to the gold category and true negatives elsewhere. The
``unparseable_as_false_positive`` switch instead scores them as a
prediction of the false-positive category, reproducing the alternative
treatment some earlier runs used.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

from .classify import Prediction
from .corpus import ClassWeights, Corpus
from .taxonomy import Category, Group, Taxonomy

WILCOXON_EXACT_LIMIT = 20


class MetricsError(Exception):
    """Raised for misaligned or empty evaluation inputs."""


@dataclass(frozen=True)
class CategoryCounts:
    """One-vs-rest confusion cell counts for a single category."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def predicted(self) -> int:
        return self.tp + self.fp


@dataclass(frozen=True)
class ConfusionCounts:
    """One-vs-rest counts for every category over one evaluation set."""

    per_category: dict[Category, CategoryCounts]
    total: int

    @property
    def correct(self) -> int:
        return sum(c.tp for c in self.per_category.values())

    def support(self, category: Category) -> int:
        return self.per_category[category].support


@dataclass(frozen=True)
class CategoryMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class WeightedSummary:
    """Support-weighted averages plus overall accuracy for one run."""

    f1: float
    precision: float
    recall: float
    micro_accuracy: float
    weights: ClassWeights

    def metric(self, name: str) -> float:
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.micro_accuracy,
        }[name]

    def as_dict(self) -> dict[str, float]:
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.micro_accuracy,
        }


METRIC_NAMES = ("f1", "precision", "recall", "accuracy")


def _predicted_labels(
    preds: Sequence[Prediction], unparseable_as_false_positive: bool
) -> list[Category | None]:
    fallback = Category.FALSE_POSITIVE if unparseable_as_false_positive else None
    return [p.category if p.category is not None else fallback for p in preds]


def _one_vs_rest(
    gold: Sequence[Hashable],
    predicted: Sequence[Hashable | None],
    labels: Sequence[Hashable],
) -> dict[Hashable, CategoryCounts]:
    total = len(gold)
    gold_counts = Counter(gold)
    pred_counts = Counter(p for p in predicted if p is not None)
    pair_counts = Counter(
        (g, p) for g, p in zip(gold, predicted) if p is not None and g == p
    )
    counts: dict[Hashable, CategoryCounts] = {}
    for label in labels:
        tp = pair_counts.get((label, label), 0)
        fn = gold_counts.get(label, 0) - tp
        fp = pred_counts.get(label, 0) - tp
        tn = total - tp - fn - fp
        counts[label] = CategoryCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    return counts


def confusion(
    gold: Sequence[Category],
    preds: Sequence[Prediction],
    unparseable_as_false_positive: bool = False,
) -> ConfusionCounts:
    """One-vs-rest confusion counts over aligned gold labels and predictions.

    Args:
        gold: Gold category per item, in the same order as ``preds``.
        preds: Predictions; unparseable ones predict nothing (or the
            false-positive category, under the compatibility switch).

    Raises:
        MetricsError: On a length mismatch.
    """
    if len(gold) != len(preds):
        raise MetricsError(
            f"gold has {len(gold)} items but predictions have {len(preds)}"
        )
    predicted = _predicted_labels(preds, unparseable_as_false_positive)
    per_category = _one_vs_rest(gold, predicted, list(Category))
    return ConfusionCounts(per_category=per_category, total=len(gold))


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, f1


def category_metrics(counts: ConfusionCounts) -> dict[Category, CategoryMetrics]:
    """Precision/recall/F1/support per category from confusion counts."""
    result: dict[Category, CategoryMetrics] = {}
    for category, cell in counts.per_category.items():
        precision, recall, f1 = _prf(cell.tp, cell.fp, cell.fn)
        result[category] = CategoryMetrics(
            precision=precision, recall=recall, f1=f1, support=cell.support
        )
    return result


def weighted_summary(
    counts: ConfusionCounts, weights: ClassWeights | None = None
) -> WeightedSummary:
    """Weighted average of per-category metrics.

    With no explicit weights, weights are the category proportions of the
    evaluated set itself, in which case the weighted recall equals the
    overall accuracy exactly. Explicit weights (for example the reference
    distribution) are renormalized over the categories that actually occur
    in the evaluated set.

    Raises:
        MetricsError: On an empty evaluation set.
    """
    if counts.total == 0:
        raise MetricsError("cannot summarize an empty evaluation set")
    if weights is None:
        weights = ClassWeights.from_counts(
            {cat: cell.support for cat, cell in counts.per_category.items()}
        )
    per_category = category_metrics(counts)
    total_weight = 0.0
    sums = {"f1": 0.0, "precision": 0.0, "recall": 0.0}
    for category, m in per_category.items():
        if m.support == 0:
            continue
        w = weights[category]
        total_weight += w
        sums["f1"] += m.f1 * w
        sums["precision"] += m.precision * w
        sums["recall"] += m.recall * w
    if total_weight == 0:
        raise MetricsError("no category with support has non-zero weight")
    return WeightedSummary(
        f1=sums["f1"] / total_weight,
        precision=sums["precision"] / total_weight,
        recall=sums["recall"] / total_weight,
        micro_accuracy=counts.correct / counts.total,
        weights=weights,
    )


def micro_accuracy(
    gold: Sequence[Category],
    preds: Sequence[Prediction],
    unparseable_as_false_positive: bool = False,
) -> float:
    """Fraction of items whose predicted category equals the gold one."""
    if len(gold) != len(preds):
        raise MetricsError(
            f"gold has {len(gold)} items but predictions have {len(preds)}"
        )
    if not gold:
        raise MetricsError("cannot compute accuracy of an empty set")
    predicted = _predicted_labels(preds, unparseable_as_false_positive)
    return sum(1 for g, p in zip(gold, predicted) if g == p) / len(gold)


def group_confusion(
    gold_groups: Sequence[Group], predicted_groups: Sequence[Group | None]
) -> dict[Group, CategoryCounts]:
    """One-vs-rest counts at the group level (for first-step analysis)."""
    if len(gold_groups) != len(predicted_groups):
        raise MetricsError("gold and predicted group sequences differ in length")
    return _one_vs_rest(gold_groups, predicted_groups, list(Group))


def group_accuracy(
    gold_groups: Sequence[Group], predicted_groups: Sequence[Group | None]
) -> float:
    if not gold_groups:
        raise MetricsError("cannot compute accuracy of an empty set")
    if len(gold_groups) != len(predicted_groups):
        raise MetricsError("gold and predicted group sequences differ in length")
    return sum(1 for g, p in zip(gold_groups, predicted_groups) if g == p) / len(
        gold_groups
    )


def predicted_group(prediction: Prediction, taxonomy: Taxonomy) -> Group | None:
    """Group-level reading of a prediction.

    Hierarchical predictions report their matched first-step group; flat
    predictions report the group of the predicted category.
    """
    if prediction.step1_group is not None:
        return prediction.step1_group
    if prediction.category is not None:
        return taxonomy.group_of(prediction.category)
    return None


def percent_change(ours: float, baseline: float) -> float | None:
    """Relative difference in percent; None (n/a) when the baseline is 0."""
    if baseline == 0:
        return None
    return (ours - baseline) / baseline * 100.0


@dataclass(frozen=True)
class DeltaReport:
    """Per-metric percent change between two summaries (None = n/a)."""

    f1: float | None
    precision: float | None
    recall: float | None
    accuracy: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "accuracy": self.accuracy,
        }


def definition_delta(
    original: WeightedSummary, refined: WeightedSummary
) -> DeltaReport:
    """Percent change when swapping refined definitions for the originals.

    Positive values mean the original brief definitions scored higher.
    """
    return DeltaReport(
        f1=percent_change(original.f1, refined.f1),
        precision=percent_change(original.precision, refined.precision),
        recall=percent_change(original.recall, refined.recall),
        accuracy=percent_change(original.micro_accuracy, refined.micro_accuracy),
    )


def baseline_random(corpus: Corpus, seed: int) -> list[Prediction]:
    """Uniform independent guess over the 17 categories, fixed by seed."""
    rng = random.Random(seed)
    categories = list(Category)
    model_id = f"baseline:random[seed={seed}]"
    return [
        Prediction(
            comment_id=item.id,
            category=rng.choice(categories),
            step1_group=None,
            raw_responses=(),
            model_id=model_id,
        )
        for item in corpus.items
    ]


def baseline_majority(corpus: Corpus) -> list[Prediction]:
    """Predict the corpus's most frequent category for every item.

    Ties are broken in favor of the category that comes first in the
    canonical taxonomy order.
    """
    if len(corpus) == 0:
        raise MetricsError("cannot derive a majority class from an empty corpus")
    counts = corpus.gold_counts()
    order = {cat: i for i, cat in enumerate(Category)}
    majority = max(counts, key=lambda cat: (counts[cat], -order[cat]))
    return [
        Prediction(
            comment_id=item.id,
            category=majority,
            step1_group=None,
            raw_responses=(),
            model_id="baseline:majority",
        )
        for item in corpus.items
    ]


def random_baseline_expectation(
    weights: ClassWeights, n_categories: int = len(Category)
) -> dict[str, float]:
    """Analytic expectation of the uniform-random baseline.

    Expected per-category recall is 1/C and expected precision approaches
    the category's own weight, so the weighted averages are 1/C and the sum
    of squared weights. F1 is the plug-in combination of those two.
    """
    recall = 1.0 / n_categories
    precision = sum(w * w for w in weights.weights.values())
    f1 = 0.0
    for w in weights.weights.values():
        p, r = w, recall
        if p + r > 0:
            f1 += w * (2 * p * r / (p + r))
    return {"f1": f1, "precision": precision, "recall": recall, "accuracy": recall}


# --- Wilcoxon signed-rank test -------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    """One-sided Wilcoxon signed-rank test over paired samples.

    ``statistic_w`` is the sum of ranks of the positive differences.
    ``degenerate`` flags the all-zero-differences case, reported as p = 1.
    """

    n_effective: int
    statistic_w: float
    p_value: float
    alternative: str
    degenerate: bool = False
    method: str = "exact"

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def significance_stars(p_value: float) -> str:
    """Conventional significance marker for a p-value."""
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return "°"


def _average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..n with tied values sharing their average rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        average = (i + j + 2) / 2  # ranks are 1-based
        for pos in range(i, j + 1):
            ranks[order[pos]] = average
        i = j + 1
    return ranks


def _exact_tail_probability(
    doubled_ranks: list[int], doubled_w: int, alternative: str
) -> float:
    """Tail probability of W+ over all 2^n sign assignments.

    Counts, for every achievable rank sum, how many of the 2^n sign
    assignments reach it (subset-sum counting over the doubled ranks, which
    are integers even with ties), then sums the requested tail.
    """
    total_sum = sum(doubled_ranks)
    counts = [0] * (total_sum + 1)
    counts[0] = 1
    for rank in doubled_ranks:
        for value in range(total_sum, rank - 1, -1):
            counts[value] += counts[value - rank]
    n = len(doubled_ranks)
    if alternative == "greater":
        favorable = sum(counts[doubled_w:])
    else:
        favorable = sum(counts[: doubled_w + 1])
    return favorable / (2**n)


def _normal_tail_probability(
    ranks: list[float], w_plus: float, alternative: str
) -> float:
    """Normal approximation with continuity and tie corrections."""
    n = len(ranks)
    mean = n * (n + 1) / 4
    variance = n * (n + 1) * (2 * n + 1) / 24
    tie_sizes = Counter(ranks).values()
    variance -= sum(t**3 - t for t in tie_sizes) / 48
    sd = math.sqrt(variance)
    if sd == 0:
        return 1.0
    if alternative == "greater":
        z = (w_plus - mean - 0.5) / sd
        return math.erfc(z / math.sqrt(2)) / 2
    z = (w_plus - mean + 0.5) / sd
    return 1.0 - math.erfc(z / math.sqrt(2)) / 2


def wilcoxon_signed_rank(
    a: Sequence[float],
    b: Sequence[float],
    alternative: str = "greater",
    exact_limit: int = WILCOXON_EXACT_LIMIT,
) -> WilcoxonResult:
    """One-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; ties in absolute difference receive
    average ranks. Up to ``exact_limit`` effective pairs, the p-value is
    exact over the full set of 2^n sign assignments; beyond that a
    continuity-corrected normal approximation is used.

    Args:
        a, b: Paired measurements of equal length (at least 1).
        alternative: "greater" tests whether a exceeds b; "less" the
            reverse.

    Returns:
        The test result; all differences being zero yields the degenerate
        result with p = 1.
    """
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    if len(a) != len(b):
        raise MetricsError("paired samples must have equal lengths")
    if len(a) == 0:
        raise MetricsError("paired samples must be non-empty")
    differences = [x - y for x, y in zip(a, b) if x - y != 0]
    n = len(differences)
    if n == 0:
        return WilcoxonResult(
            n_effective=0,
            statistic_w=0.0,
            p_value=1.0,
            alternative=alternative,
            degenerate=True,
        )
    ranks = _average_ranks([abs(d) for d in differences])
    w_plus = sum(r for r, d in zip(ranks, differences) if d > 0)
    if n <= exact_limit:
        doubled = [round(2 * r) for r in ranks]
        p = _exact_tail_probability(doubled, round(2 * w_plus), alternative)
        method = "exact"
    else:
        p = _normal_tail_probability(ranks, w_plus, alternative)
        method = "normal"
    return WilcoxonResult(
        n_effective=n,
        statistic_w=w_plus,
        p_value=p,
        alternative=alternative,
        method=method,
    )
