"""Classification orchestration and response standardization.

Flat classification issues one completion over all 17 categories.
Hierarchical classification first picks one of the 5 groups, then one of
the chosen group's categories; groups with a single category skip the
second call since a one-option choice is degenerate. Raw responses are
standardized into predictions by :func:`parse_response`; anything that
cannot be standardized to exactly one offered option becomes Unparseable
and is scored as incorrect.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

from .corpus import Corpus, ReviewComment
from .gateway import GatewayError, LlmGateway
from .prompts import (
    PromptSpec,
    PromptTemplates,
    Strategy,
    render_classification_prompt,
)
from .taxonomy import Category, Group, Taxonomy, load_taxonomy

#: Characters stripped from both ends of a response before matching.
_WRAPPING_CHARS = " \t\r\n\"'`.,:;!?*_()[]{}<>|~\\/="

DEFAULT_MAX_CONSECUTIVE_FAILURES = 5


class UnparseableReason(str, Enum):
    NO_MATCH = "NoMatch"
    AMBIGUOUS = "Ambiguous"
    EMPTY = "Empty"


@dataclass(frozen=True)
class Matched:
    """The response standardized to exactly one offered option."""

    name: str


@dataclass(frozen=True)
class Unparseable:
    """The response could not be standardized to one offered option."""

    raw: str
    reason: UnparseableReason


ParseOutcome = Matched | Unparseable


class ClassificationError(Exception):
    """A gateway failure, annotated with the comment it happened on."""

    def __init__(self, comment_id: str, cause: Exception):
        super().__init__(f"comment {comment_id}: {cause}")
        self.comment_id = comment_id
        self.cause = cause


class RunAborted(Exception):
    """A corpus run could not produce a prediction for every item."""

    def __init__(self, message: str, failed_ids: tuple[str, ...]):
        super().__init__(message)
        self.failed_ids = failed_ids


@dataclass(frozen=True)
class Prediction:
    """The standardized outcome of classifying one comment.

    ``category`` is None exactly when the outcome is Unparseable. For
    hierarchical runs, ``step1_group`` records the group matched in the
    first step (also for predictions that later failed at step two); flat
    predictions never carry it.
    """

    comment_id: str
    category: Category | None
    step1_group: Group | None
    raw_responses: tuple[str, ...]
    model_id: str
    spec: PromptSpec | None = None
    unparseable_reason: UnparseableReason | None = None

    @property
    def is_classified(self) -> bool:
        return self.category is not None

    def as_dict(self) -> dict[str, object]:
        return {
            "comment_id": self.comment_id,
            "outcome": "classified" if self.is_classified else "unparseable",
            "category": self.category.value if self.category else None,
            "step1_group": self.step1_group.value if self.step1_group else None,
            "raw_responses": list(self.raw_responses),
            "model_id": self.model_id,
            "spec": self.spec.as_dict() if self.spec else None,
            "reason": self.unparseable_reason.value if self.unparseable_reason else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Prediction":
        return cls(
            comment_id=str(data["comment_id"]),
            category=Category(data["category"]) if data.get("category") else None,
            step1_group=Group(data["step1_group"]) if data.get("step1_group") else None,
            raw_responses=tuple(data.get("raw_responses", ())),
            model_id=str(data.get("model_id", "")),
            spec=PromptSpec.from_dict(data["spec"]) if data.get("spec") else None,
            unparseable_reason=(
                UnparseableReason(data["reason"]) if data.get("reason") else None
            ),
        )


@dataclass(frozen=True)
class RunManifest:
    """Provenance of one corpus classification run."""

    corpus_digest: str
    taxonomy_digest: str
    spec: PromptSpec
    model_id: str
    item_count: int
    unparseable_count: int
    started: str | None = None
    finished: str | None = None
    config_digest: str | None = None

    def as_dict(self) -> dict[str, object]:
        return {
            "corpus_digest": self.corpus_digest,
            "taxonomy_digest": self.taxonomy_digest,
            "spec": self.spec.as_dict(),
            "model_id": self.model_id,
            "item_count": self.item_count,
            "unparseable_count": self.unparseable_count,
            "started": self.started,
            "finished": self.finished,
            "config_digest": self.config_digest,
        }


def parse_response(raw: str, options: Sequence[str]) -> ParseOutcome:
    """Standardize a raw model response against the offered option names.

    The text up to (excluding) the first ``$`` is considered, the whole
    text when no ``$`` is present. After stripping wrapping whitespace and
    punctuation, a case-insensitive exact match wins; failing that, a
    response containing exactly one option name as a whole-word substring
    matches that option. Zero hits, two or more distinct hits, and empty
    responses are Unparseable. Total: never raises for any response text.
    """
    if not options:
        raise ValueError("options must be non-empty")
    if len(set(options)) != len(options):
        raise ValueError("options must be distinct")
    dollar = raw.find("$")
    text = raw if dollar < 0 else raw[:dollar]
    text = text.strip(_WRAPPING_CHARS)
    if not text:
        return Unparseable(raw=raw, reason=UnparseableReason.EMPTY)
    collapsed = " ".join(text.split()).lower()
    for name in options:
        if collapsed == name.lower():
            return Matched(name=name)
    hits = [
        name
        for name in options
        if re.search(rf"\b{re.escape(name)}\b", text, re.IGNORECASE)
    ]
    if len(hits) == 1:
        return Matched(name=hits[0])
    if len(hits) >= 2:
        return Unparseable(raw=raw, reason=UnparseableReason.AMBIGUOUS)
    return Unparseable(raw=raw, reason=UnparseableReason.NO_MATCH)


def classify_flat(
    comment: ReviewComment,
    taxonomy: Taxonomy,
    spec: PromptSpec,
    gateway: LlmGateway,
    templates: PromptTemplates | None = None,
) -> Prediction:
    """Single-step classification over all 17 categories."""
    if spec.strategy is not Strategy.FLAT:
        raise ValueError("classify_flat requires a flat prompt spec")
    options = taxonomy.category_options(spec.definitions)
    prompt = render_classification_prompt(comment, options, spec, templates)
    try:
        raw = gateway.complete(prompt.system_text, prompt.user_text)
    except GatewayError as exc:
        raise ClassificationError(comment.id, exc) from exc
    outcome = parse_response(raw, prompt.options)
    if isinstance(outcome, Matched):
        category = taxonomy.resolve_category_label(outcome.name)
        return Prediction(
            comment_id=comment.id,
            category=category,
            step1_group=None,
            raw_responses=(raw,),
            model_id=gateway.model_id,
            spec=spec,
        )
    return Prediction(
        comment_id=comment.id,
        category=None,
        step1_group=None,
        raw_responses=(raw,),
        model_id=gateway.model_id,
        spec=spec,
        unparseable_reason=outcome.reason,
    )


def classify_hierarchical(
    comment: ReviewComment,
    taxonomy: Taxonomy,
    spec: PromptSpec,
    gateway: LlmGateway,
    templates: PromptTemplates | None = None,
) -> Prediction:
    """Two-step classification: group first, then category within it.

    An unparseable first step ends the attempt. A matched group with a
    single category is resolved immediately without a second completion.
    """
    if spec.strategy is not Strategy.HIERARCHICAL:
        raise ValueError("classify_hierarchical requires a hierarchical prompt spec")
    group_opts = taxonomy.group_options(spec.definitions)
    prompt = render_classification_prompt(comment, group_opts, spec, templates)
    try:
        raw_step1 = gateway.complete(prompt.system_text, prompt.user_text)
    except GatewayError as exc:
        raise ClassificationError(comment.id, exc) from exc
    outcome = parse_response(raw_step1, prompt.options)
    if isinstance(outcome, Unparseable):
        return Prediction(
            comment_id=comment.id,
            category=None,
            step1_group=None,
            raw_responses=(raw_step1,),
            model_id=gateway.model_id,
            spec=spec,
            unparseable_reason=outcome.reason,
        )
    group = taxonomy.resolve_group_label(outcome.name)
    children = taxonomy.children_of(group)
    if len(children) == 1:
        return Prediction(
            comment_id=comment.id,
            category=children[0].id,
            step1_group=group,
            raw_responses=(raw_step1,),
            model_id=gateway.model_id,
            spec=spec,
        )
    child_opts = [(c.display_name, c.definition(spec.definitions)) for c in children]
    step2_prompt = render_classification_prompt(comment, child_opts, spec, templates)
    try:
        raw_step2 = gateway.complete(step2_prompt.system_text, step2_prompt.user_text)
    except GatewayError as exc:
        raise ClassificationError(comment.id, exc) from exc
    outcome2 = parse_response(raw_step2, step2_prompt.options)
    if isinstance(outcome2, Matched):
        return Prediction(
            comment_id=comment.id,
            category=taxonomy.resolve_category_label(outcome2.name),
            step1_group=group,
            raw_responses=(raw_step1, raw_step2),
            model_id=gateway.model_id,
            spec=spec,
        )
    return Prediction(
        comment_id=comment.id,
        category=None,
        step1_group=group,
        raw_responses=(raw_step1, raw_step2),
        model_id=gateway.model_id,
        spec=spec,
        unparseable_reason=outcome2.reason,
    )


def classify_comment(
    comment: ReviewComment,
    taxonomy: Taxonomy,
    spec: PromptSpec,
    gateway: LlmGateway,
    templates: PromptTemplates | None = None,
) -> Prediction:
    """Dispatch to the strategy named by the spec."""
    if spec.strategy is Strategy.FLAT:
        return classify_flat(comment, taxonomy, spec, gateway, templates)
    return classify_hierarchical(comment, taxonomy, spec, gateway, templates)


def classify_corpus(
    corpus: Corpus,
    taxonomy: Taxonomy,
    spec: PromptSpec,
    gateway: LlmGateway,
    parallelism: int = 1,
    templates: PromptTemplates | None = None,
    max_consecutive_failures: int = DEFAULT_MAX_CONSECUTIVE_FAILURES,
    config_digest: str | None = None,
) -> tuple[list[Prediction], RunManifest]:
    """Classify every corpus item, preserving corpus order in the output.

    Items fan out to a bounded worker pool; results are collected in corpus
    order, so the prediction list is identical regardless of parallelism.
    A failure on an item counts toward a consecutive-failure budget that a
    success resets; once the budget is hit, remaining work is abandoned.
    Isolated failures let the run continue (the cache keeps completed work,
    so a rerun only repeats the failed items), but any failure still makes
    the whole run raise, since every item must yield a prediction.

    Raises:
        RunAborted: When any item ultimately failed.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    started = None if gateway.deterministic else time.strftime("%Y-%m-%dT%H:%M:%S%z")
    predictions: list[Prediction | None] = [None] * len(corpus)
    failures: list[tuple[str, Exception]] = []
    consecutive = 0

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [
            pool.submit(classify_comment, item, taxonomy, spec, gateway, templates)
            for item in corpus.items
        ]
        for index, future in enumerate(futures):
            try:
                predictions[index] = future.result()
                consecutive = 0
            except ClassificationError as exc:
                failures.append((exc.comment_id, exc))
                consecutive += 1
                if consecutive >= max_consecutive_failures:
                    for pending in futures[index + 1 :]:
                        pending.cancel()
                    raise RunAborted(
                        f"aborted after {consecutive} consecutive failures "
                        f"(last: {exc})",
                        failed_ids=tuple(cid for cid, _ in failures),
                    ) from exc

    if failures:
        failed_ids = tuple(cid for cid, _ in failures)
        raise RunAborted(
            f"{len(failures)} items failed (first: {failures[0][1]}); "
            "rerun to retry just those items from the cache",
            failed_ids=failed_ids,
        )

    done: list[Prediction] = [p for p in predictions if p is not None]
    finished = None if gateway.deterministic else time.strftime("%Y-%m-%dT%H:%M:%S%z")
    manifest = RunManifest(
        corpus_digest=corpus.digest(),
        taxonomy_digest=taxonomy.digest(),
        spec=spec,
        model_id=gateway.model_id,
        item_count=len(done),
        unparseable_count=sum(1 for p in done if not p.is_classified),
        started=started,
        finished=finished,
        config_digest=config_digest,
    )
    return done, manifest


def write_predictions(
    path: str | Path,
    predictions: Sequence[Prediction],
    config_digest: str | None = None,
) -> None:
    """Write predictions as JSON Lines, preceded by a header record."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        header = {"kind": "predictions", "version": 1, "config_digest": config_digest}
        handle.write(json.dumps(header, sort_keys=True))
        handle.write("\n")
        for prediction in predictions:
            handle.write(json.dumps(prediction.as_dict(), sort_keys=True, ensure_ascii=False))
            handle.write("\n")


def read_predictions(
    path: str | Path,
    label_map: dict[str, str] | None = None,
    taxonomy: Taxonomy | None = None,
) -> list[Prediction]:
    """Read a predictions file written by :func:`write_predictions`.

    Imported files from external classifiers may spell labels differently;
    categories and groups are resolved through the taxonomy's aliases, and
    ``label_map`` supplies extra external-name to canonical-name mappings
    applied first.

    Raises:
        ValueError: When a record's category cannot be resolved.
    """
    path = Path(path)
    label_map = {k.lower(): v for k, v in (label_map or {}).items()}
    predictions: list[Prediction] = []
    resolver: Taxonomy | None = taxonomy

    def resolve_category(raw: str, lineno: int) -> Category:
        nonlocal resolver
        raw = label_map.get(raw.lower(), raw)
        try:
            return Category(raw)
        except ValueError:
            pass
        if resolver is None:
            resolver = load_taxonomy()
        category = resolver.resolve_category_label(raw)
        if category is None:
            raise ValueError(f"{path}:{lineno}: unknown category label: {raw!r}")
        return category

    def resolve_group(raw: str, lineno: int) -> Group:
        nonlocal resolver
        raw = label_map.get(raw.lower(), raw)
        try:
            return Group(raw)
        except ValueError:
            pass
        if resolver is None:
            resolver = load_taxonomy()
        group = resolver.resolve_group_label(raw)
        if group is None:
            raise ValueError(f"{path}:{lineno}: unknown group label: {raw!r}")
        return group

    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            data = json.loads(line)
            if lineno == 1 and data.get("kind") == "predictions":
                continue
            if data.get("category"):
                data = {**data, "category": resolve_category(str(data["category"]), lineno).value}
            if data.get("step1_group"):
                data = {**data, "step1_group": resolve_group(str(data["step1_group"]), lineno).value}
            predictions.append(Prediction.from_dict(data))
    return predictions
