"""Command-line front end: classify, evaluate, compare, crossval, taxonomy.

Every flag can also be supplied through a JSON config file (``--config``);
explicit flags win over config values. All outputs embed a digest of the
semantic run configuration, and runs against deterministic backends
(mock, replay) are byte-identical across repetitions and parallelism
settings.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import classify as classify_mod
from .classify import RunAborted, read_predictions, write_predictions
from .corpus import (
    Corpus,
    CorpusError,
    filter_with_code,
    load_corpus,
    stratified_kfold,
)
from .gateway import (
    GatewayError,
    HttpBackend,
    LlmGateway,
    MockBackend,
    ModelConfig,
    ReplayBackend,
    ResponseCache,
)
from .metrics import (
    MetricsError,
    baseline_majority,
    baseline_random,
    confusion,
    random_baseline_expectation,
    weighted_summary,
)
from .prompts import (
    DEFAULT_MAX_CODE_CHARS,
    ContextMode,
    PromptSpec,
    Strategy,
    load_prompt_templates,
)
from .reports import (
    build_evaluation_report,
    compare_runs,
    config_digest,
    mean_per_category_metrics,
    mean_weighted_metrics,
    per_fold_summaries,
    render_category_comparison_table,
    render_category_table,
    render_comparison_table,
    render_weighted_rows,
)
from .taxonomy import DefinitionStyle, TaxonomyError, load_taxonomy

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNPARSEABLE_THRESHOLD = 3

_ERRORS = (
    CorpusError,
    TaxonomyError,
    GatewayError,
    MetricsError,
    RunAborted,
    OSError,
    ValueError,
)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _resolve(args: argparse.Namespace, config: dict, key: str, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2)
    path.write_text(blob + "\n", encoding="utf-8")


def _load_mock_script(path: str) -> MockBackend:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    default = data.get("default")
    responses = data.get("responses")
    if isinstance(responses, dict):
        return MockBackend(script=responses, default=default)
    entries = []
    for entry in responses or []:
        needles = entry["match"]
        if isinstance(needles, str):
            needles = [needles]
        entries.append((tuple(needles), entry["response"]))
    return MockBackend(script=entries, default=default)


def _build_gateway(args: argparse.Namespace, config: dict) -> LlmGateway:
    backend_kind = _resolve(args, config, "backend", "http")
    cache_path = _resolve(args, config, "cache")
    cache = ResponseCache(cache_path) if cache_path else ResponseCache()
    if backend_kind == "mock":
        script = _resolve(args, config, "mock_script")
        if not script:
            raise ValueError("mock backend requires --mock-script")
        backend = _load_mock_script(script)
    elif backend_kind == "replay":
        if not cache_path:
            raise ValueError("replay backend requires --cache")
        backend = ReplayBackend(model_id=_resolve(args, config, "model", "mock"))
    elif backend_kind == "http":
        endpoint = _resolve(args, config, "endpoint")
        model = _resolve(args, config, "model")
        if not endpoint or not model:
            raise ValueError("http backend requires --endpoint and --model")
        backend = HttpBackend(
            ModelConfig(
                endpoint_url=endpoint,
                model_id=model,
                temperature=float(_resolve(args, config, "temperature", 0.0)),
                max_tokens=int(_resolve(args, config, "max_tokens", 64)),
                request_timeout=float(_resolve(args, config, "timeout", 60.0)),
                max_retries=int(_resolve(args, config, "max_retries", 3)),
            )
        )
    else:
        raise ValueError(f"unknown backend: {backend_kind}")
    max_in_flight = int(_resolve(args, config, "max_in_flight", 4))
    return LlmGateway(backend, cache=cache, max_in_flight=max_in_flight)


def _prompt_spec(args: argparse.Namespace, config: dict, strategy: str, context: str) -> PromptSpec:
    return PromptSpec(
        strategy=Strategy(strategy),
        context=ContextMode(context),
        definitions=DefinitionStyle(
            _resolve(args, config, "definition_style", "refined")
        ),
        max_code_chars=int(
            _resolve(args, config, "max_code_chars", DEFAULT_MAX_CODE_CHARS)
        ),
    )


def _run_classification(
    args: argparse.Namespace,
    config: dict,
    corpus,
    taxonomy,
    spec: PromptSpec,
    out_dir: Path,
) -> int:
    gateway = _build_gateway(args, config)
    template_path = _resolve(args, config, "template")
    templates = load_prompt_templates(template_path) if template_path else None
    seed = int(_resolve(args, config, "seed", 0))
    # The digest covers only what determines the outputs, so a replay of a
    # cached run (and any parallelism setting) hashes identically.
    digest = config_digest(
        {
            "command": "classify",
            "corpus": corpus.digest(),
            "taxonomy": taxonomy.digest(),
            "spec": spec.as_dict(),
            "model_id": gateway.model_id,
            "decoding": list(gateway.backend.decoding_params()),
            "seed": seed,
            "unparseable_as_false_positive": bool(
                _resolve(args, config, "unparseable_as_false_positive", False)
            ),
        }
    )
    parallelism = int(_resolve(args, config, "parallelism", 1))
    predictions, manifest = classify_mod.classify_corpus(
        corpus,
        taxonomy,
        spec,
        gateway,
        parallelism=parallelism,
        templates=templates,
        config_digest=digest,
    )
    write_predictions(out_dir / "predictions.jsonl", predictions, config_digest=digest)
    _write_json(out_dir / "manifest.json", manifest.as_dict())
    rate = manifest.unparseable_count / manifest.item_count if manifest.item_count else 0.0
    stats = gateway.cache_stats()
    print(
        f"classified {manifest.item_count} comments "
        f"({manifest.unparseable_count} unparseable, {rate:.1%}); "
        f"cache: {stats['entries']} entries, {stats['hits']} hits"
    )
    print(f"wrote {out_dir / 'predictions.jsonl'}")
    threshold = float(_resolve(args, config, "max_unparseable_rate", 1.0))
    if rate >= threshold and threshold < 1.0:
        print(
            f"error: unparseable rate {rate:.1%} is at or above the "
            f"threshold {threshold:.1%}",
            file=sys.stderr,
        )
        return EXIT_UNPARSEABLE_THRESHOLD
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    taxonomy = load_taxonomy(_resolve(args, config, "definitions"))
    corpus = load_corpus(_resolve(args, config, "corpus"), taxonomy)
    if _resolve(args, config, "filter_with_code", False):
        corpus = filter_with_code(corpus)
    out_dir = Path(_resolve(args, config, "out", "runs"))
    if _resolve(args, config, "grid", False):
        status = EXIT_OK
        for strategy in (Strategy.FLAT, Strategy.HIERARCHICAL):
            for context in (ContextMode.COMMENT_ONLY, ContextMode.CODE_AND_COMMENT):
                spec = _prompt_spec(args, config, strategy.value, context.value)
                sub_dir = out_dir / f"{strategy.value}_{context.value}"
                status = max(
                    status,
                    _run_classification(args, config, corpus, taxonomy, spec, sub_dir),
                )
        return status
    spec = _prompt_spec(
        args,
        config,
        _resolve(args, config, "strategy", "flat"),
        _resolve(args, config, "context", "code-and-comment"),
    )
    return _run_classification(args, config, corpus, taxonomy, spec, out_dir)


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    taxonomy = load_taxonomy(_resolve(args, config, "definitions"))
    corpus = load_corpus(_resolve(args, config, "corpus"), taxonomy)
    predictions = read_predictions(_resolve(args, config, "predictions"))
    weight_mode = _resolve(args, config, "weights", "evaluated")
    policy = bool(_resolve(args, config, "unparseable_as_false_positive", False))
    report = build_evaluation_report(
        corpus,
        predictions,
        taxonomy,
        weight_mode=weight_mode,
        unparseable_as_false_positive=policy,
    )
    with_baselines = bool(_resolve(args, config, "with_baselines", False))
    baseline_seed = int(_resolve(args, config, "baseline_seed", 0))
    digest = config_digest(
        {
            "command": "evaluate",
            "corpus": corpus.digest(),
            "taxonomy": taxonomy.digest(),
            "weights": weight_mode,
            "sort": _resolve(args, config, "sort", "rating"),
            "unparseable_as_false_positive": policy,
            "model_id": report.model_id,
            "with_baselines": with_baselines,
            "baseline_seed": baseline_seed if with_baselines else None,
        }
    )

    weighted_rows = [(report.model_id, report.weighted.as_dict())]
    if with_baselines:
        gold = [item.gold for item in corpus.items]
        random_counts = confusion(gold, baseline_random(corpus, baseline_seed))
        majority_counts = confusion(gold, baseline_majority(corpus))
        random_summary = weighted_summary(random_counts)
        majority_summary = weighted_summary(majority_counts)
        expectation = random_baseline_expectation(report.weighted.weights)
        weighted_rows.extend(
            [
                (f"baseline:random[seed={baseline_seed}]", random_summary.as_dict()),
                ("baseline:random[expected]", expectation),
                ("baseline:majority", majority_summary.as_dict()),
            ]
        )

    sort = _resolve(args, config, "sort", "rating")
    lines = [f"# config {digest[:12]}"]
    lines.append("")
    lines.append(render_weighted_rows(weighted_rows))
    if report.step1_group_accuracy is not None:
        lines.append("")
        lines.append(
            f"Step-1 group accuracy: {report.step1_group_accuracy * 100:.1f}"
        )
    lines.append("")
    lines.append(render_category_table(report, taxonomy, sort=sort))
    text = "\n".join(lines)
    print(text)

    out = _resolve(args, config, "out")
    if out:
        out_dir = Path(out)
        payload = report.as_dict()
        payload["config_digest"] = digest
        payload["baselines"] = {
            label: values for label, values in weighted_rows[1:]
        }
        _write_json(out_dir / "report.json", payload)
        _write_text(out_dir / "report.txt", text)
        print(f"wrote {out_dir / 'report.json'}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    taxonomy = load_taxonomy(_resolve(args, config, "definitions"))
    corpus = load_corpus(_resolve(args, config, "corpus"), taxonomy)
    label_map = None
    label_map_path = _resolve(args, config, "label_map")
    if label_map_path:
        label_map = json.loads(Path(label_map_path).read_text(encoding="utf-8"))
    ours = read_predictions(
        _resolve(args, config, "ours"), label_map=label_map, taxonomy=taxonomy
    )
    baseline = read_predictions(
        _resolve(args, config, "baseline"), label_map=label_map, taxonomy=taxonomy
    )
    k = int(_resolve(args, config, "k", 10))
    seed = int(_resolve(args, config, "seed", 0))
    stratified = not bool(_resolve(args, config, "plain_folds", False))
    policy = bool(_resolve(args, config, "unparseable_as_false_positive", False))
    alternative = _resolve(args, config, "alternative", "greater")
    folds = stratified_kfold(corpus, k, seed, stratified=stratified)
    comparisons = compare_runs(
        corpus,
        ours,
        baseline,
        folds,
        taxonomy,
        alternative=alternative,
        unparseable_as_false_positive=policy,
    )
    digest = config_digest(
        {
            "command": "compare",
            "corpus": corpus.digest(),
            "taxonomy": taxonomy.digest(),
            "k": k,
            "seed": seed,
            "stratified": stratified,
            "alternative": alternative,
            "unparseable_as_false_positive": policy,
        }
    )
    lines = [f"# config {digest[:12]}", ""]
    lines.append(render_comparison_table(comparisons))
    lines.append("")
    lines.append("Significance: *** p<0.001, ** p<0.01, * p<0.05, ° p>=0.05")
    lines.append(
        "Note: percent changes are computed on fold means; values rounded "
        "to one decimal may differ slightly from changes computed on "
        "rounded inputs."
    )
    if _resolve(args, config, "per_category", False):
        ours_folds = per_fold_summaries(corpus, ours, folds, taxonomy, policy)
        base_folds = per_fold_summaries(corpus, baseline, folds, taxonomy, policy)
        lines.append("")
        lines.append(
            render_category_comparison_table(
                mean_per_category_metrics(ours_folds),
                mean_per_category_metrics(base_folds),
                taxonomy,
            )
        )
    text = "\n".join(lines)
    print(text)

    out = _resolve(args, config, "out")
    if out:
        out_dir = Path(out)
        payload = {
            "config_digest": digest,
            "k": k,
            "seed": seed,
            "metrics": {
                name: {
                    "ours_mean": c.ours_mean,
                    "baseline_mean": c.baseline_mean,
                    "percent_change": c.percent_change,
                    "wilcoxon": {
                        "n_effective": c.test.n_effective,
                        "statistic_w": c.test.statistic_w,
                        "p_value": c.test.p_value,
                        "alternative": c.test.alternative,
                        "degenerate": c.test.degenerate,
                        "stars": c.test.stars,
                    },
                }
                for name, c in comparisons.items()
            },
        }
        _write_json(out_dir / "comparison.json", payload)
        _write_text(out_dir / "comparison.txt", text)
        print(f"wrote {out_dir / 'comparison.json'}")
    return EXIT_OK


def cmd_crossval(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    taxonomy = load_taxonomy(_resolve(args, config, "definitions"))
    corpus = load_corpus(_resolve(args, config, "corpus"), taxonomy)
    predictions = read_predictions(_resolve(args, config, "predictions"))
    k = int(_resolve(args, config, "k", 10))
    seed = int(_resolve(args, config, "seed", 0))
    stratified = not bool(_resolve(args, config, "plain_folds", False))
    policy = bool(_resolve(args, config, "unparseable_as_false_positive", False))
    folds = stratified_kfold(corpus, k, seed, stratified=stratified)
    reports = per_fold_summaries(corpus, predictions, folds, taxonomy, policy)
    means = mean_weighted_metrics(reports)
    digest = config_digest(
        {
            "command": "crossval",
            "corpus": corpus.digest(),
            "taxonomy": taxonomy.digest(),
            "k": k,
            "seed": seed,
            "stratified": stratified,
            "unparseable_as_false_positive": policy,
        }
    )
    rows = [
        (f"fold {i}", report.weighted.as_dict()) for i, report in enumerate(reports)
    ]
    rows.append(("mean", means))
    text = "\n".join([f"# config {digest[:12]}", "", render_weighted_rows(rows)])
    print(text)

    out = _resolve(args, config, "out")
    if out:
        out_dir = Path(out)
        payload = {
            "config_digest": digest,
            "k": k,
            "seed": seed,
            "stratified": stratified,
            "folds": [report.weighted.as_dict() for report in reports],
            "mean": means,
        }
        _write_json(out_dir / "crossval.json", payload)
        _write_text(out_dir / "crossval.txt", text)
        print(f"wrote {out_dir / 'crossval.json'}")
    return EXIT_OK


def cmd_taxonomy_show(args: argparse.Namespace) -> int:
    taxonomy = load_taxonomy(args.definitions)
    style = DefinitionStyle(args.style)
    widths = (14, 22, 6, 9)
    header = (
        f"{'Group':<{widths[0]}}{'Category':<{widths[1]}}"
        f"{'Rating':<{widths[2]}}  {'Frequency':<{widths[3]}}"
    )
    print(header)
    print("-" * len(header))
    for cdef in taxonomy.categories:
        rating = f"{cdef.usefulness_rating:.2f}" if cdef.usefulness_rating else "N/A"
        print(
            f"{cdef.group.display_name:<{widths[0]}}{cdef.display_name:<{widths[1]}}"
            f"{rating:<{widths[2]}}  {cdef.reference_frequency:<{widths[3]}}"
        )
    total = sum(c.reference_frequency for c in taxonomy.categories)
    print(f"\nTotal reference comments: {total}")
    if args.verbose:
        print()
        for cdef in taxonomy.categories:
            print(f"{cdef.display_name}: {cdef.definition(style)}")
            print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crevtax",
        description=(
            "Classify code review comments into a two-level taxonomy with "
            "prompted language models, and evaluate the results."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a corpus and write predictions")
    p.add_argument("--config", help="JSON config file (flags take precedence)")
    p.add_argument("--corpus", help="corpus JSONL file")
    p.add_argument("--definitions", help="definitions JSON file")
    p.add_argument("--filter-with-code", dest="filter_with_code", action="store_const", const=True, help="drop comments without code context first")
    p.add_argument("--strategy", choices=[s.value for s in Strategy])
    p.add_argument("--context", choices=[c.value for c in ContextMode])
    p.add_argument("--definition-style", dest="definition_style", choices=[d.value for d in DefinitionStyle])
    p.add_argument("--max-code-chars", dest="max_code_chars", type=int)
    p.add_argument("--template", help="prompt template override file")
    p.add_argument("--grid", action="store_const", const=True, help="run all 4 strategy x context combinations")
    p.add_argument("--backend", choices=["http", "mock", "replay"])
    p.add_argument("--mock-script", dest="mock_script", help="mock response script (JSON)")
    p.add_argument("--endpoint", help="chat-completions endpoint URL")
    p.add_argument("--model", help="model identifier")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", dest="max_tokens", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p.add_argument("--cache", help="persistent response cache file (JSONL)")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--max-unparseable-rate", dest="max_unparseable_rate", type=float)
    p.add_argument(
        "--unparseable-as-false-positive",
        dest="unparseable_as_false_positive",
        action="store_const",
        const=True,
    )
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score a predictions file against a corpus")
    p.add_argument("--config")
    p.add_argument("--predictions", help="predictions JSONL file")
    p.add_argument("--corpus")
    p.add_argument("--definitions")
    p.add_argument("--weights", choices=["evaluated", "reference"])
    p.add_argument("--sort", choices=["rating", "canonical"])
    p.add_argument("--with-baselines", dest="with_baselines", action="store_const", const=True)
    p.add_argument("--baseline-seed", dest="baseline_seed", type=int)
    p.add_argument(
        "--unparseable-as-false-positive",
        dest="unparseable_as_false_positive",
        action="store_const",
        const=True,
    )
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare two prediction sets across folds")
    p.add_argument("--config")
    p.add_argument("--ours", help="our predictions JSONL file")
    p.add_argument("--baseline", help="baseline predictions JSONL file")
    p.add_argument(
        "--label-map",
        dest="label_map",
        help="JSON file mapping external label names to canonical ones",
    )
    p.add_argument("--corpus")
    p.add_argument("--definitions")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--plain-folds", dest="plain_folds", action="store_const", const=True)
    p.add_argument("--alternative", choices=["greater", "less"])
    p.add_argument("--per-category", dest="per_category", action="store_const", const=True)
    p.add_argument(
        "--unparseable-as-false-positive",
        dest="unparseable_as_false_positive",
        action="store_const",
        const=True,
    )
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("crossval", help="per-fold evaluation of cached predictions")
    p.add_argument("--config")
    p.add_argument("--predictions")
    p.add_argument("--corpus")
    p.add_argument("--definitions")
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--plain-folds", dest="plain_folds", action="store_const", const=True)
    p.add_argument(
        "--unparseable-as-false-positive",
        dest="unparseable_as_false_positive",
        action="store_const",
        const=True,
    )
    p.add_argument("--out")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("taxonomy", help="inspect the taxonomy")
    tax_sub = p.add_subparsers(dest="taxonomy_command", required=True)
    show = tax_sub.add_parser("show", help="print categories, ratings, frequencies")
    show.add_argument("--definitions")
    show.add_argument("--style", choices=[d.value for d in DefinitionStyle], default="brief")
    show.add_argument("--verbose", action="store_true", help="print full definitions")
    show.set_defaults(func=cmd_taxonomy_show)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
