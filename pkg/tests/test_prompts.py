"""Prompt rendering: structure, context modes, truncation, overrides."""

import random
import re

import pytest

from crevtax import (
    ContextMode,
    DefinitionStyle,
    PromptSpec,
    ReviewComment,
    Strategy,
    load_prompt_templates,
    render_classification_prompt,
    truncate_code,
)
from crevtax.prompts import ELISION_MARKER
from crevtax.taxonomy import Category


def _comment(old_code="old_line()", new_code="new_line()"):
    return ReviewComment(
        id="c1",
        comment_text="Should this handle the empty case?",
        old_code=old_code,
        new_code=new_code,
        gold=Category.QUESTION,
    )


def _spec(context=ContextMode.CODE_AND_COMMENT, **kwargs):
    return PromptSpec(strategy=Strategy.FLAT, context=context, **kwargs)


class TestRenderClassificationPrompt:
    def test_all_option_lines_present_once(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        prompt = render_classification_prompt(_comment(), options, _spec())
        assert prompt.options == tuple(name for name, _ in options)
        for name, definition in options:
            pattern = re.compile(rf"^{re.escape(name)}: ", re.M)
            assert len(pattern.findall(prompt.user_text)) == 1
            assert definition in prompt.user_text

    def test_structure_order(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        prompt = render_classification_prompt(_comment(), options, _spec())
        text = prompt.user_text
        positions = [
            text.index("multiple choice"),
            text.index("Functional Defect: "),
            text.index("Review comment: Should this handle the empty case?"),
            text.index("Old code: old_line()"),
            text.index("New code: new_line()"),
            text.index("followed by the symbol $"),
        ]
        assert positions == sorted(positions)
        assert text.rstrip().endswith("Do not write anything else.")

    def test_comment_only_has_no_code_blocks(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        prompt = render_classification_prompt(
            _comment(), options, _spec(context=ContextMode.COMMENT_ONLY)
        )
        assert "Old code:" not in prompt.user_text
        assert "New code:" not in prompt.user_text

    def test_comment_only_differs_from_code_prompt_only_by_blocks(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        with_code = render_classification_prompt(_comment(), options, _spec())
        without = render_classification_prompt(
            _comment(), options, _spec(context=ContextMode.COMMENT_ONLY)
        )
        stripped = with_code.user_text.replace("\nOld code: old_line()", "").replace(
            "\nNew code: new_line()", ""
        )
        assert stripped == without.user_text

    def test_missing_code_sides_omitted_independently(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        no_old = render_classification_prompt(
            _comment(old_code=None), options, _spec()
        )
        assert "Old code:" not in no_old.user_text
        assert "New code: new_line()" in no_old.user_text
        no_new = render_classification_prompt(
            _comment(new_code=None), options, _spec()
        )
        assert "Old code: old_line()" in no_new.user_text
        assert "New code:" not in no_new.user_text

    def test_group_options_render_five_lines(self, taxonomy):
        options = taxonomy.group_options(DefinitionStyle.REFINED)
        prompt = render_classification_prompt(_comment(), options, _spec())
        assert len(prompt.options) == 5
        for name, _ in options:
            assert re.search(rf"^{re.escape(name)}: ", prompt.user_text, re.M)

    def test_rendering_is_deterministic(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.REFINED)
        first = render_classification_prompt(_comment(), options, _spec())
        second = render_classification_prompt(_comment(), options, _spec())
        assert first == second

    def test_empty_options_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            render_classification_prompt(_comment(), [], _spec())

    def test_duplicate_option_names_rejected(self):
        options = [("Praise", "a"), ("Praise", "b")]
        with pytest.raises(ValueError, match="distinct"):
            render_classification_prompt(_comment(), options, _spec())

    def test_stop_token(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        prompt = render_classification_prompt(_comment(), options, _spec())
        assert prompt.stop_token == "$"

    def test_code_truncated_to_budget(self, taxonomy):
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        long_code = "\n".join(f"line_{i} = {i}" for i in range(2000))
        comment = _comment(new_code=long_code)
        prompt = render_classification_prompt(
            comment, options, _spec(max_code_chars=500)
        )
        new_block = prompt.user_text.split("New code: ", 1)[1]
        new_code_text = new_block.split("\n\nAnswer", 1)[0]
        assert len(new_code_text) <= 500 + len(ELISION_MARKER)


class TestTruncateCode:
    def test_within_budget_unchanged(self):
        assert truncate_code("x" * 100, 4000) == "x" * 100

    def test_over_budget_bounded(self):
        code = "\n".join(f"line_{i:06d}" for i in range(1000))
        assert len(code) > 10000
        result = truncate_code(code, 4000)
        assert len(result) <= 4000 + len(ELISION_MARKER)
        assert ELISION_MARKER in result
        assert result.startswith("line_000000")
        assert result.endswith("line_000999")

    def test_empty_code(self):
        assert truncate_code("", 10) == ""

    def test_avoids_splitting_lines(self):
        code = "\n".join("abcdefghij" for _ in range(100))
        result = truncate_code(code, 95)
        head, tail = result.split(ELISION_MARKER)
        assert all(len(line) == 10 for line in head.splitlines() if line)
        assert all(len(line) == 10 for line in tail.splitlines() if line)

    def test_single_long_line_hard_cut(self):
        code = "x" * 1000
        result = truncate_code(code, 100)
        assert len(result) <= 100 + len(ELISION_MARKER)

    def test_randomized_budget_bound(self):
        rng = random.Random(99)
        for _ in range(200):
            length = rng.randint(0, 500)
            budget = rng.randint(1, 300)
            code = "".join(
                rng.choice("abc\n") for _ in range(length)
            )
            result = truncate_code(code, budget)
            if len(code) <= budget:
                assert result == code
            else:
                assert len(result) <= budget + len(ELISION_MARKER)

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            truncate_code("abc", 0)


class TestTemplateOverride:
    def test_plain_file_replaces_user_template(self, tmp_path, taxonomy):
        path = tmp_path / "template.txt"
        path.write_text(
            "Pick one:\n{options}\nComment: {comment}{old_code}{new_code}\n"
            "Reply with the name then $.",
            encoding="utf-8",
        )
        templates = load_prompt_templates(path)
        options = taxonomy.category_options(DefinitionStyle.BRIEF)
        prompt = render_classification_prompt(
            _comment(), options, _spec(), templates
        )
        assert prompt.user_text.startswith("Pick one:")
        assert "Reply with the name then $." in prompt.user_text

    def test_sectioned_file_overrides_system(self, tmp_path):
        path = tmp_path / "template.txt"
        path.write_text(
            "[system]\nCustom system role.\n[user]\n{options}\n{comment}"
            "{old_code}{new_code}\nAnswer then $.",
            encoding="utf-8",
        )
        templates = load_prompt_templates(path)
        assert templates.system == "Custom system role."
        assert templates.user.startswith("{options}")


def test_prompt_spec_requires_positive_budget():
    with pytest.raises(ValueError):
        PromptSpec(
            strategy=Strategy.FLAT,
            context=ContextMode.COMMENT_ONLY,
            max_code_chars=0,
        )
