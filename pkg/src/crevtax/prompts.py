"""Rendering of system/user prompt pairs for comment classification.

One canonical, versioned template implements every structural element the
classification prompt needs: a system role assignment, a multiple-choice
task instruction, the option list as ``{name}: {definition}`` lines, the
review comment, optional old/new code blocks, and the answer-format
instruction that terminates responses with ``$``. The user template can be
overridden from a plain-text file with the placeholders ``{options}``,
``{comment}``, ``{old_code}``, and ``{new_code}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import ReviewComment
from .taxonomy import DefinitionStyle

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = "1"

STOP_TOKEN = "$"

#: Per-side (old/new) character budget for code context. Keeps the full
#: prompt under a typical 8k-token context for small models.
DEFAULT_MAX_CODE_CHARS = 6000

ELISION_MARKER = "\n... [code truncated] ...\n"

DEFAULT_SYSTEM_TEXT = (
    "You are an experienced software developer who takes part in code "
    "reviews. Your task is to classify a code review comment into exactly "
    "one of the categories provided by the user."
)

DEFAULT_USER_TEMPLATE = """\
This is a multiple choice question. Read the review comment below and select \
the single option that best describes it.

The options are:
{options}

Review comment: {comment}{old_code}{new_code}

Answer with the name of the chosen option exactly as it is written above, \
followed by the symbol $. Do not write anything else.\
"""


class Strategy(str, Enum):
    """Classification strategy: one step over all categories, or two steps."""

    FLAT = "flat"
    HIERARCHICAL = "hierarchical"


class ContextMode(str, Enum):
    """Whether prompts carry the code change alongside the comment."""

    COMMENT_ONLY = "comment-only"
    CODE_AND_COMMENT = "code-and-comment"


@dataclass(frozen=True)
class PromptSpec:
    """Full prompt configuration for one classification run."""

    strategy: Strategy
    context: ContextMode
    definitions: DefinitionStyle = DefinitionStyle.REFINED
    max_code_chars: int = DEFAULT_MAX_CODE_CHARS

    def __post_init__(self) -> None:
        if self.max_code_chars <= 0:
            raise ValueError("max_code_chars must be positive")

    def as_dict(self) -> dict[str, object]:
        return {
            "strategy": self.strategy.value,
            "context": self.context.value,
            "definitions": self.definitions.value,
            "max_code_chars": self.max_code_chars,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PromptSpec":
        return cls(
            strategy=Strategy(data["strategy"]),
            context=ContextMode(data["context"]),
            definitions=DefinitionStyle(data["definitions"]),
            max_code_chars=int(data.get("max_code_chars", DEFAULT_MAX_CODE_CHARS)),
        )


@dataclass(frozen=True)
class PromptTemplates:
    """System text plus user template used for rendering."""

    system: str = DEFAULT_SYSTEM_TEXT
    user: str = DEFAULT_USER_TEMPLATE


@dataclass(frozen=True)
class RenderedPrompt:
    """A ready-to-send prompt pair with its offered options."""

    system_text: str
    user_text: str
    options: tuple[str, ...]
    stop_token: str = STOP_TOKEN


def load_prompt_templates(path: str | Path) -> PromptTemplates:
    """Read a template override file.

    The file may contain ``[system]`` and ``[user]`` section headers on
    their own lines; without headers, the whole file replaces the user
    template and the default system text is kept.
    """
    text = Path(path).read_text(encoding="utf-8")
    if "[system]" not in text and "[user]" not in text:
        return PromptTemplates(user=text.strip("\n"))
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        marker = line.strip().lower()
        if marker in ("[system]", "[user]"):
            current = marker[1:-1]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    system = "\n".join(sections.get("system", [])).strip("\n") or DEFAULT_SYSTEM_TEXT
    user = "\n".join(sections.get("user", [])).strip("\n") or DEFAULT_USER_TEMPLATE
    return PromptTemplates(system=system, user=user)


def truncate_code(code: str, budget: int) -> str:
    """Shorten code to roughly ``budget`` characters, keeping head and tail.

    Code within the budget is returned unchanged; otherwise the first and
    last half-budget slices are joined by an elision marker, trimmed to
    whole lines when a line break falls inside the slice.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if len(code) <= budget:
        return code
    half = budget // 2
    head = code[:half]
    cut = head.rfind("\n")
    if cut > 0:
        head = head[:cut]
    tail = code[len(code) - half :]
    cut = tail.find("\n")
    if 0 <= cut < len(tail) - 1:
        tail = tail[cut + 1 :]
    return head + ELISION_MARKER + tail


def render_classification_prompt(
    comment: ReviewComment,
    options: list[tuple[str, str]],
    spec: PromptSpec,
    templates: PromptTemplates | None = None,
) -> RenderedPrompt:
    """Render the prompt pair offering the given options for one comment.

    Args:
        comment: The review comment (and optional code context) to classify.
        options: Ordered (name, definition) pairs; names must be distinct.
        spec: Strategy/context/definition configuration. Code blocks are
            included only in code-and-comment mode, and only for the sides
            that are actually present.
        templates: Optional template override.

    Returns:
        The rendered prompt; ``options`` lists the offered names in order,
        so responses can be parsed without re-reading the prompt text.
    """
    if not options:
        raise ValueError("options must be non-empty")
    names = [name for name, _ in options]
    if len(set(names)) != len(names):
        raise ValueError("option names must be distinct")
    templates = templates or PromptTemplates()

    option_lines = "\n".join(f"{name}: {definition}" for name, definition in options)

    old_block = ""
    new_block = ""
    if spec.context is ContextMode.CODE_AND_COMMENT:
        if comment.old_code is not None and comment.old_code.strip():
            old_block = "\nOld code: " + truncate_code(
                comment.old_code, spec.max_code_chars
            )
        if comment.new_code is not None and comment.new_code.strip():
            new_block = "\nNew code: " + truncate_code(
                comment.new_code, spec.max_code_chars
            )
        if not old_block and not new_block:
            logger.debug(
                "comment %s has no code context; rendering comment only",
                comment.id,
            )

    user_text = templates.user.format(
        options=option_lines,
        comment=comment.comment_text,
        old_code=old_block,
        new_code=new_block,
    )
    return RenderedPrompt(
        system_text=templates.system,
        user_text=user_text,
        options=tuple(names),
    )
