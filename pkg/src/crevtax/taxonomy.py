"""Two-level taxonomy of code review comment types.

Five high-level groups partition 17 fine-grained categories. Every category
carries a brief definition, an optional refined (elaborated) definition, a
practitioner usefulness rating, and the number of comments of that type in
the reference corpus the taxonomy was derived from.

The built-in taxonomy works with no external file; refined definitions are
loaded from the bundled ``data/definitions.json`` and can be replaced with a
custom definitions file (see :func:`load_taxonomy`).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

logger = logging.getLogger(__name__)

#: Size of the reference corpus that the per-category frequencies describe.
REFERENCE_TOTAL = 1828


class TaxonomyError(Exception):
    """Raised when a definitions source violates the taxonomy structure."""


class Group(str, Enum):
    """High-level group of review comment categories."""

    FUNCTIONAL = "Functional"
    REFACTORING = "Refactoring"
    DOCUMENTATION = "Documentation"
    DISCUSSION = "Discussion"
    FALSE_POSITIVE = "FalsePositive"

    @property
    def display_name(self) -> str:
        return _GROUP_DISPLAY[self]


class Category(str, Enum):
    """Fine-grained review comment category (canonical order preserved)."""

    FUNCTIONAL_DEFECT = "FunctionalDefect"
    LOGICAL = "Logical"
    VALIDATION = "Validation"
    RESOURCE = "Resource"
    TIMING = "Timing"
    SUPPORT_ISSUES = "SupportIssues"
    INTERFACE = "Interface"
    SOLUTION_APPROACH = "SolutionApproach"
    CODE_ORGANIZATION = "CodeOrganization"
    ALTERNATE_OUTPUT = "AlternateOutput"
    NAMING_CONVENTION = "NamingConvention"
    VISUAL_REPRESENTATION = "VisualRepresentation"
    DOCUMENTATION = "Documentation"
    QUESTION = "Question"
    DESIGN_DISCUSSION = "DesignDiscussion"
    PRAISE = "Praise"
    FALSE_POSITIVE = "FalsePositive"


class DefinitionStyle(str, Enum):
    """Which definition text to use when rendering option lists."""

    BRIEF = "brief"
    REFINED = "refined"


_GROUP_DISPLAY: dict[Group, str] = {
    Group.FUNCTIONAL: "Functional",
    Group.REFACTORING: "Refactoring",
    Group.DOCUMENTATION: "Documentation",
    Group.DISCUSSION: "Discussion",
    Group.FALSE_POSITIVE: "False Positive",
}

# Canonical category table: (category, group, display name, brief definition,
# usefulness rating, reference frequency). Order is the canonical taxonomy
# order used everywhere (option lists, reports, tie-breaking).
_CATEGORY_TABLE: tuple[tuple[Category, Group, str, str, float | None, int], ...] = (
    (
        Category.FUNCTIONAL_DEFECT,
        Group.FUNCTIONAL,
        "Functional Defect",
        "Functionality is missing or implemented incorrectly and such defects "
        "often require additional code or larger modifications to the existing "
        "solution.",
        4.38,
        12,
    ),
    (
        Category.LOGICAL,
        Group.FUNCTIONAL,
        "Logical",
        "Control flow, comparison related, and logical errors.",
        4.11,
        56,
    ),
    (
        Category.VALIDATION,
        Group.FUNCTIONAL,
        "Validation",
        "Validation mistakes or mistakes made when detecting an invalid value "
        "are of this class. Any kind of user data sanitization-related "
        "comments are in this category, too.",
        4.16,
        90,
    ),
    (
        Category.RESOURCE,
        Group.FUNCTIONAL,
        "Resource",
        "Resource (variables, memory, files, database) initialization, "
        "manipulation, and release.",
        3.83,
        34,
    ),
    (
        Category.TIMING,
        Group.FUNCTIONAL,
        "Timing",
        "Potential issues due to incorrect thread synchronization.",
        3.5,
        4,
    ),
    (
        Category.SUPPORT_ISSUES,
        Group.FUNCTIONAL,
        "Support Issues",
        "Issues related to support systems and libraries or their "
        "configurations.",
        3.51,
        14,
    ),
    (
        Category.INTERFACE,
        Group.FUNCTIONAL,
        "Interface",
        "Mistakes when interacting with other parts of the software such as "
        "existing code library, hardware device, database, or operating "
        "system.",
        4.10,
        30,
    ),
    (
        Category.SOLUTION_APPROACH,
        Group.REFACTORING,
        "Solution Approach",
        "Suggestions to adopt an alternate algorithm or data structure.",
        4.00,
        201,
    ),
    (
        Category.CODE_ORGANIZATION,
        Group.REFACTORING,
        "Code Organization",
        "Refactoring suggestions such as those included in Martin Fowler's "
        "catalog.",
        3.68,
        184,
    ),
    (
        Category.ALTERNATE_OUTPUT,
        Group.REFACTORING,
        "Alternate Output",
        "Comments that suggest modifying the error message, toast message, "
        "alert, or change what is returned by a function.",
        3.63,
        64,
    ),
    (
        Category.NAMING_CONVENTION,
        Group.REFACTORING,
        "Naming Convention",
        "Violations of identifier naming conventions.",
        3.43,
        76,
    ),
    (
        Category.VISUAL_REPRESENTATION,
        Group.REFACTORING,
        "Visual Representation",
        "Whitespace, blank lines, code rearrangements, and indentation-related "
        "comments.",
        2.92,
        73,
    ),
    (
        Category.DOCUMENTATION,
        Group.DOCUMENTATION,
        "Documentation",
        "Suggestions to add/modify comments or documentation to aid code "
        "comprehension.",
        3.73,
        387,
    ),
    (
        Category.QUESTION,
        Group.DISCUSSION,
        "Question",
        "Questions to understand the design or implementation choices.",
        3.99,
        275,
    ),
    (
        Category.DESIGN_DISCUSSION,
        Group.DISCUSSION,
        "Design Discussion",
        "Discussions on design direction, design pattern, and software "
        "architecture.",
        3.87,
        87,
    ),
    (
        Category.PRAISE,
        Group.DISCUSSION,
        "Praise",
        "Complement for a code.",
        3.03,
        83,
    ),
    (
        Category.FALSE_POSITIVE,
        Group.FALSE_POSITIVE,
        "False Positive",
        "If a review comment raises an invalid bug or concern.",
        None,
        158,
    ),
)

CANONICAL_GROUP_ORDER: tuple[Group, ...] = (
    Group.FUNCTIONAL,
    Group.REFACTORING,
    Group.DOCUMENTATION,
    Group.DISCUSSION,
    Group.FALSE_POSITIVE,
)

_CANONICAL_GROUP_OF: dict[Category, Group] = {
    row[0]: row[1] for row in _CATEGORY_TABLE
}

# Built-in group summaries (each summarizes its child category definitions).
_GROUP_SUMMARIES: dict[Group, str] = {
    Group.FUNCTIONAL: (
        "Issues affecting whether the code works correctly: missing or "
        "incorrectly implemented functionality, control-flow and logic "
        "errors, missing or wrong checks of invalid values, mistakes in "
        "initializing, manipulating, or releasing resources, thread "
        "synchronization problems, issues with supporting systems or library "
        "configuration, and mistakes when interacting with other parts of "
        "the software such as libraries, databases, hardware, or the "
        "operating system."
    ),
    Group.REFACTORING: (
        "Suggestions to restructure or improve existing code without "
        "changing what it accomplishes: adopting an alternate algorithm or "
        "data structure, reorganizing the structure of the code, changing "
        "error messages or what a function returns, fixing identifier "
        "naming convention violations, and whitespace, blank line, "
        "indentation, or other layout issues."
    ),
    Group.DOCUMENTATION: (
        "Suggestions to add or modify code comments or documentation to aid "
        "code comprehension."
    ),
    Group.DISCUSSION: (
        "Comments that discuss the change rather than directly request a "
        "fix: questions to understand design or implementation choices, "
        "discussions of design direction or architecture, and compliments "
        "for the code."
    ),
    Group.FALSE_POSITIVE: (
        "Review comments that raise an invalid bug or concern."
    ),
}

# Accepted label aliases beyond the canonical display name and identifier
# (normalized: lowercase, separators collapsed to single spaces).
_EXTRA_CATEGORY_ALIASES: dict[Category, tuple[str, ...]] = {
    Category.FUNCTIONAL_DEFECT: ("functional defects",),
    Category.SUPPORT_ISSUES: ("support",),
    Category.CODE_ORGANIZATION: ("organization of code",),
}

_EXTRA_GROUP_ALIASES: dict[Group, tuple[str, ...]] = {
    Group.DISCUSSION: ("discuss",),
}


def _normalize_label(text: str) -> str:
    cleaned = text.replace("-", " ").replace("_", " ")
    return " ".join(cleaned.split()).lower()


@dataclass(frozen=True)
class CategoryDef:
    """One category of the taxonomy with its definitions and reference data.

    Attributes:
        id: Category identifier.
        group: High-level group the category belongs to.
        display_name: Name rendered in prompts and reports.
        brief_definition: Short, one-to-two sentence definition.
        refined_definition: Elaborated definition with examples, or None
            when no refined text was loaded.
        usefulness_rating: Practitioner rating in [1, 5]; None only for the
            false-positive category, which was not rated.
        reference_frequency: Number of comments of this category in the
            reference corpus.
    """

    id: Category
    group: Group
    display_name: str
    brief_definition: str
    refined_definition: str | None
    usefulness_rating: float | None
    reference_frequency: int

    def definition(self, style: DefinitionStyle) -> str:
        """Return the definition in the requested style.

        Falls back to the brief text (with a logged warning) when the
        refined text was never loaded.
        """
        if style is DefinitionStyle.REFINED:
            if self.refined_definition is not None:
                return self.refined_definition
            logger.warning(
                "no refined definition for %s; falling back to brief text",
                self.id.value,
            )
        return self.brief_definition


@dataclass(frozen=True)
class Taxonomy:
    """The full two-level taxonomy: 17 categories partitioned into 5 groups."""

    categories: tuple[CategoryDef, ...]
    group_definitions: dict[Group, str]

    def __post_init__(self) -> None:
        self._validate()
        by_id = {c.id: c for c in self.categories}
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_category_aliases", self._build_aliases())

    def _validate(self) -> None:
        seen: set[Category] = set()
        for cdef in self.categories:
            if cdef.id in seen:
                raise TaxonomyError(f"duplicate category: {cdef.id.value}")
            seen.add(cdef.id)
            if cdef.group is not _CANONICAL_GROUP_OF[cdef.id]:
                raise TaxonomyError(
                    f"bad group assignment: {cdef.id.value} placed under "
                    f"{cdef.group.value}"
                )
            if not cdef.brief_definition.strip():
                raise TaxonomyError(
                    f"empty brief definition for {cdef.id.value}"
                )
            if cdef.usefulness_rating is not None and not (
                1.0 <= cdef.usefulness_rating <= 5.0
            ):
                raise TaxonomyError(
                    f"usefulness rating out of range for {cdef.id.value}"
                )
            if cdef.id is not Category.FALSE_POSITIVE and cdef.usefulness_rating is None:
                raise TaxonomyError(
                    f"missing usefulness rating for {cdef.id.value}"
                )
            if cdef.reference_frequency < 0:
                raise TaxonomyError(
                    f"negative reference frequency for {cdef.id.value}"
                )
        missing = [c for c in Category if c not in seen]
        if missing:
            raise TaxonomyError(f"missing category: {missing[0].value}")
        names = [c.display_name.lower() for c in self.categories]
        if len(set(names)) != len(names):
            raise TaxonomyError("category display names are not distinct")
        for group in Group:
            if group not in self.group_definitions:
                raise TaxonomyError(f"missing group definition: {group.value}")
        total = sum(c.reference_frequency for c in self.categories)
        if total != REFERENCE_TOTAL:
            # Custom corpora may legitimately carry different counts.
            logger.warning(
                "reference frequencies sum to %d, expected %d",
                total,
                REFERENCE_TOTAL,
            )

    def _build_aliases(self) -> dict[str, Category]:
        aliases: dict[str, Category] = {}
        for cdef in self.categories:
            for alias in (cdef.display_name, cdef.id.value):
                aliases[_normalize_label(alias)] = cdef.id
            for alias in _EXTRA_CATEGORY_ALIASES.get(cdef.id, ()):
                aliases[_normalize_label(alias)] = cdef.id
        return aliases

    def category(self, category: Category) -> CategoryDef:
        return self._by_id[category]

    def children_of(self, group: Group) -> tuple[CategoryDef, ...]:
        """Categories under a group, in canonical order."""
        return tuple(c for c in self.categories if c.group is group)

    def group_of(self, category: Category) -> Group:
        return self._by_id[category].group

    def display_name(self, category: Category) -> str:
        return self._by_id[category].display_name

    def definition_text(
        self, ident: Category | Group, style: DefinitionStyle
    ) -> str:
        """Definition text for a category or a group.

        Group summaries have a single text used for either style.
        """
        if isinstance(ident, Group):
            return self.group_definitions[ident]
        return self._by_id[ident].definition(style)

    def resolve_category_label(self, label: str) -> Category | None:
        """Map a free-form label to a category, or None if unknown.

        Matching is case-insensitive and tolerant of underscores, hyphens,
        and repeated whitespace; documented aliases are accepted.
        """
        return self._category_aliases.get(_normalize_label(label))

    def resolve_group_label(self, label: str) -> Group | None:
        normalized = _normalize_label(label)
        for group in Group:
            if normalized == _normalize_label(group.display_name):
                return group
            if normalized == _normalize_label(group.value):
                return group
            if normalized in map(_normalize_label, _EXTRA_GROUP_ALIASES.get(group, ())):
                return group
        return None

    def category_options(
        self, style: DefinitionStyle
    ) -> list[tuple[str, str]]:
        """(display name, definition) pairs for all 17 categories."""
        return [(c.display_name, c.definition(style)) for c in self.categories]

    def group_options(self, style: DefinitionStyle) -> list[tuple[str, str]]:
        """(display name, summary) pairs for the 5 groups."""
        del style  # group summaries have no brief/refined variant
        return [
            (g.display_name, self.group_definitions[g])
            for g in CANONICAL_GROUP_ORDER
        ]

    def digest(self) -> str:
        """Stable content hash over the full taxonomy."""
        payload = {
            "categories": [
                {
                    "id": c.id.value,
                    "group": c.group.value,
                    "name": c.display_name,
                    "brief": c.brief_definition,
                    "refined": c.refined_definition,
                    "rating": c.usefulness_rating,
                    "frequency": c.reference_frequency,
                }
                for c in self.categories
            ],
            "groups": {
                g.value: self.group_definitions[g] for g in CANONICAL_GROUP_ORDER
            },
        }
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _builtin_records() -> dict[Category, dict]:
    return {
        cat: {
            "group": group,
            "name": name,
            "brief": brief,
            "refined": None,
            "rating": rating,
            "frequency": frequency,
        }
        for cat, group, name, brief, rating, frequency in _CATEGORY_TABLE
    }


def _bundled_definitions_text() -> str | None:
    try:
        return (
            resources.files("crevtax")
            .joinpath("data/definitions.json")
            .read_text(encoding="utf-8")
        )
    except (FileNotFoundError, ModuleNotFoundError, OSError):
        return None


def _parse_definitions(text: str, source: str) -> tuple[dict[Category, dict], dict[Group, str]]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"{source}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict) or "categories" not in data:
        raise TaxonomyError(f"{source}: expected an object with a 'categories' list")

    records: dict[Category, dict] = {}
    for i, rec in enumerate(data["categories"]):
        if not isinstance(rec, dict) or "id" not in rec:
            raise TaxonomyError(f"{source}: categories[{i}] lacks an 'id'")
        raw_id = str(rec["id"])
        try:
            cat = Category(raw_id)
        except ValueError:
            raise TaxonomyError(f"{source}: unknown category id: {raw_id}") from None
        if cat in records:
            raise TaxonomyError(f"{source}: duplicate category: {raw_id}")
        group_raw = rec.get("group")
        if group_raw is not None:
            try:
                group = Group(str(group_raw))
            except ValueError:
                raise TaxonomyError(
                    f"{source}: bad group assignment for {raw_id}: {group_raw}"
                ) from None
            if group is not _CANONICAL_GROUP_OF[cat]:
                raise TaxonomyError(
                    f"{source}: bad group assignment for {raw_id}: {group_raw}"
                )
        brief = rec.get("brief")
        if brief is not None and not str(brief).strip():
            raise TaxonomyError(f"{source}: empty brief definition for {raw_id}")
        records[cat] = {
            "name": rec.get("name"),
            "brief": brief,
            "refined": rec.get("refined"),
            "rating": rec.get("rating"),
            "frequency": rec.get("frequency"),
        }
    missing = [c for c in Category if c not in records]
    if missing:
        raise TaxonomyError(f"{source}: missing category: {missing[0].value}")

    group_texts: dict[Group, str] = {}
    for key, value in (data.get("groups") or {}).items():
        try:
            group_texts[Group(str(key))] = str(value)
        except ValueError:
            raise TaxonomyError(f"{source}: unknown group id: {key}") from None
    return records, group_texts


def load_taxonomy(definitions_path: str | Path | None = None) -> Taxonomy:
    """Build the taxonomy, optionally overriding definitions from a file.

    With no path, the built-in table is used and refined definitions are
    read from the bundled data file (brief-only fallback with a warning if
    that file is unavailable). With a path, the file must cover all 17
    categories; omitted fields (name, brief, rating, frequency, group
    summaries) fall back to the built-in values.

    Args:
        definitions_path: Optional JSON definitions file.

    Returns:
        A validated Taxonomy.

    Raises:
        TaxonomyError: On missing or duplicate categories, bad group
            assignments, or malformed files.
    """
    builtin = _builtin_records()
    overrides: dict[Category, dict] = {}
    group_texts: dict[Group, str] = {}

    if definitions_path is not None:
        path = Path(definitions_path)
        text = path.read_text(encoding="utf-8")
        parsed, group_texts = _parse_definitions(text, str(path))
        overrides = parsed
    else:
        bundled = _bundled_definitions_text()
        if bundled is not None:
            parsed, group_texts = _parse_definitions(bundled, "bundled definitions")
            overrides = parsed
        else:
            logger.warning(
                "bundled definitions unavailable; refined definitions fall "
                "back to brief text"
            )

    categories = []
    for cat, _group, name, brief, rating, frequency in _CATEGORY_TABLE:
        rec = overrides.get(cat, {})
        categories.append(
            CategoryDef(
                id=cat,
                group=_CANONICAL_GROUP_OF[cat],
                display_name=str(rec.get("name") or name),
                brief_definition=str(rec.get("brief") or brief),
                refined_definition=(
                    str(rec["refined"]) if rec.get("refined") is not None else None
                ),
                usefulness_rating=(
                    float(rec["rating"]) if rec.get("rating") is not None else rating
                ),
                reference_frequency=(
                    int(rec["frequency"])
                    if rec.get("frequency") is not None
                    else frequency
                ),
            )
        )

    group_definitions = dict(_GROUP_SUMMARIES)
    group_definitions.update(group_texts)
    return Taxonomy(categories=tuple(categories), group_definitions=group_definitions)
