"""
Structured-output parsers for LLM responses.

Every parser either returns a value or raises ParseFailure (or a subclass),
which complete_with_retry turns into a corrective re-prompt. Markdown
decoration that models like to add (bold labels, headings, code fences) is
tolerated.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from ..orchestrator.models import Hypothesis, StatClaim
from .errors import CountMismatch, OutOfRange, ParseFailure

logger = logging.getLogger(__name__)


_CELL_TYPE_MARKER = re.compile(r"Cell\s*Type\W{0,3}:", re.IGNORECASE)
_ANALYSIS_MARKER = re.compile(r"Analysis\W{0,3}:", re.IGNORECASE)
_SCORE_MARKER = re.compile(r"Score\s*\(\s*0\s*-\s*5\s*\)\W{0,3}:", re.IGNORECASE)
_NUMBERED_ITEM = re.compile(r"^\s*(?:\d+\s*[.)]|[-*•])\s+(.*\S)\s*$")
_NONE_VALUES = {"none", "n/a", "na", "no further workflows", "nothing"}

_SUMMARY_HEADER = re.compile(r"^[ \t]*(?:\d+\s*[.)]\s*)?Summary[ \t]*:", re.IGNORECASE | re.MULTILINE)
_STAT_HEADER = re.compile(r"^[ \t]*Statistical\s+Tests?[ \t]*:", re.IGNORECASE | re.MULTILINE)
_HYPOTHESIS_HEADER = re.compile(r"^[ \t]*(?:Final\s+)?Hypothesis[ \t]*:", re.IGNORECASE | re.MULTILINE)

_NUMBER = r"-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"
_CLAIM_VALUE = re.compile(
    rf"\b(log2?\s*_?FC|p[_\s.-]?adj(?:usted)?|adjusted\s+p(?:-value)?|FDR|p(?:-value)?|r)\s*[=:]\s*({_NUMBER})",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class CellTypeAnswer:
    analysis: str
    cell_type: str


def _strip_markdown(text: str) -> str:
    """Drop bold/italic/code markers and collapse whitespace."""
    cleaned = re.sub(r"[*`]", "", text)
    return re.sub(r"[ \t]+", " ", cleaned).strip()


def _clean_name(text: str) -> str:
    cleaned = _strip_markdown(text)
    cleaned = cleaned.strip().strip("\"'[]")
    return cleaned.strip(" .;:!")


def _strip_code_fences(text: str) -> str:
    return re.sub(r"^```[a-zA-Z]*\s*$", "", text, flags=re.MULTILINE).strip()


# =============================================================================
# Cell type annotation and refinement
# =============================================================================


def parse_cell_type(response: str) -> CellTypeAnswer:
    """
    Extract the text after the final "Cell Type:" marker.

    The analysis is the text between "Analysis:" and that marker (or all text
    before the marker when there is no "Analysis:" label).
    """
    response = response or ""
    markers = list(_CELL_TYPE_MARKER.finditer(response))
    if not markers:
        raise ParseFailure("Response has no 'Cell Type:' marker", section="Cell Type")
    last = markers[-1]
    tail = response[last.end():].strip()
    cell_type = _clean_name(tail.splitlines()[0]) if tail else ""
    if not cell_type:
        raise ParseFailure("'Cell Type:' marker is not followed by a name", section="Cell Type")

    head = response[: last.start()]
    analysis_match = _ANALYSIS_MARKER.search(head)
    analysis = head[analysis_match.end():] if analysis_match else head
    return CellTypeAnswer(analysis=_strip_markdown(analysis), cell_type=cell_type)


def parse_refined_annotations(response: str, expected_count: int) -> list[str]:
    """Comma-separated names, one per original annotation, in order."""
    if expected_count < 1:
        raise ValueError("expected_count must be at least 1")
    text = _strip_code_fences(response or "").strip()
    # tolerate an echoed label
    text = re.sub(r"^\s*(?:Refined|Original)?\s*annotations\s*:\s*", "", text, flags=re.IGNORECASE)
    if not text:
        raise ParseFailure("Empty refinement response")
    if "," in text:
        parts = text.split(",")
    else:
        parts = [line for line in text.splitlines() if line.strip()]
    names = [_clean_name(p) for p in parts]
    if names and not names[-1]:
        names = names[:-1]  # trailing comma
    if any(not n for n in names):
        raise ParseFailure("Refinement response contains an empty annotation")
    if len(names) != expected_count:
        raise CountMismatch(expected_count, len(names))
    return names


# =============================================================================
# Scores
# =============================================================================


def parse_score(response: str) -> int:
    """Integer after the final "Score (0-5):" marker."""
    response = response or ""
    markers = list(_SCORE_MARKER.finditer(response))
    if not markers:
        raise ParseFailure("Response has no 'Score (0-5):' marker", section="Score")
    tail = _strip_markdown(response[markers[-1].end():])
    match = re.match(r"(-?\d+(?:\.\d+)?)(?![\d.])", tail)
    if not match:
        raise ParseFailure(f"Score is not an integer: {tail[:20]!r}", section="Score")
    token = match.group(1)
    if "." in token:
        raise ParseFailure(f"Score is not an integer: {token!r}", section="Score")
    score = int(token)
    if not 0 <= score <= 5:
        raise OutOfRange(f"Score {score} outside 0..5", section="Score")
    return score


def parse_evaluation(response: str) -> tuple[str, int]:
    """(analysis, score): the analysis is everything before the final score marker."""
    score = parse_score(response)
    markers = list(_SCORE_MARKER.finditer(response))
    analysis = _strip_markdown(response[: markers[-1].start()])
    if not analysis:
        raise ParseFailure("Evaluation has a score but no analysis", section="Analysis")
    return analysis, score


# =============================================================================
# Lists and values
# =============================================================================


def is_none_response(response: str) -> bool:
    return _clean_name(response or "").lower() in _NONE_VALUES


def parse_numbered_list(response: str, allow_none: bool = False) -> list[str]:
    """
    Items of a numbered (or bulleted) list, in order.

    Raises:
        ParseFailure when the list is empty, unless allow_none and the
        response is NONE (then [] is returned).
    """
    text = _strip_code_fences(response or "")
    if allow_none and is_none_response(text):
        return []
    items = []
    for line in text.splitlines():
        match = _NUMBERED_ITEM.match(line)
        if match:
            item = _strip_markdown(match.group(1))
            if item:
                items.append(item)
    if not items:
        raise ParseFailure("Response contains no numbered list items")
    return items


def resolve_names(items: Iterable[str], allowed: Sequence[str]) -> tuple[list[str], list[str]]:
    """
    Match free-text items to canonical names, case-insensitively.

    Returns (resolved, unknown); resolved keeps first-seen order without
    duplicates.
    """
    lookup = {name.lower(): name for name in allowed}
    resolved: list[str] = []
    unknown: list[str] = []
    for item in items:
        name = lookup.get(_clean_name(item).lower())
        if name is None:
            unknown.append(item)
        elif name not in resolved:
            resolved.append(name)
    return resolved, unknown


def parse_comma_list(
    response: str,
    allowed: Optional[Sequence[str]] = None,
    max_items: Optional[int] = None,
) -> list[str]:
    """
    Comma-separated names, validated against `allowed` when given.

    Unknown names are dropped with a warning; a list left empty is a
    ParseFailure. Longer lists are cut at max_items.
    """
    text = _strip_code_fences(response or "").replace("\n", ",")
    items = [_clean_name(p) for p in text.split(",")]
    items = [i for i in items if i]
    if allowed is not None:
        items, unknown = resolve_names(items, allowed)
        if unknown:
            logger.warning(f"[LLM] Dropped unknown names: {unknown}")
    if not items:
        raise ParseFailure("No valid names in comma-separated response")
    if max_items is not None:
        items = items[:max_items]
    return items


def parse_labeled_value(response: str, label: str, allowed: Optional[Sequence[str]] = None) -> str:
    """Value after the final `label:` marker, optionally resolved against allowed names."""
    response = response or ""
    pattern = re.compile(rf"{re.escape(label)}\W{{0,3}}:", re.IGNORECASE)
    markers = list(pattern.finditer(response))
    if not markers:
        raise ParseFailure(f"Response has no '{label}:' marker", section=label)
    tail = response[markers[-1].end():].strip()
    value = _clean_name(tail.splitlines()[0]) if tail else ""
    if not value:
        raise ParseFailure(f"'{label}:' marker is not followed by a value", section=label)
    if allowed is not None:
        resolved, _ = resolve_names([value], allowed)
        if not resolved:
            raise ParseFailure(f"{value!r} is not one of the listed options", section=label)
        return resolved[0]
    return value


def parse_json_object(response: str) -> dict:
    """The outermost JSON object in the response."""
    text = _strip_code_fences(response or "")
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ParseFailure("Response contains no JSON object")
    try:
        value = json.loads(text[start: end + 1])
    except json.JSONDecodeError as e:
        raise ParseFailure(f"Invalid JSON: {e}")
    if not isinstance(value, dict):
        raise ParseFailure("JSON value is not an object")
    return value


def parse_query(response: str, max_terms: int = 10) -> str:
    """First non-empty line, stripped of labels and quotes, clipped to max_terms words."""
    text = _strip_code_fences(response or "")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ParseFailure("Empty query response")
    line = re.sub(r"^\s*(?:PubMed\s+)?Query\s*:\s*", "", lines[0], flags=re.IGNORECASE)
    terms = _clean_name(line).split()
    if not terms:
        raise ParseFailure("Empty query response")
    return " ".join(terms[:max_terms])


# =============================================================================
# Hypotheses
# =============================================================================


_CLAIM_KEYS = {
    "logfc": "logFC",
    "log2fc": "logFC",
    "log2_fc": "logFC",
    "log_fc": "logFC",
    "p": "p",
    "p-value": "p",
    "r": "r",
    "fdr": "p_adj",
}


def _claim_key(raw: str) -> str:
    key = re.sub(r"\s+", "", raw.lower())
    if key in _CLAIM_KEYS:
        return _CLAIM_KEYS[key]
    if "adj" in key:
        return "p_adj"
    return "p"


def parse_stat_claim(line: str) -> Optional[StatClaim]:
    """One `entity | comparison | test | key=value, ...` line, or None without numbers."""
    text = _strip_markdown(re.sub(r"^\s*(?:\d+\s*[.)]|[-*•])\s*", "", line))
    values: dict[str, float] = {}
    raw_values: dict[str, str] = {}
    for match in _CLAIM_VALUE.finditer(text):
        key = _claim_key(match.group(1))
        if key not in values:
            values[key] = float(match.group(2))
            raw_values[key] = match.group(2)
    if not values:
        return None
    parts = [p.strip() for p in text.split("|")]
    entity = parts[0] if parts and parts[0] else text
    comparison = parts[1] if len(parts) > 3 else ""
    test = parts[2] if len(parts) > 3 else (parts[1] if len(parts) == 3 else "")
    if entity == text:
        entity = _CLAIM_VALUE.split(text)[0].strip(" ,;:") or text
    try:
        return StatClaim(entity=entity, comparison=comparison, test=test, raw_values=raw_values, **values)
    except ValueError:
        return None


def _parse_hypothesis_block(block: str, index: int) -> Hypothesis:
    summary = _SUMMARY_HEADER.search(block)
    stat = _STAT_HEADER.search(block)
    hyp = _HYPOTHESIS_HEADER.search(block, stat.end() if stat else 0)
    if stat is None:
        raise ParseFailure(f"Hypothesis {index} is missing 'Statistical Test'", section="Statistical Test")
    if hyp is None:
        raise ParseFailure(f"Hypothesis {index} is missing 'Hypothesis'", section="Hypothesis")

    overview = _strip_markdown(" ".join(block[summary.end(): stat.start()].split()))
    statement = _strip_markdown(" ".join(block[hyp.end():].split()))
    if not overview:
        raise ParseFailure(f"Hypothesis {index} has an empty 'Summary'", section="Summary")
    if not statement:
        raise ParseFailure(f"Hypothesis {index} has an empty 'Hypothesis'", section="Hypothesis")

    claims = []
    for line in block[stat.end(): hyp.start()].splitlines():
        if not line.strip():
            continue
        claim = parse_stat_claim(line)
        if claim is None:
            logger.debug(f"[LLM] Hypothesis {index}: no numbers in claim line {line.strip()[:60]!r}")
            continue
        claims.append(claim)
    if not claims:
        raise ParseFailure(
            f"Hypothesis {index} has no statistical results with numbers", section="Statistical Test"
        )
    return Hypothesis(overview=overview, stat_summary=tuple(claims), statement=statement)


def parse_hypotheses(response: str) -> list[Hypothesis]:
    """
    Split a proposal response into hypotheses.

    Each block starts at a "Summary:" line and must carry "Statistical Test:"
    and "Hypothesis:" sections. Markdown heading lines are ignored.
    """
    text = _strip_code_fences(response or "")
    text = "\n".join(line for line in text.splitlines() if not line.lstrip().startswith("#"))
    text = text.replace("**", "").replace("__", "")
    starts = [m.start() for m in _SUMMARY_HEADER.finditer(text)]
    if not starts:
        raise ParseFailure("Response has no 'Summary' section", section="Summary")
    bounds = starts + [len(text)]
    return [_parse_hypothesis_block(text[bounds[i]: bounds[i + 1]], i + 1) for i in range(len(starts))]
