"""Reversion of structured units to plain text, plus text organization.

Two organization strategies exist downstream of reversion: keep every
generated text as its own retrieval unit (TRI), or merge all texts from
one document into a single unit (TMO).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

STRATEGY_TRI = "tri"
STRATEGY_TMO = "tmo"

# element order follows the event schema declaration
EVENT_ELEMENT_ORDER = (
    "event_type",
    "time",
    "location",
    "event_subject",
    "event_object",
    "event",
    "impact",
)


@dataclass(frozen=True)
class OrganizedTexts:
    doc_id: str
    kind: str  # "qa" | "event"
    strategy: str
    texts: tuple[str, ...]


def revert_qa(question: str, answer: str) -> str:
    """Question + single space + answer; nothing inserted or normalized."""
    return f"{question} {answer}"


def revert_event(elements: dict[str, str | None], language: str = "en") -> str:
    """Join non-null event elements in schema order, period-separated.

    The period renders as ". " for Latin scripts and "。" for Chinese.
    """
    values = [
        elements[key]
        for key in EVENT_ELEMENT_ORDER
        if elements.get(key) is not None
    ]
    if not values:
        raise ValidationError("cannot revert an event with every element null")
    separator = "。" if language == "zh" else ". "
    return separator.join(values)


def organize(units: list[str], strategy: str) -> list[str]:
    """TRI keeps the list as-is; TMO concatenates it into one text."""
    if strategy == STRATEGY_TRI:
        return list(units)
    if strategy == STRATEGY_TMO:
        return [" ".join(units)] if units else []
    raise ValidationError(
        f"strategy must be {STRATEGY_TRI!r} or {STRATEGY_TMO!r}, got {strategy!r}"
    )
