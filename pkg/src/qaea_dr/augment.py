"""Generation, scoring, and regeneration of structured text units.

For each document and task (QA generation or event extraction) the flow
is: build the generation prompt, score the output with a separate
evaluator backend, regenerate at most once when the score falls at or
below the threshold, then parse the final output into units and revert
each to plain text. Parsing is total: malformed model output produces a
failed record (original vector only), never a crash.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Iterable

from .corpus import Corpus, Document
from .errors import JsonExtractionError, ValidationError
from .llm import CRITERIA, TASK_EE, TASK_QAG, TASKS, ChatBackend, ChatRequest
from .organize import EVENT_ELEMENT_ORDER, revert_event, revert_qa

logger = logging.getLogger(__name__)

PROMPT_VERSION = "v1"

QUESTION_TYPES = (
    "factual inquiry",
    "explanation and definition",
    "cause and effect",
    "comparison and contrast",
    "evaluation and opinion",
)

_TEMPLATE_CACHE: dict[str, Template] = {}


def _template(name: str) -> Template:
    if name not in _TEMPLATE_CACHE:
        text = (
            resources.files("qaea_dr")
            .joinpath(f"templates/{PROMPT_VERSION}/{name}.txt")
            .read_text(encoding="utf-8")
        )
        _TEMPLATE_CACHE[name] = Template(text)
    return _TEMPLATE_CACHE[name]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QaPair:
    question_type: str
    question: str
    answer: str

    def __post_init__(self) -> None:
        if self.question_type not in QUESTION_TYPES:
            raise ValidationError(f"unknown question type {self.question_type!r}")
        if not self.question or not self.answer:
            raise ValidationError("question and answer must be non-empty")


@dataclass(frozen=True)
class Event:
    event_type: str | None = None
    time: str | None = None
    location: str | None = None
    event_subject: str | None = None
    event_object: str | None = None
    event: str | None = None
    impact: str | None = None

    def __post_init__(self) -> None:
        if all(getattr(self, k) is None for k in EVENT_ELEMENT_ORDER):
            raise ValidationError("event must have at least one non-null element")

    def elements(self) -> dict[str, str | None]:
        return {k: getattr(self, k) for k in EVENT_ELEMENT_ORDER}


@dataclass(frozen=True)
class Deduction:
    reason: str
    score: int
    related_content: str = ""


@dataclass(frozen=True)
class ScoreReport:
    total_score: int
    deductions: tuple[Deduction, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.total_score <= 10:
            raise ValidationError(f"total score must be in [0, 10], got {self.total_score}")


@dataclass(frozen=True)
class GeneratedUnit:
    """One parsed unit plus its reverted plain-text form."""

    kind: str  # "qa" | "event"
    data: QaPair | Event
    text: str


@dataclass
class GenerationRecord:
    doc_id: str
    task: str
    attempt_outputs: list[str]
    score: ScoreReport | None
    regenerated: bool
    units: list[GeneratedUnit]
    regen_score: ScoreReport | None = None
    failed: bool = False
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Prompt builders
# ---------------------------------------------------------------------------


def build_qag_prompt(document_text: str) -> str:
    if not document_text:
        raise ValidationError("document text must be non-empty")
    return _template("qag_generate").substitute(document=document_text)


def build_ee_prompt(document_text: str) -> str:
    if not document_text:
        raise ValidationError("document text must be non-empty")
    return _template("ee_generate").substitute(document=document_text)


def build_generation_prompt(document_text: str, task: str) -> str:
    if task == TASK_QAG:
        return build_qag_prompt(document_text)
    if task == TASK_EE:
        return build_ee_prompt(document_text)
    raise ValidationError(f"task must be one of {TASKS}, got {task!r}")


def build_score_prompt(generated_raw: str, original_text: str, task: str) -> str:
    # the evaluator sees the original so the relevance rule has a referent
    return _template("score").substitute(document=original_text, generated=generated_raw)


def build_regen_prompt(
    original_text: str, generated_raw: str, score_report: ScoreReport, task: str
) -> str:
    details = "\n".join(
        f"- {d.reason} (deduct {d.score}): {d.related_content}"
        for d in score_report.deductions
    ) or "- (no itemized deductions were given)"
    task_label = "question-answer generation" if task == TASK_QAG else "event extraction"
    return _template("regen").substitute(
        document=original_text,
        generated=generated_raw,
        score_details=details,
        task=task_label,
    )


# ---------------------------------------------------------------------------
# Tolerant JSON parsing
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z]*\n?")


def extract_first_json(raw: str, kinds: str = "{[") -> object:
    """First balanced JSON value of an allowed top-level kind.

    kinds selects the openers to consider: "{" objects, "[" arrays, or
    both. Code fences and surrounding prose are tolerated; scanning
    starts at each allowed opener until one decodes.
    """
    if not isinstance(raw, str):
        raise JsonExtractionError("model output is not text")
    cleaned = _FENCE.sub("", raw)
    decoder = json.JSONDecoder()
    for i, ch in enumerate(cleaned):
        if ch not in kinds:
            continue
        try:
            value, _ = decoder.raw_decode(cleaned, i)
            return value
        except json.JSONDecodeError:
            continue
    raise JsonExtractionError(f"no JSON value found in output {raw[:80]!r}")


def _normalize_key(key: object) -> str:
    return re.sub(r"[\s_\-]+", " ", str(key)).strip().lower()


_QUESTION_TYPE_BY_KEY = {t: t for t in QUESTION_TYPES}


def parse_qa_json(raw: str, warnings: list[str] | None = None) -> list[QaPair]:
    """Flatten a {"question type": [[q, a], ...]} object into QaPairs.

    Unknown type keys and malformed pairs are skipped with a warning;
    only the absence of a top-level JSON object raises.
    """
    value = extract_first_json(raw, kinds="{")
    sink = warnings if warnings is not None else []
    pairs: list[QaPair] = []
    for key, entry in value.items():
        qtype = _QUESTION_TYPE_BY_KEY.get(_normalize_key(key))
        if qtype is None:
            sink.append(f"skipping unknown question type key {key!r}")
            logger.warning(sink[-1])
            continue
        if (
            isinstance(entry, list)
            and len(entry) == 2
            and all(isinstance(x, str) for x in entry)
        ):
            entry = [entry]  # tolerate a bare [q, a] pair
        if not isinstance(entry, list):
            sink.append(f"skipping non-list value under {key!r}")
            logger.warning(sink[-1])
            continue
        for pair in entry:
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                sink.append(f"skipping malformed pair under {key!r}: {pair!r}")
                logger.warning(sink[-1])
                continue
            question, answer = (str(pair[0] or ""), str(pair[1] or ""))
            if not question or not answer:
                sink.append(f"skipping pair with empty question or answer under {key!r}")
                logger.warning(sink[-1])
                continue
            pairs.append(QaPair(question_type=qtype, question=question, answer=answer))
    return pairs


_EVENT_KEY_BY_NORM = {
    "event type": "event_type",
    "time": "time",
    "location": "location",
    "event subject": "event_subject",
    "event object": "event_object",
    "event": "event",
    "impact": "impact",
}


def parse_event_json(raw: str, warnings: list[str] | None = None) -> list[Event]:
    """Parse a list of event records; missing elements become null."""
    value = extract_first_json(raw)  # arrays expected, a bare object tolerated
    sink = warnings if warnings is not None else []
    if isinstance(value, dict):
        value = [value]
    if not isinstance(value, list):
        sink.append(f"expected a JSON array for event output, got {type(value).__name__}")
        logger.warning(sink[-1])
        return []
    events: list[Event] = []
    for item in value:
        if not isinstance(item, dict):
            sink.append(f"skipping non-object event record: {item!r}")
            logger.warning(sink[-1])
            continue
        fields: dict[str, str | None] = {k: None for k in EVENT_ELEMENT_ORDER}
        for key, val in item.items():
            attr = _EVENT_KEY_BY_NORM.get(_normalize_key(key))
            if attr is not None and val is not None:
                fields[attr] = str(val)
        if all(v is None for v in fields.values()):
            sink.append("skipping event with every element null")
            logger.warning(sink[-1])
            continue
        events.append(Event(**fields))
    return events


def parse_score_json(raw: str, warnings: list[str] | None = None) -> ScoreReport:
    """Parse a Score_json verdict, repairing inconsistent arithmetic."""
    value = extract_first_json(raw, kinds="{")
    sink = warnings if warnings is not None else []
    normalized = {_normalize_key(k): v for k, v in value.items()}
    if "total score" not in normalized:
        raise JsonExtractionError("score output lacks a 'total score' key")

    deductions: list[Deduction] = []
    detail = normalized.get("detail", [])
    if not isinstance(detail, list):
        sink.append(f"ignoring non-list score detail: {detail!r}")
        logger.warning(sink[-1])
        detail = []
    for item in detail:
        if not isinstance(item, dict):
            sink.append(f"skipping non-object deduction: {item!r}")
            logger.warning(sink[-1])
            continue
        entry = {_normalize_key(k): v for k, v in item.items()}
        try:
            amount = int(entry.get("deduction score"))
        except (TypeError, ValueError):
            sink.append(f"skipping deduction with non-integer score: {item!r}")
            logger.warning(sink[-1])
            continue
        if amount <= 0:
            sink.append(f"skipping deduction with non-positive score: {item!r}")
            logger.warning(sink[-1])
            continue
        reason_raw = str(entry.get("deduction reason", ""))
        reason = next(
            (c for c in CRITERIA if c.lower() in reason_raw.lower()), None
        )
        if reason is None:
            sink.append(f"deduction reason {reason_raw!r} matches no rubric criterion")
            logger.warning(sink[-1])
            reason = reason_raw or "Unspecified"
        deductions.append(
            Deduction(
                reason=reason,
                score=amount,
                related_content=str(entry.get("related content", "")),
            )
        )

    expected = max(0, 10 - sum(d.score for d in deductions))
    try:
        total = int(normalized["total score"])
    except (TypeError, ValueError):
        sink.append(f"non-integer total score {normalized['total score']!r}; recomputed")
        logger.warning(sink[-1])
        total = expected
    if total != expected:
        sink.append(
            f"total score {total} inconsistent with deductions (expected {expected}); recomputed"
        )
        logger.warning(sink[-1])
        total = expected
    return ScoreReport(total_score=total, deductions=tuple(deductions))


# ---------------------------------------------------------------------------
# Generate -> evaluate -> regenerate
# ---------------------------------------------------------------------------


def _parse_units(
    raw: str, task: str, language: str, warnings: list[str]
) -> list[GeneratedUnit]:
    if task == TASK_QAG:
        return [
            GeneratedUnit(kind="qa", data=p, text=revert_qa(p.question, p.answer))
            for p in parse_qa_json(raw, warnings)
        ]
    return [
        GeneratedUnit(kind="event", data=e, text=revert_event(e.elements(), language))
        for e in parse_event_json(raw, warnings)
    ]


def augment_document(
    doc: Document,
    task: str,
    threshold: int,
    generator: ChatBackend,
    evaluator: ChatBackend,
    language: str = "en",
) -> GenerationRecord:
    """Run the single-regeneration generation loop for one document."""
    if task not in TASKS:
        raise ValidationError(f"task must be one of {TASKS}, got {task!r}")
    if not -1 <= threshold <= 10:
        raise ValidationError(f"threshold must be in [-1, 10], got {threshold}")

    warnings: list[str] = []
    prompt = build_generation_prompt(doc.text, task)
    first_raw = generator.complete(ChatRequest(model_name="", user_prompt=prompt)).text
    attempts = [first_raw]

    score: ScoreReport | None = None
    try:
        score_raw = evaluator.complete(
            ChatRequest(
                model_name="", user_prompt=build_score_prompt(first_raw, doc.text, task)
            )
        ).text
        score = parse_score_json(score_raw, warnings)
    except JsonExtractionError as e:
        warnings.append(f"evaluator output unparseable, skipping regeneration: {e}")
        logger.warning("doc %s/%s: %s", doc.doc_id, task, warnings[-1])

    regenerated = score is not None and score.total_score <= threshold
    regen_score: ScoreReport | None = None
    if regenerated:
        regen_prompt = build_regen_prompt(doc.text, first_raw, score, task)
        second_raw = generator.complete(
            ChatRequest(model_name="", user_prompt=regen_prompt)
        ).text
        attempts.append(second_raw)
        # the second output is scored for the record but never retried
        try:
            regen_score_raw = evaluator.complete(
                ChatRequest(
                    model_name="",
                    user_prompt=build_score_prompt(second_raw, doc.text, task),
                )
            ).text
            regen_score = parse_score_json(regen_score_raw, warnings)
        except JsonExtractionError as e:
            warnings.append(f"evaluator output unparseable on regenerated text: {e}")
            logger.warning("doc %s/%s: %s", doc.doc_id, task, warnings[-1])

    failed = False
    units: list[GeneratedUnit] = []
    try:
        units = _parse_units(attempts[-1], task, language, warnings)
    except JsonExtractionError as e:
        failed = True
        warnings.append(f"final output unparseable, document contributes no {task} units: {e}")
        logger.warning("doc %s/%s: %s", doc.doc_id, task, warnings[-1])

    return GenerationRecord(
        doc_id=doc.doc_id,
        task=task,
        attempt_outputs=attempts,
        score=score,
        regenerated=regenerated,
        units=units,
        regen_score=regen_score,
        failed=failed,
        warnings=warnings,
    )


def augment_corpus(
    corpus: Corpus,
    threshold: int,
    generator: ChatBackend,
    evaluator: ChatBackend,
    tasks: Iterable[str] = TASKS,
    language: str = "en",
    parallelism: int = 1,
) -> list[GenerationRecord]:
    """Augment every document for every task; record order is deterministic."""
    jobs = [(doc, task) for doc in corpus for task in tasks]
    if parallelism <= 1:
        return [
            augment_document(doc, task, threshold, generator, evaluator, language)
            for doc, task in jobs
        ]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [
            pool.submit(
                augment_document, doc, task, threshold, generator, evaluator, language
            )
            for doc, task in jobs
        ]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# generations.jsonl serialization (the augment -> embed contract)
# ---------------------------------------------------------------------------


def _unit_to_json(unit: GeneratedUnit) -> dict:
    if unit.kind == "qa":
        data = {
            "question_type": unit.data.question_type,
            "question": unit.data.question,
            "answer": unit.data.answer,
        }
    else:
        data = unit.data.elements()
    return {"kind": unit.kind, "data": data, "text": unit.text}


def _unit_from_json(obj: dict) -> GeneratedUnit:
    if obj["kind"] == "qa":
        data: QaPair | Event = QaPair(**obj["data"])
    elif obj["kind"] == "event":
        data = Event(**obj["data"])
    else:
        raise ValidationError(f"unknown unit kind {obj['kind']!r}")
    return GeneratedUnit(kind=obj["kind"], data=data, text=obj["text"])


def _score_to_json(score: ScoreReport | None) -> dict | None:
    if score is None:
        return None
    return {
        "total_score": score.total_score,
        "deductions": [
            {"reason": d.reason, "score": d.score, "related_content": d.related_content}
            for d in score.deductions
        ],
    }


def _score_from_json(obj: dict | None) -> ScoreReport | None:
    if obj is None:
        return None
    return ScoreReport(
        total_score=obj["total_score"],
        deductions=tuple(Deduction(**d) for d in obj["deductions"]),
    )


def record_to_json(record: GenerationRecord) -> dict:
    return {
        "doc_id": record.doc_id,
        "task": record.task,
        "attempt_outputs": record.attempt_outputs,
        "score": _score_to_json(record.score),
        "regenerated": record.regenerated,
        "units": [_unit_to_json(u) for u in record.units],
        "regen_score": _score_to_json(record.regen_score),
        "failed": record.failed,
        "warnings": record.warnings,
    }


def record_from_json(obj: dict) -> GenerationRecord:
    if obj.get("task") not in TASKS:
        raise ValidationError(f"record has unknown task {obj.get('task')!r}")
    return GenerationRecord(
        doc_id=obj["doc_id"],
        task=obj["task"],
        attempt_outputs=list(obj["attempt_outputs"]),
        score=_score_from_json(obj.get("score")),
        regenerated=bool(obj["regenerated"]),
        units=[_unit_from_json(u) for u in obj["units"]],
        regen_score=_score_from_json(obj.get("regen_score")),
        failed=bool(obj.get("failed", False)),
        warnings=list(obj.get("warnings", [])),
    )


def save_generations(records: Iterable[GenerationRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record_to_json(record), ensure_ascii=False, sort_keys=True))
            f.write("\n")


def load_generations(path: str | Path) -> list[GenerationRecord]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"generations file not found: {path}")
    records = []
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValidationError(f"{path}:{line_no}: bad generation record: {e}") from e
    return records
