"""Data model and file ingestion for references, variants, hypotheses, and labels."""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

# A token sequence is a plain tuple of non-empty, whitespace-free strings.
# tokenize() is the canonical constructor and guarantees both invariants.
TokenSequence = tuple[str, ...]


class CorpusFormatError(ValueError):
    """A corpus or hypothesis file violates the JSONL contract."""


class Condition(str, Enum):
    """Which input condition produced a hypothesis set."""

    REAL = "real"
    NOISE = "noise"


@dataclass(frozen=True)
class AttributeLabels:
    """Optional per-sample semantic attribute labels.

    sentiment/topic are categorical labels, length is a word count (>= 1),
    surprisal is a non-negative mean surprisal value.
    """

    sentiment: str | None = None
    topic: str | None = None
    length: int | None = None
    surprisal: float | None = None

    def __post_init__(self) -> None:
        if self.length is not None and self.length < 1:
            raise ValueError(f"length must be >= 1 when present, got {self.length}")
        if self.surprisal is not None and not self.surprisal >= 0:
            raise ValueError(f"surprisal must be >= 0, got {self.surprisal}")

    def is_empty(self) -> bool:
        return (
            self.sentiment is None
            and self.topic is None
            and self.length is None
            and self.surprisal is None
        )


@dataclass(frozen=True)
class Sample:
    """One evaluation item: a ground-truth sentence plus optional extras."""

    id: str
    ground_truth: str
    mtv_variants: tuple[str, ...] = ()
    attributes: AttributeLabels | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if not self.ground_truth.strip():
            raise ValueError(f"sample {self.id!r}: ground_truth must be non-empty")


@dataclass(frozen=True)
class HypothesisSet:
    """One system's outputs under one condition, keyed by sample id."""

    system_name: str
    condition: Condition
    hypotheses: dict[str, str]

    def validate_ids(self, corpus_ids: set[str] | frozenset[str]) -> None:
        """Every hypothesis id must refer to a sample in the paired corpus."""
        unknown = sorted(set(self.hypotheses) - set(corpus_ids))
        if unknown:
            raise CorpusFormatError(
                f"hypothesis ids not present in corpus: {', '.join(unknown[:5])}"
                + (f" (+{len(unknown) - 5} more)" if len(unknown) > 5 else "")
            )


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(sentence: str) -> TokenSequence:
    """Split on Unicode whitespace and strip punctuation from token edges.

    Interior punctuation (hyphens, apostrophes) is kept; tokens that are
    punctuation-only are dropped. Case is preserved: all downstream matching
    is case-sensitive. Deterministic and idempotent on its own output.
    """
    out: list[str] = []
    for raw in sentence.split():
        i, j = 0, len(raw)
        while i < j and _is_punct(raw[i]):
            i += 1
        while j > i and _is_punct(raw[j - 1]):
            j -= 1
        if j > i:
            out.append(raw[i:j])
    return tuple(out)


def ngrams(seq: TokenSequence, n: int) -> Counter:
    """Multiset of contiguous n-token windows; empty when len(seq) < n."""
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def _parse_attributes(record: dict, line_no: int) -> AttributeLabels | None:
    sentiment = record.get("sentiment")
    topic = record.get("topic")
    length = record.get("length")
    surprisal = record.get("surprisal")
    if sentiment is None and topic is None and length is None and surprisal is None:
        return None
    if length is not None and not isinstance(length, int):
        raise CorpusFormatError(f"line {line_no}: 'length' must be an integer")
    if surprisal is not None and not isinstance(surprisal, (int, float)):
        raise CorpusFormatError(f"line {line_no}: 'surprisal' must be a number")
    try:
        return AttributeLabels(
            sentiment=sentiment,
            topic=topic,
            length=length,
            surprisal=None if surprisal is None else float(surprisal),
        )
    except ValueError as exc:
        raise CorpusFormatError(f"line {line_no}: {exc}") from exc


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusFormatError(f"line {line_no}: expected a JSON object")
            yield line_no, record


def load_corpus(path: str | Path, format: str = "jsonl") -> list[Sample]:
    """Load samples from a JSONL corpus file, preserving file order.

    Each line: {"id": str, "text": str, "mtv": [str...]?, "sentiment": str?,
    "topic": str?, "length": int?, "surprisal": float?}. Duplicate ids and
    missing required fields are hard errors that cite the offending line.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format: {format!r}")
    samples: list[Sample] = []
    seen: set[str] = set()
    for line_no, record in _iter_jsonl(path):
        for key in ("id", "text"):
            if key not in record:
                raise CorpusFormatError(f"line {line_no}: missing required field {key!r}")
        sid = record["id"]
        if not isinstance(sid, str) or not isinstance(record["text"], str):
            raise CorpusFormatError(f"line {line_no}: 'id' and 'text' must be strings")
        if sid in seen:
            raise CorpusFormatError(f"line {line_no}: duplicate id {sid!r}")
        seen.add(sid)
        mtv = record.get("mtv", [])
        if not isinstance(mtv, list) or not all(isinstance(v, str) for v in mtv):
            raise CorpusFormatError(f"line {line_no}: 'mtv' must be a list of strings")
        try:
            samples.append(
                Sample(
                    id=sid,
                    ground_truth=record["text"],
                    mtv_variants=tuple(mtv),
                    attributes=_parse_attributes(record, line_no),
                )
            )
        except ValueError as exc:
            raise CorpusFormatError(f"line {line_no}: {exc}") from exc
    return samples


def write_corpus(samples: list[Sample], path: str | Path) -> None:
    """Serialize samples back to the JSONL corpus format (round-trippable)."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            record: dict = {"id": s.id, "text": s.ground_truth}
            if s.mtv_variants:
                record["mtv"] = list(s.mtv_variants)
            if s.attributes is not None:
                for key in ("sentiment", "topic", "length", "surprisal"):
                    value = getattr(s.attributes, key)
                    if value is not None:
                        record[key] = value
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def load_hypotheses(
    path: str | Path,
    system_name: str | None = None,
    condition: str | Condition | None = None,
    corpus_ids: set[str] | None = None,
) -> HypothesisSet:
    """Load a hypothesis JSONL file: {"id": str, "hyp": str} per line.

    An optional first line {"system_name": str, "condition": str} acts as a
    header; explicit arguments override it. When corpus_ids is given, every
    hypothesis id must be present in it (missing ids are a hard error).
    """
    hyps: dict[str, str] = {}
    for line_no, record in _iter_jsonl(path):
        if line_no == 1 and "id" not in record and (
            "system_name" in record or "condition" in record
        ):
            if system_name is None:
                system_name = record.get("system_name")
            if condition is None:
                condition = record.get("condition")
            continue
        for key in ("id", "hyp"):
            if key not in record:
                raise CorpusFormatError(f"line {line_no}: missing required field {key!r}")
        if not isinstance(record["id"], str) or not isinstance(record["hyp"], str):
            raise CorpusFormatError(f"line {line_no}: 'id' and 'hyp' must be strings")
        if record["id"] in hyps:
            raise CorpusFormatError(f"line {line_no}: duplicate id {record['id']!r}")
        hyps[record["id"]] = record["hyp"]
    if system_name is None:
        raise CorpusFormatError("system_name not given (no header line and no argument)")
    if condition is None:
        raise CorpusFormatError("condition not given (no header line and no argument)")
    hset = HypothesisSet(
        system_name=system_name,
        condition=Condition(condition),
        hypotheses=hyps,
    )
    if corpus_ids is not None:
        hset.validate_ids(corpus_ids)
    return hset


def write_hypotheses(hset: HypothesisSet, path: str | Path) -> None:
    """Serialize a hypothesis set with its header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {"system_name": hset.system_name, "condition": hset.condition.value}
            )
            + "\n"
        )
        for sid, hyp in hset.hypotheses.items():
            fh.write(json.dumps({"id": sid, "hyp": hyp}, ensure_ascii=False) + "\n")
