"""Corpus loading, merging, deduplication, splitting and vocabulary building.

Datasets are JSON-lines files, one object per line with keys
{id, text, label, model, source} (optionally language). Three label
schemes are supported: binary human/machine (0/1), 6-way generator
attribution (0..5), and token-level boundary positions.
"""

from __future__ import annotations

import json
import random
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .validation import check_fraction, token_count

TASK_A_MONO = "A-mono"
TASK_A_MULTI = "A-multi"
TASK_B = "B"
TASK_C = "C"
TASKS = (TASK_A_MONO, TASK_A_MULTI, TASK_B, TASK_C)

BINARY_LABELS = (0, 1)
MULTICLASS_LABELS = (0, 1, 2, 3, 4, 5)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1

_REQUIRED_FIELDS = ("id", "text", "label", "model", "source")


class CorpusError(ValueError):
    """Raised for malformed corpus files or records."""


@dataclass(frozen=True)
class TextRecord:
    """One corpus item. `label` is task-dependent: 0/1 for binary
    detection, 0..5 for attribution, a boundary index for the
    token-level task."""

    id: str
    text: str
    label: int
    generator: str = ""
    source: str = ""
    language: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"record {self.id!r}: text is empty")

    def token_count(self) -> int:
        return token_count(self.text)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[TextRecord]
    validation: list[TextRecord]
    seed: int
    ratio: float


@dataclass(frozen=True)
class TokenTagSequence:
    """Whitespace tokens with aligned 0/1 tags (0 = human, 1 = machine)."""

    tokens: list[str]
    tags: list[int]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"tokens/tags length mismatch: {len(self.tokens)} vs {len(self.tags)}"
            )


def _validate_label(label, task: str, text: str) -> int:
    if not isinstance(label, int) or isinstance(label, bool):
        raise CorpusError(f"label must be an integer, got {label!r}")
    if task in (TASK_A_MONO, TASK_A_MULTI):
        if label not in BINARY_LABELS:
            raise CorpusError(f"label {label} outside binary label set {{0,1}}")
    elif task == TASK_B:
        if label not in MULTICLASS_LABELS:
            raise CorpusError(f"label {label} outside attribution label set 0..5")
    elif task == TASK_C:
        n = token_count(text)
        if not 0 <= label <= n:
            raise CorpusError(f"boundary index {label} outside [0, {n}]")
    else:
        raise CorpusError(f"unknown task {task!r}")
    return label


def load_corpus(path: str | Path, task: str) -> list[TextRecord]:
    """Load a JSONL dataset, normalizing the `model` field to `generator`.

    Errors carry the 1-based line number; a missing required field is
    reported by name.
    """
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            for key in _REQUIRED_FIELDS:
                if key not in obj:
                    raise CorpusError(f"{path}:{lineno}: missing field: {key}")
            try:
                label = _validate_label(obj["label"], task, obj["text"])
                record = TextRecord(
                    id=str(obj["id"]),
                    text=obj["text"],
                    label=label,
                    generator=obj["model"],
                    source=obj["source"],
                    language=obj.get("language", ""),
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
            records.append(record)
    return records


def write_jsonl(records: Iterable[TextRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec.id,
                "text": rec.text,
                "label": rec.label,
                "model": rec.generator,
                "source": rec.source,
            }
            if rec.language:
                obj["language"] = rec.language
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def normalized_text_key(text: str) -> str:
    """Duplicate-detection key: NFC-normalized, whitespace runs collapsed,
    ends stripped."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def relabel_binary(records: list[TextRecord]) -> list[TextRecord]:
    """Collapse generator labels to the binary scheme: human -> 0, any
    machine generator -> 1. Used when merging attribution data into the
    binary task."""
    out = []
    for rec in records:
        label = 0 if rec.generator.lower() == "human" else 1
        out.append(
            TextRecord(rec.id, rec.text, label, rec.generator, rec.source, rec.language)
        )
    return out


def merge_dedup(
    primary: list[TextRecord], extra: list[TextRecord]
) -> list[TextRecord]:
    """Concatenate two record lists, dropping exact duplicate texts.

    First occurrence wins; duplicates match on the normalized text key.
    Both lists must already use the same label scheme.
    """
    seen: set[str] = set()
    merged = []
    for rec in list(primary) + list(extra):
        key = normalized_text_key(rec.text)
        if key in seen:
            continue
        seen.add(key)
        merged.append(rec)
    return merged


def split_dataset(
    records: list[TextRecord], ratio: float = 0.8, seed: int = 0
) -> DatasetSplit:
    """Seeded shuffle then partition; floor(ratio * n) records go to train."""
    check_fraction(ratio)
    if len(records) < 2:
        raise CorpusError(f"need at least 2 records to split, got {len(records)}")
    indices = list(range(len(records)))
    random.Random(seed).shuffle(indices)
    n_train = int(ratio * len(records))
    # Keep both sides non-empty for degenerate ratios.
    n_train = max(1, min(n_train, len(records) - 1))
    train = [records[i] for i in indices[:n_train]]
    validation = [records[i] for i in indices[n_train:]]
    return DatasetSplit(train=train, validation=validation, seed=seed, ratio=ratio)


def write_split_manifest(split: DatasetSplit, path: str | Path) -> None:
    manifest = {
        "seed": split.seed,
        "ratio": split.ratio,
        "counts": {"train": len(split.train), "validation": len(split.validation)},
        "train_ids": [r.id for r in split.train],
        "validation_ids": [r.id for r in split.validation],
    }
    Path(path).write_text(json.dumps(manifest, indent=2), encoding="utf-8")


def boundary_to_tags(text: str, boundary_index: int) -> TokenTagSequence:
    """Convert a boundary position into per-token 0/1 tags.

    Tokens before the boundary are human (0), the rest machine (1).
    boundary 0 means fully machine, boundary == token count fully human.
    """
    tokens = text.split()
    if not 0 <= boundary_index <= len(tokens):
        raise CorpusError(
            f"boundary index {boundary_index} outside [0, {len(tokens)}]"
        )
    tags = [0 if i < boundary_index else 1 for i in range(len(tokens))]
    return TokenTagSequence(tokens=tokens, tags=tags)


@dataclass
class Vocab:
    """Word and character lookup tables with reserved PAD=0 and UNK=1."""

    word_to_id: dict[str, int] = field(default_factory=dict)
    char_to_id: dict[str, int] = field(default_factory=dict)

    @property
    def num_words(self) -> int:
        return len(self.word_to_id) + 2

    @property
    def num_chars(self) -> int:
        return len(self.char_to_id) + 2

    def word_id(self, token: str) -> int:
        return self.word_to_id.get(token, UNK_ID)

    def char_id(self, ch: str) -> int:
        return self.char_to_id.get(ch, UNK_ID)

    def to_dict(self) -> dict:
        return {"word_to_id": self.word_to_id, "char_to_id": self.char_to_id}

    @classmethod
    def from_dict(cls, obj: dict) -> "Vocab":
        return cls(word_to_id=dict(obj["word_to_id"]), char_to_id=dict(obj["char_to_id"]))


def build_vocab(records: list[TextRecord], min_freq: int = 1) -> Vocab:
    """Build deterministic word/char tables from whitespace-tokenized text.

    Words below min_freq map to UNK; every character seen is retained.
    Ids are assigned by descending frequency, ties broken lexicographically.
    """
    if not records:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    word_counts: Counter = Counter()
    char_counts: Counter = Counter()
    for rec in records:
        for tok in rec.text.split():
            word_counts[tok] += 1
            char_counts.update(tok)
    words = sorted(
        (w for w, c in word_counts.items() if c >= min_freq),
        key=lambda w: (-word_counts[w], w),
    )
    chars = sorted(char_counts, key=lambda c: (-char_counts[c], c))
    word_to_id = {w: i + 2 for i, w in enumerate(words)}
    char_to_id = {c: i + 2 for i, c in enumerate(chars)}
    return Vocab(word_to_id=word_to_id, char_to_id=char_to_id)
