"""Text preprocessing levels and long-input handling.

Three preprocessing levels (none / light / heavy) and four policies for
fitting long token sequences into an encoder budget: head-only,
tail-only, head-and-tail, and hierarchical chunking with mean/max
pooling of chunk representations.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .validation import check_positive

DEFAULT_TOKEN_BUDGET = 510  # 512 minus two sequence-delimiter slots


class PreprocessLevel(Enum):
    NONE = "none"
    LIGHT = "light"
    HEAVY = "heavy"

    @classmethod
    def parse(cls, name: "str | PreprocessLevel") -> "PreprocessLevel":
        if isinstance(name, cls):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown preprocessing level {name!r}") from None


_CONTROL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")
_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_EMAIL_RE = re.compile(r"[\w.+-]+@[\w-]+\.[\w.-]+")
_STANDALONE_INT_RE = re.compile(r"(?<!\S)\d+(?!\S)")

_ONES = (
    "zero one two three four five six seven eight nine ten eleven twelve "
    "thirteen fourteen fifteen sixteen seventeen eighteen nineteen"
).split()
_TENS = ("", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety")
_SCALES = ("", "thousand", "million", "billion", "trillion", "quadrillion", "quintillion")


def _three_digits_to_words(n: int) -> str:
    parts = []
    if n >= 100:
        parts.append(_ONES[n // 100] + " hundred")
        n %= 100
    if n >= 20:
        word = _TENS[n // 10]
        if n % 10:
            word += "-" + _ONES[n % 10]
        parts.append(word)
    elif n > 0:
        parts.append(_ONES[n])
    return " ".join(parts)


def integer_to_words(n: int) -> str:
    """Spell a non-negative base-10 integer in English words."""
    if n < 0:
        raise ValueError("only non-negative integers are spelled out")
    if n == 0:
        return "zero"
    groups = []
    while n > 0:
        groups.append(n % 1000)
        n //= 1000
    if len(groups) > len(_SCALES):
        # Past the named scales: spell digit by digit.
        digits = "".join(str(d).zfill(3) for d in reversed(groups)).lstrip("0")
        return " ".join(_ONES[int(d)] for d in digits)
    parts = []
    for i in range(len(groups) - 1, -1, -1):
        if groups[i] == 0:
            continue
        words = _three_digits_to_words(groups[i])
        if _SCALES[i]:
            words += " " + _SCALES[i]
        parts.append(words)
    return " ".join(parts)


def _light(text: str) -> str:
    # Lowercase, keep letters and whitespace only, collapse whitespace.
    lowered = text.lower()
    kept = "".join(ch for ch in lowered if ch.isalpha() or ch.isspace())
    return " ".join(kept.split())


def _heavy(text: str) -> str:
    for tok in _CONTROL_TOKENS:
        text = text.replace(tok, " ")
    text = _URL_RE.sub(" ", text)
    text = _EMAIL_RE.sub(" ", text)
    text = _STANDALONE_INT_RE.sub(lambda m: integer_to_words(int(m.group())), text)
    return _light(text)


def preprocess(text: str, level: "PreprocessLevel | str") -> str:
    """Apply a preprocessing level. NONE is byte-identical; LIGHT
    lowercases and drops special characters and digits; HEAVY
    additionally strips model-control tokens, emails/URLs, and spells
    standalone integers as words."""
    level = PreprocessLevel.parse(level)
    if level is PreprocessLevel.NONE:
        return text
    if level is PreprocessLevel.LIGHT:
        return _light(text)
    return _heavy(text)


@dataclass(frozen=True)
class HeadOnly:
    """Keep the first `budget` tokens."""


@dataclass(frozen=True)
class TailOnly:
    """Keep the last `budget` tokens."""


@dataclass(frozen=True)
class HeadAndTail:
    """Keep the first head_len and the last tail_len tokens."""

    head_len: int = 128
    tail_len: int = 384


@dataclass(frozen=True)
class Hierarchical:
    """Split into fixed-size chunks, encode each, pool representations."""

    chunk_len: int = 512
    pool: str = "mean"

    def __post_init__(self):
        check_positive(self.chunk_len, "chunk_len")
        if self.pool not in ("mean", "max"):
            raise ValueError(f"pool must be 'mean' or 'max', got {self.pool!r}")


TruncationStrategy = Union[HeadOnly, TailOnly, HeadAndTail, Hierarchical]

_STRATEGY_NAMES = {
    "head_only": HeadOnly,
    "tail_only": TailOnly,
    "head_and_tail": HeadAndTail,
    "hierarchical": Hierarchical,
}


def parse_strategy(name: "str | TruncationStrategy", pool: str = "mean") -> TruncationStrategy:
    """Resolve a config key (`longtext.strategy`, `longtext.pool`) into a
    strategy object."""
    if not isinstance(name, str):
        return name
    key = name.lower().replace("-", "_")
    if key not in _STRATEGY_NAMES:
        raise ValueError(f"unknown long-text strategy {name!r}")
    if key == "hierarchical":
        return Hierarchical(pool=pool)
    return _STRATEGY_NAMES[key]()


def strategy_name(strategy: TruncationStrategy) -> str:
    for name, cls in _STRATEGY_NAMES.items():
        if isinstance(strategy, cls):
            return name
    raise ValueError(f"unknown strategy object {strategy!r}")


def truncate(
    token_ids: Sequence[int],
    strategy: TruncationStrategy,
    budget: int | None = None,
) -> list[int]:
    """Apply a truncation strategy to a token-id sequence.

    The default budget is 510 content tokens; for head-and-tail the
    budget is head_len + tail_len (an explicit budget must agree).
    Inputs no longer than the budget pass through unchanged.
    """
    ids = list(token_ids)
    if isinstance(strategy, HeadAndTail):
        pair_budget = strategy.head_len + strategy.tail_len
        if budget is not None and budget != pair_budget:
            raise ValueError(
                f"head_len + tail_len = {pair_budget} must equal budget {budget}"
            )
        budget = pair_budget
    elif isinstance(strategy, (HeadOnly, TailOnly)):
        budget = DEFAULT_TOKEN_BUDGET if budget is None else budget
    else:
        raise ValueError(
            f"unknown truncation strategy {strategy!r}; hierarchical inputs go through chunk()"
        )
    check_positive(budget, "budget")
    if len(ids) <= budget:
        return ids
    if isinstance(strategy, HeadOnly):
        return ids[:budget]
    if isinstance(strategy, TailOnly):
        return ids[-budget:]
    return ids[: strategy.head_len] + ids[-strategy.tail_len :]


def chunk(token_ids: Sequence[int], chunk_len: int = 512) -> list[list[int]]:
    """Split ids into ceil(L / chunk_len) chunks; concatenation of the
    chunks reproduces the input."""
    check_positive(chunk_len, "chunk_len")
    ids = list(token_ids)
    if not ids:
        raise ValueError("cannot chunk an empty sequence")
    return [ids[i : i + chunk_len] for i in range(0, len(ids), chunk_len)]


def pool_chunks(chunk_vectors: Sequence[Sequence[float]], mode: str) -> np.ndarray:
    """Merge per-chunk representations elementwise by mean or max."""
    if len(chunk_vectors) == 0:
        raise ValueError("need at least one chunk vector")
    arrays = [np.asarray(v, dtype=np.float64) for v in chunk_vectors]
    dim = arrays[0].shape
    for a in arrays:
        if a.shape != dim:
            raise ValueError(f"chunk vector dimension mismatch: {a.shape} vs {dim}")
    stacked = np.stack(arrays)
    if mode == "mean":
        return stacked.mean(axis=0)
    if mode == "max":
        return stacked.max(axis=0)
    raise ValueError(f"unknown pooling mode {mode!r}")
