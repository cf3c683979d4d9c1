"""Sequence encoders behind a common interface.

The classifier treats the encoder as an injected component: text in,
per-layer hidden states out. `TinyEncoder` is a small self-contained
encoder (hashing tokenizer, mixing layers) used for tests and
desk-scale runs; `PretrainedEncoder` adapts a HuggingFace model when
the `transformers` extra is installed.
"""

from __future__ import annotations

import zlib
from typing import Iterator, Optional, Sequence

import torch
from torch import Tensor, nn

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3
NUM_RESERVED = 4


class SequenceEncoder(nn.Module):
    """Interface: tokenize text to content ids, encode padded id batches
    into one hidden-state tensor per layer (final layer last)."""

    hidden_size: int
    num_layers: int
    max_len: Optional[int]  # None when the encoder has no hard length limit
    name: str

    def tokenize(self, text: str) -> list[int]:
        raise NotImplementedError

    def forward(self, ids: Tensor, mask: Tensor) -> list[Tensor]:
        raise NotImplementedError

    def layer_parameters(self, last_k: int) -> Iterator[nn.Parameter]:
        """Parameters of the last k layers, the ones a fine-tune phase updates."""
        raise NotImplementedError


class _MixingLayer(nn.Module):
    """Cheap attention substitute: every position mixes with the masked
    mean of the sequence, so the initial position aggregates content."""

    def __init__(self, hidden_size: int):
        super().__init__()
        self.local = nn.Linear(hidden_size, hidden_size)
        self.pooled = nn.Linear(hidden_size, hidden_size)
        self.norm = nn.LayerNorm(hidden_size)

    def forward(self, h: Tensor, mask: Tensor) -> Tensor:
        weights = mask.unsqueeze(-1).to(h.dtype)
        denom = weights.sum(dim=1).clamp(min=1.0)
        mean = (h * weights).sum(dim=1) / denom
        return self.norm(torch.tanh(self.local(h) + self.pooled(mean).unsqueeze(1)))


class TinyEncoder(SequenceEncoder):
    """Small random-feature encoder with a deterministic hashing tokenizer.

    No pretraining and no hard length limit; useful as a drop-in encoder
    for unit tests and CPU-scale experiments.
    """

    def __init__(self, hidden_size: int = 32, num_layers: int = 4,
                 vocab_size: int = 4096, seed: int = 0):
        super().__init__()
        if num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.vocab_size = vocab_size
        self.seed = seed
        self.max_len = None
        self.name = f"tiny-{hidden_size}x{num_layers}"
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.embedding = nn.Embedding(vocab_size, hidden_size, padding_idx=PAD_ID)
            self.layers = nn.ModuleList(_MixingLayer(hidden_size) for _ in range(num_layers))

    def tokenize(self, text: str) -> list[int]:
        span = self.vocab_size - NUM_RESERVED
        return [
            NUM_RESERVED + zlib.crc32(tok.encode("utf-8")) % span
            for tok in text.split()
        ]

    def forward(self, ids: Tensor, mask: Tensor) -> list[Tensor]:
        h = self.embedding(ids)
        states = []
        for layer in self.layers:
            h = layer(h, mask)
            states.append(h)
        return states

    def layer_parameters(self, last_k: int) -> Iterator[nn.Parameter]:
        if last_k > self.num_layers:
            raise ValueError(f"asked for {last_k} layers, encoder has {self.num_layers}")
        for layer in list(self.layers)[-last_k:]:
            yield from layer.parameters()


class PretrainedEncoder(SequenceEncoder):
    """Adapter for HuggingFace masked-language-model encoders."""

    def __init__(self, model_name: str):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ImportError(
                "pretrained encoders need the 'transformers' package (pip install mgtdetect[hf])"
            ) from exc
        self.name = model_name
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModel.from_pretrained(model_name)
        self.hidden_size = self.model.config.hidden_size
        self.num_layers = self.model.config.num_hidden_layers
        self.max_len = min(self.tokenizer.model_max_length, 512)

    def tokenize(self, text: str) -> list[int]:
        return self.tokenizer.encode(text, add_special_tokens=False)

    def forward(self, ids: Tensor, mask: Tensor) -> list[Tensor]:
        out = self.model(input_ids=ids, attention_mask=mask, output_hidden_states=True)
        return list(out.hidden_states[1:])  # drop the embedding output

    def layer_parameters(self, last_k: int) -> Iterator[nn.Parameter]:
        base = getattr(self.model, "encoder", None)
        layers = getattr(base, "layer", None)
        if layers is None:
            raise ValueError(f"cannot locate transformer layers on {self.name}")
        if last_k > len(layers):
            raise ValueError(f"asked for {last_k} layers, encoder has {len(layers)}")
        for layer in list(layers)[-last_k:]:
            yield from layer.parameters()

    # Special ids come from the pretrained tokenizer, not the module constants.
    @property
    def special_ids(self) -> tuple[int, int, int]:
        t = self.tokenizer
        return t.cls_token_id, t.sep_token_id, t.pad_token_id


def build_encoder(spec: "str | SequenceEncoder", seed: int = 0) -> SequenceEncoder:
    """Resolve an encoder spec: an encoder instance passes through,
    'tiny' builds a TinyEncoder, anything else is a pretrained model name."""
    if isinstance(spec, SequenceEncoder):
        return spec
    if spec == "tiny" or spec.startswith("tiny-"):
        if spec == "tiny":
            return TinyEncoder(seed=seed)
        dims = spec[len("tiny-"):]
        h, layers = (int(x) for x in dims.split("x"))
        return TinyEncoder(hidden_size=h, num_layers=layers, seed=seed)
    name = spec[len("hf:"):] if spec.startswith("hf:") else spec
    return PretrainedEncoder(name)


def special_ids(encoder: SequenceEncoder) -> tuple[int, int, int]:
    """(cls, sep, pad) ids for an encoder."""
    if isinstance(encoder, PretrainedEncoder):
        return encoder.special_ids
    return CLS_ID, SEP_ID, PAD_ID


def encode_batch(encoder: SequenceEncoder, id_lists: Sequence[Sequence[int]]) -> list[Tensor]:
    """Wrap content-id lists with delimiters, pad to a rectangle, encode."""
    cls_id, sep_id, pad_id = special_ids(encoder)
    rows = [[cls_id, *ids, sep_id] for ids in id_lists]
    width = max(len(r) for r in rows)
    ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
    mask = torch.zeros(len(rows), width, dtype=torch.long)
    for i, row in enumerate(rows):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        mask[i, : len(row)] = 1
    return encoder(ids, mask)
