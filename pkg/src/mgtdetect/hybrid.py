"""Token tagger for locating the human-to-machine boundary.

Each whitespace token gets a character-CNN feature vector concatenated
with a word embedding; the sequence runs through a stacked bidirectional
LSTM and the fully connected head to produce per-token emission scores
over {human, machine}. Decoding is either rowwise argmax or Viterbi
under a linear-chain CRF.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import Tensor, nn

from . import crf as crf_mod
from .corpus import PAD_ID, TokenTagSequence, Vocab
from .heads import FCBlock, FCBlockConfig


@dataclass
class HybridConfig:
    """Tagger hyperparameters; defaults follow the boundary-task recipe."""

    char_emb_dim: int = 10
    char_conv_kernel: int = 3
    char_conv_filters: int = 20
    char_dropout: float = 0.5
    word_emb_dim: int = 300
    lstm_layers: int = 2
    lstm_hidden: int = 32  # per direction
    fc_hidden: int = 32
    num_tags: int = 2
    max_tokens: int = 1024
    max_chars_per_token: int = 25
    init_range: tuple[float, float] = (-0.5, 0.5)
    norm: str = "layer"

    def __post_init__(self):
        dims = {
            "char_emb_dim": self.char_emb_dim,
            "char_conv_kernel": self.char_conv_kernel,
            "char_conv_filters": self.char_conv_filters,
            "word_emb_dim": self.word_emb_dim,
            "lstm_layers": self.lstm_layers,
            "lstm_hidden": self.lstm_hidden,
            "fc_hidden": self.fc_hidden,
            "num_tags": self.num_tags,
            "max_tokens": self.max_tokens,
            "max_chars_per_token": self.max_chars_per_token,
        }
        for name, value in dims.items():
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.max_chars_per_token < self.char_conv_kernel:
            raise ValueError("max_chars_per_token must be at least the conv kernel size")
        lo, hi = self.init_range
        if not lo < hi:
            raise ValueError(f"init_range must be increasing, got {self.init_range}")


def encode_tokens(
    tokens: Sequence[str], vocab: Vocab, config: HybridConfig
) -> tuple[Tensor, Tensor, Tensor]:
    """Map tokens to (word ids [T], char id matrix [T, C], mask [T]).

    Tokens past max_tokens are dropped; characters past
    max_chars_per_token are dropped and short tokens are padded with
    PAD. Out-of-vocabulary words and characters map to UNK.
    """
    if len(tokens) == 0:
        raise ValueError("cannot encode an empty token list")
    tokens = list(tokens)[: config.max_tokens]
    word_ids = torch.tensor([vocab.word_id(t) for t in tokens], dtype=torch.long)
    char_ids = torch.full(
        (len(tokens), config.max_chars_per_token), PAD_ID, dtype=torch.long
    )
    for i, tok in enumerate(tokens):
        for j, ch in enumerate(tok[: config.max_chars_per_token]):
            char_ids[i, j] = vocab.char_id(ch)
    mask = torch.ones(len(tokens), dtype=torch.long)
    return word_ids, char_ids, mask


class CharCnn(nn.Module):
    """Character embeddings -> 1D convolution -> max pool over window
    positions -> dropout. Padding characters join the convolution, but
    windows starting past the token's real length are excluded from the
    pool."""

    def __init__(self, num_chars: int, config: HybridConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Embedding(num_chars, config.char_emb_dim, padding_idx=PAD_ID)
        self.conv = nn.Conv1d(
            config.char_emb_dim, config.char_conv_filters, config.char_conv_kernel
        )
        self.dropout = nn.Dropout(config.char_dropout)

    def forward(self, char_ids: Tensor) -> Tensor:
        """char_ids [N, C] -> features [N, filters]."""
        lengths = (char_ids != PAD_ID).sum(dim=1).clamp(min=1)
        emb = self.embedding(char_ids).transpose(1, 2)  # [N, emb, C]
        conv = self.conv(emb)  # [N, filters, P]
        positions = torch.arange(conv.shape[-1], device=conv.device)
        valid = positions.unsqueeze(0) < lengths.clamp(max=conv.shape[-1]).unsqueeze(1)
        conv = conv.masked_fill(~valid.unsqueeze(1), float("-inf"))
        pooled = conv.max(dim=2).values
        return self.dropout(pooled)


def char_features(char_ids: Tensor, module: CharCnn, training: bool = False) -> Tensor:
    """Feature vector(s) for one or more padded char-id rows."""
    single = char_ids.ndim == 1
    rows = char_ids.unsqueeze(0) if single else char_ids
    was_training = module.training
    module.train(training)
    try:
        out = module(rows)
    finally:
        module.train(was_training)
    return out.squeeze(0) if single else out


class HybridTagger(nn.Module):
    """Char-CNN + word-embedding BiLSTM tagger emitting per-token scores."""

    def __init__(self, vocab: Vocab, config: Optional[HybridConfig] = None,
                 use_crf: bool = True):
        super().__init__()
        self.config = config = config if config is not None else HybridConfig()
        self.vocab = vocab
        self.word_embedding = nn.Embedding(
            vocab.num_words, config.word_emb_dim, padding_idx=PAD_ID
        )
        self.char_cnn = CharCnn(vocab.num_chars, config)
        lo, hi = config.init_range
        with torch.no_grad():
            self.word_embedding.weight.uniform_(lo, hi)
            self.char_cnn.embedding.weight.uniform_(lo, hi)
            self.word_embedding.weight[PAD_ID].zero_()
            self.char_cnn.embedding.weight[PAD_ID].zero_()
        self.lstm = nn.LSTM(
            config.word_emb_dim + config.char_conv_filters,
            config.lstm_hidden,
            num_layers=config.lstm_layers,
            bidirectional=True,
            batch_first=True,
        )
        self.head = FCBlock(
            2 * config.lstm_hidden,
            FCBlockConfig(
                hidden_sizes=[config.fc_hidden],
                output_size=config.num_tags,
                norm=config.norm,
            ),
        )
        self.crf = crf_mod.LinearChainCrf(config.num_tags) if use_crf else None

    def forward(self, word_ids: Tensor, char_ids: Tensor, mask: Tensor) -> Tensor:
        """Emission scores.

        Accepts a single sequence (word_ids [T], char_ids [T, C],
        mask [T]) or a padded batch ([B, T], [B, T, C], [B, T]);
        returns [T, num_tags] or [B, T, num_tags]. Padded positions
        emit zeros and are excluded from loss and decoding by the mask.
        """
        single = word_ids.ndim == 1
        if single:
            word_ids, char_ids, mask = (
                word_ids.unsqueeze(0), char_ids.unsqueeze(0), mask.unsqueeze(0),
            )
        b, t = word_ids.shape
        word_feat = self.word_embedding(word_ids)
        char_feat = self.char_cnn(char_ids.reshape(b * t, -1)).reshape(b, t, -1)
        feats = torch.cat([word_feat, char_feat], dim=-1)

        lengths = mask.sum(dim=1).cpu()
        packed = nn.utils.rnn.pack_padded_sequence(
            feats, lengths, batch_first=True, enforce_sorted=False
        )
        out, _ = self.lstm(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=t)

        emissions = self.head(out.reshape(b * t, -1)).reshape(b, t, -1)
        emissions = emissions * mask.unsqueeze(-1).to(emissions.dtype)
        return emissions.squeeze(0) if single else emissions

    def loss(self, word_ids: Tensor, char_ids: Tensor, mask: Tensor, tags: Tensor) -> Tensor:
        """Training loss: CRF negative log-likelihood when the CRF layer
        is present, otherwise cross entropy over unmasked tokens."""
        emissions = self.forward(word_ids, char_ids, mask)
        if emissions.ndim == 2:
            emissions, mask, tags = (
                emissions.unsqueeze(0), mask.unsqueeze(0), tags.unsqueeze(0),
            )
        if self.crf is not None:
            total = emissions.new_zeros(())
            for i in range(emissions.shape[0]):
                n = int(mask[i].sum())
                total = total + self.crf.nll(emissions[i, :n], tags[i, :n].tolist())
            return total / emissions.shape[0]
        flat_mask = mask.reshape(-1).bool()
        logits = emissions.reshape(-1, self.config.num_tags)[flat_mask]
        gold = tags.reshape(-1)[flat_mask]
        return nn.functional.cross_entropy(logits, gold)


def decode(
    emissions: Tensor,
    method: str = "direct",
    crf_params: Optional[crf_mod.CrfParams] = None,
) -> list[int]:
    """Tags from a single sequence's emission matrix: per-row argmax
    ('direct') or the Viterbi path ('crf')."""
    emissions = torch.as_tensor(emissions)
    if emissions.ndim != 2:
        raise ValueError(f"decode expects a T x K emission matrix, got {tuple(emissions.shape)}")
    if method == "direct":
        rows = emissions.detach().cpu().numpy()
        return [int(i) for i in rows.argmax(axis=1)]
    if method == "crf":
        if crf_params is None:
            raise ValueError("crf decoding requires transition parameters")
        return crf_mod.viterbi(emissions, crf_params)
    raise ValueError(f"unknown decode method {method!r}")


def tags_to_boundary(tags: Sequence[int]) -> int:
    """Position where machine text starts: index of the first 1 tag, or
    the sequence length when every tag is 0 (fully human)."""
    if len(tags) == 0:
        raise ValueError("empty tag list")
    for i, tag in enumerate(tags):
        if tag == 1:
            return i
    return len(tags)


def tags_to_sequence(tokens: Sequence[str], tags: Sequence[int]) -> TokenTagSequence:
    return TokenTagSequence(tokens=list(tokens), tags=[int(t) for t in tags])
