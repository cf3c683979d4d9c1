"""Linear-chain conditional random field over tag sequences.

Scores a whole tag path as start + per-token emissions + adjacent-tag
transitions + end, normalizes exactly with the forward algorithm in
log space, and decodes with Viterbi. All score functions are
differentiable torch ops so the negative log-likelihood can train both
the transition table and the emission network beneath it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import Tensor, nn


@dataclass
class CrfParams:
    """Transition table plus explicit start/end scores.

    transitions[i, j] is the score of moving from tag i to tag j. Zero
    start/end scores recover the boundary-free variant.
    """

    transitions: Tensor
    start_scores: Tensor
    end_scores: Tensor

    def __post_init__(self):
        self.transitions = torch.as_tensor(self.transitions)
        self.start_scores = torch.as_tensor(self.start_scores)
        self.end_scores = torch.as_tensor(self.end_scores)
        k = self.transitions.shape[0]
        if self.transitions.shape != (k, k):
            raise ValueError(f"transitions must be square, got {tuple(self.transitions.shape)}")
        if self.start_scores.shape != (k,) or self.end_scores.shape != (k,):
            raise ValueError("start/end score vectors must have one entry per tag")

    @property
    def num_tags(self) -> int:
        return self.transitions.shape[0]

    @classmethod
    def zeros(cls, num_tags: int, dtype=torch.float32) -> "CrfParams":
        return cls(
            transitions=torch.zeros(num_tags, num_tags, dtype=dtype),
            start_scores=torch.zeros(num_tags, dtype=dtype),
            end_scores=torch.zeros(num_tags, dtype=dtype),
        )


def _check_emissions(emissions: Tensor, params: CrfParams) -> Tensor:
    emissions = torch.as_tensor(emissions)
    if emissions.ndim != 2:
        raise ValueError(f"emissions must be a T x K matrix, got shape {tuple(emissions.shape)}")
    if emissions.shape[0] < 1:
        raise ValueError("need at least one emission row")
    if emissions.shape[1] != params.num_tags:
        raise ValueError(
            f"emissions have {emissions.shape[1]} tags, params have {params.num_tags}"
        )
    return emissions


def score_sequence(emissions: Tensor, tags: Sequence[int], params: CrfParams) -> Tensor:
    """Unnormalized score of one tag path."""
    emissions = _check_emissions(emissions, params)
    tags = list(tags)
    if len(tags) != emissions.shape[0]:
        raise ValueError(f"{len(tags)} tags for {emissions.shape[0]} emission rows")
    if any(not 0 <= t < params.num_tags for t in tags):
        raise ValueError("tag index out of range")
    score = params.start_scores[tags[0]] + emissions[0, tags[0]]
    for i in range(1, len(tags)):
        score = score + params.transitions[tags[i - 1], tags[i]] + emissions[i, tags[i]]
    return score + params.end_scores[tags[-1]]


def log_partition(emissions: Tensor, params: CrfParams) -> Tensor:
    """log sum over all tag paths of exp(path score), via the forward
    recursion in log space."""
    emissions = _check_emissions(emissions, params)
    alpha = params.start_scores + emissions[0]
    for t in range(1, emissions.shape[0]):
        # alpha[i] + transitions[i, j] summed out over i, then emit j.
        alpha = torch.logsumexp(alpha.unsqueeze(1) + params.transitions, dim=0) + emissions[t]
    return torch.logsumexp(alpha + params.end_scores, dim=0)


def nll(emissions: Tensor, tags: Sequence[int], params: CrfParams) -> Tensor:
    """Negative log-likelihood of the gold path: log Z minus path score."""
    return log_partition(emissions, params) - score_sequence(emissions, tags, params)


def viterbi(emissions: Tensor, params: CrfParams) -> list[int]:
    """Highest-scoring tag path; ties prefer the lower tag index."""
    emissions = _check_emissions(emissions, params)
    scores = emissions.detach().cpu().double().numpy()
    trans = params.transitions.detach().cpu().double().numpy()
    start = params.start_scores.detach().cpu().double().numpy()
    end = params.end_scores.detach().cpu().double().numpy()

    n = scores.shape[0]
    trellis = start + scores[0]
    backptr = np.zeros((n, params.num_tags), dtype=np.int64)
    for t in range(1, n):
        candidate = trellis[:, None] + trans  # [prev, next]
        backptr[t] = candidate.argmax(axis=0)  # first max -> lowest prev tag
        trellis = candidate.max(axis=0) + scores[t]
    trellis = trellis + end
    path = [int(trellis.argmax())]
    for t in range(n - 1, 0, -1):
        path.append(int(backptr[t, path[-1]]))
    path.reverse()
    return path


class LinearChainCrf(nn.Module):
    """Trainable CRF layer; transitions start at zero so the initial
    decode matches plain per-row argmax."""

    def __init__(self, num_tags: int):
        super().__init__()
        self.num_tags = num_tags
        self.transitions = nn.Parameter(torch.zeros(num_tags, num_tags))
        self.start_scores = nn.Parameter(torch.zeros(num_tags))
        self.end_scores = nn.Parameter(torch.zeros(num_tags))

    @property
    def params(self) -> CrfParams:
        return CrfParams(self.transitions, self.start_scores, self.end_scores)

    def nll(self, emissions: Tensor, tags: Sequence[int]) -> Tensor:
        return nll(emissions, tags, self.params)

    def decode(self, emissions: Tensor) -> list[int]:
        return viterbi(emissions, self.params)
