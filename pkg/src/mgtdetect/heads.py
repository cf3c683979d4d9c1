"""Classification head: encoder layer selection and the fully connected block.

The head consumes per-layer hidden states from a sequence encoder,
selects features from the sequence-initial position (last layer, or the
last k layers concatenated), and runs them through repeated
linear -> normalization -> tanh -> dropout(0.5) blocks ending in a
linear output layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from . import corpus


@dataclass(frozen=True)
class LastLayer:
    """Use the final encoder layer only."""


@dataclass(frozen=True)
class ConcatLastK:
    """Concatenate the sequence-initial vectors of the last k layers."""

    k: int = 4

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


LayerSelection = Union[LastLayer, ConcatLastK]


def parse_selection(name: "str | LayerSelection") -> LayerSelection:
    if not isinstance(name, str):
        return name
    key = name.lower().replace("-", "_")
    if key in ("last", "last_layer"):
        return LastLayer()
    if key.startswith("concat_last_"):
        return ConcatLastK(k=int(key.rsplit("_", 1)[1]))
    raise ValueError(f"unknown layer selection {name!r}")


def selection_name(selection: LayerSelection) -> str:
    if isinstance(selection, LastLayer):
        return "last_layer"
    return f"concat_last_{selection.k}"


def selection_depth(selection: LayerSelection) -> int:
    return 1 if isinstance(selection, LastLayer) else selection.k


def extract_features(
    hidden_states: Sequence[Tensor],
    selection: LayerSelection,
    feature_dropout: float = 0.3,
    training: bool = False,
) -> Tensor:
    """Pull the whole-sequence feature vector from per-layer hidden states.

    hidden_states is one [batch, seq, dim] tensor per encoder layer,
    final layer last. The sequence-initial position serves as the
    sequence representation. Feature dropout applies at train time only.
    """
    k = selection_depth(selection)
    if k > len(hidden_states):
        raise ValueError(f"selection needs {k} layers, encoder provides {len(hidden_states)}")
    if isinstance(selection, LastLayer):
        features = hidden_states[-1][:, 0]
    else:
        features = torch.cat([hidden_states[-i][:, 0] for i in range(1, k + 1)], dim=-1)
    return F.dropout(features, p=feature_dropout, training=training)


class FeatureExtractor(nn.Module):
    def __init__(self, selection: LayerSelection, feature_dropout: float = 0.3):
        super().__init__()
        self.selection = selection
        self.feature_dropout = feature_dropout

    def forward(self, hidden_states: Sequence[Tensor]) -> Tensor:
        return extract_features(
            hidden_states, self.selection, self.feature_dropout, training=self.training
        )


@dataclass
class FCBlockConfig:
    """Fully connected head recipe: repeated
    linear -> norm -> tanh -> dropout(0.5) blocks plus a final linear."""

    hidden_sizes: list[int] = field(default_factory=lambda: [256, 64])
    output_size: int = 1
    dropout: float = 0.5
    feature_dropout: float = 0.3
    activation: str = "tanh"
    norm: str = "layer"  # or "batch"

    def __post_init__(self):
        if not self.hidden_sizes or any(h <= 0 for h in self.hidden_sizes):
            raise ValueError(f"hidden_sizes must be non-empty and positive, got {self.hidden_sizes}")
        for name in ("dropout", "feature_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {p}")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.norm not in ("layer", "batch"):
            raise ValueError(f"norm must be 'layer' or 'batch', got {self.norm!r}")
        if self.output_size < 1:
            raise ValueError(f"output_size must be >= 1, got {self.output_size}")


def _norm_layer(kind: str, width: int) -> nn.Module:
    return nn.LayerNorm(width) if kind == "layer" else nn.BatchNorm1d(width)


class FCBlock(nn.Module):
    """The head network built from an FCBlockConfig."""

    def __init__(self, in_features: int, config: FCBlockConfig):
        super().__init__()
        self.config = config
        self.in_features = in_features
        layers: list[nn.Module] = []
        width = in_features
        for hidden in config.hidden_sizes:
            layers += [
                nn.Linear(width, hidden),
                _norm_layer(config.norm, hidden),
                nn.Tanh(),
                nn.Dropout(config.dropout),
            ]
            width = hidden
        layers.append(nn.Linear(width, config.output_size))
        self.net = nn.Sequential(*layers)

    def forward(self, features: Tensor) -> Tensor:
        if features.shape[-1] != self.in_features:
            raise ValueError(
                f"feature dimension {features.shape[-1]} does not match head input {self.in_features}"
            )
        return self.net(features)


@dataclass
class ClassifierOutput:
    """Raw logits plus, for the binary head, the logistic probability."""

    logits: Tensor
    probability: Optional[Tensor] = None


def fc_forward(features: Tensor, block: FCBlock, mode: str = "eval") -> ClassifierOutput:
    """Run the head in train or eval mode. Binary heads (output size 1)
    also expose the logistic probability of the positive class."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    was_training = block.training
    block.train(mode == "train")
    try:
        logits = block(features)
    finally:
        block.train(was_training)
    probability = None
    if block.config.output_size == 1:
        probability = torch.sigmoid(logits.squeeze(-1))
    return ClassifierOutput(logits=logits, probability=probability)


def predict(output: ClassifierOutput, task: str, threshold: float = 0.5):
    """Map head output to labels: binary thresholds the probability,
    multiclass takes the argmax (ties to the lowest index)."""
    logits = output.logits.detach().cpu().numpy()
    single = logits.ndim == 1
    logits = np.atleast_2d(logits)
    if task in (corpus.TASK_A_MONO, corpus.TASK_A_MULTI, "binary"):
        if logits.shape[-1] != 1:
            raise ValueError(f"binary task expects output size 1, got {logits.shape[-1]}")
        if output.probability is None:
            raise ValueError("binary prediction needs the logistic probability")
        probs = np.atleast_1d(output.probability.detach().cpu().numpy())
        labels = (probs >= threshold).astype(int)
    elif task in (corpus.TASK_B, "multiclass"):
        if logits.shape[-1] != len(corpus.MULTICLASS_LABELS):
            raise ValueError(
                f"attribution task expects output size {len(corpus.MULTICLASS_LABELS)}, "
                f"got {logits.shape[-1]}"
            )
        labels = logits.argmax(axis=-1)
    else:
        raise ValueError(f"unknown task {task!r}")
    return int(labels[0]) if single else labels
