"""Accuracy reporting over the balanced test split, broken out by shot group.

Every class contributes a per-class accuracy; many/medium/few accuracies are
instance-weighted means over the classes in each bucket, and overall is the
instance-weighted mean over everything. Because the test split is balanced,
instance weighting and class averaging agree, and the three bucket
accuracies recombine exactly to overall.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adapter import AdapterParams, adapted_text, adapted_visual
from .autodiff import Graph, Tensor
from .contrastive import ClassBank, predict_batch
from .data import SHOT_FEW, SHOT_MANY, SHOT_MEDIUM, LongTailedDataset, shot_split
from .encoders import PromptSpec, encode_text, encode_visual

SPLITS = (SHOT_MANY, SHOT_MEDIUM, SHOT_FEW)


@dataclass(eq=False)
class Metrics:
    """Accuracies in [0, 1]; a bucket with no classes reports nan."""

    overall: float
    many: float
    medium: float
    few: float
    per_class: np.ndarray
    n_eval: dict[str, int]

    def to_record(self) -> dict:
        return {
            "overall": self.overall,
            "many": self.many,
            "medium": self.medium,
            "few": self.few,
            "per_class": [float(a) for a in self.per_class],
            "n_eval": dict(self.n_eval),
        }

    def summary(self) -> dict:
        return {"overall": self.overall, "many": self.many,
                "medium": self.medium, "few": self.few}


def metrics_from_predictions(predictions, labels, class_counts) -> Metrics:
    """Score predicted class ids against true labels, bucketed by shot group."""
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(labels, dtype=np.int64)
    counts = np.asarray(class_counts, dtype=np.int64)
    if preds.shape != truth.shape:
        raise ValueError(f"{preds.shape} predictions vs {truth.shape} labels")
    k = counts.shape[0]
    tags = shot_split(counts)
    hits = preds == truth

    per_class = np.empty(k)
    rows_per_class = np.empty(k, dtype=np.int64)
    for cls in range(k):
        mask = truth == cls
        rows_per_class[cls] = int(mask.sum())
        per_class[cls] = float(hits[mask].mean()) if rows_per_class[cls] else np.nan

    def bucket(tag: str) -> tuple[float, int]:
        members = [c for c in range(k) if tags[c] == tag]
        n = int(rows_per_class[members].sum()) if members else 0
        if n == 0:
            return float("nan"), 0
        weighted = sum(per_class[c] * rows_per_class[c] for c in members)
        return float(weighted / n), n

    many, n_many = bucket(SHOT_MANY)
    medium, n_medium = bucket(SHOT_MEDIUM)
    few, n_few = bucket(SHOT_FEW)
    overall = float(hits.mean())
    return Metrics(overall, many, medium, few, per_class,
                   {SHOT_MANY: n_many, SHOT_MEDIUM: n_medium, SHOT_FEW: n_few})


def build_class_bank(params, adapter: AdapterParams | None,
                     prompt: PromptSpec = PromptSpec()) -> ClassBank:
    """Text embedding per class, through the adapter when it covers language."""
    class_ids = np.arange(params.config.num_classes)
    g = Graph()
    if adapter is not None and adapter.adapts_language:
        rows = adapted_text(g, params, adapter, class_ids, prompt)
    else:
        rows = encode_text(g, params, class_ids, prompt)
    return ClassBank(rows.data, class_ids)


def evaluate(params, adapter: AdapterParams | None, dataset: LongTailedDataset,
             tau: float = 1.0, prompt: PromptSpec = PromptSpec()) -> Metrics:
    """Zero-shot-rule accuracy of the (optionally adapted) model on the test split."""
    bank = build_class_bank(params, adapter, prompt)
    g = Graph()
    x = Tensor(dataset.test_features)
    if adapter is not None and adapter.adapts_visual:
        rows = adapted_visual(g, params, adapter, x)
    else:
        rows = encode_visual(g, params, x)
    predictions = predict_batch(rows.data, bank, tau)
    return metrics_from_predictions(predictions, dataset.test_labels,
                                    dataset.class_counts)
