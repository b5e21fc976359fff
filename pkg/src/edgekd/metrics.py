"""Accuracy metrics and model-size/complexity summaries."""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .errors import ParameterError
from .models import Model, ModelSpec, count_flops, count_params, forward, serialized_len
from .numerics import as_matrix


def topk_accuracy(logits, labels, k: int) -> float:
    """Fraction of rows whose label is among the k largest logits.

    Ties rank the lower class index first, so the ordering is total and
    platform independent.
    """
    z = as_matrix(logits, "logits")
    n, c = z.shape
    if not 1 <= k <= c:
        raise ParameterError(f"k must lie in [1, {c}], got {k}")
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (n,):
        raise ParameterError(f"labels shape {lab.shape} does not match batch {n}")
    # stable argsort on -logits keeps lower indices first among ties
    order = np.argsort(-z, axis=1, kind="stable")
    hits = (order[:, :k] == lab[:, None]).any(axis=1)
    return float(hits.mean())


def improvement(acc_model: float, acc_baseline: float) -> float:
    """Accuracy delta in percentage points, reported to 2 decimals."""
    if not (0.0 <= acc_model <= 1.0 and 0.0 <= acc_baseline <= 1.0):
        raise ParameterError("accuracies must lie in [0, 1]")
    return round(100.0 * (acc_model - acc_baseline), 2)


def _counts_of(spec_or_counts):
    """Accept a ModelSpec or a raw (params, flops[, bytes]) tuple."""
    if isinstance(spec_or_counts, ModelSpec):
        return (count_params(spec_or_counts), count_flops(spec_or_counts),
                serialized_len(spec_or_counts))
    t = tuple(spec_or_counts)
    if len(t) == 2:
        return (float(t[0]), float(t[1]), None)
    return (float(t[0]), float(t[1]), float(t[2]))


def compression_summary(teacher, student) -> dict:
    """Teacher-vs-student size ratios.

    Each argument is a ModelSpec or a raw (param_count, flops[, bytes]) tuple.
    param_ratio and flop_reduction_pct are rounded to 1 decimal; byte_ratio is
    None when byte counts are unavailable.
    """
    tp, tf, tb = _counts_of(teacher)
    sp, sf, sb = _counts_of(student)
    byte_ratio = None
    if tb is not None and sb is not None:
        byte_ratio = round(tb / sb, 1)
    return {
        "param_ratio": round(tp / sp, 1),
        "flop_reduction_pct": round(100.0 * (1.0 - sf / tf), 1),
        "byte_ratio": byte_ratio,
    }


def evaluate_topk(model: Model, dataset: Dataset, ks) -> dict:
    """Per-(slot, k) top-k accuracy of a model on a dataset."""
    result = forward(model, dataset.features)
    out = {}
    for s, logits in enumerate(result.logits_per_slot):
        for k in ks:
            out[(s, k)] = topk_accuracy(logits, dataset.labels[:, s], k)
    return out
