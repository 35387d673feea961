"""Sequence-level answer metrics: positional overlap, BLEU-1, ROUGE-L.

All three operate on whitespace tokens after a shared normalization
(lowercase, punctuation removed). Overlap accuracy is aligned to the
ground-truth length: predictions are truncated or padded with
mismatches so that verbose but correct prefixes are not punished and
short answers are.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_tokens(text: str) -> list[str]:
    return text.lower().translate(_PUNCT_TABLE).split()


def overlap_accuracy(pred: str, gt: str) -> float:
    """Fraction of ground-truth positions the prediction matches.

    With gt tokens a_1..a_n this is (1/n) * sum_i 1[pred_i == a_i],
    where pred is cut or padded to length n (padding never matches).
    """
    gt_tokens = normalize_tokens(gt)
    if not gt_tokens:
        raise ValueError("overlap_accuracy: empty ground truth")
    pred_tokens = normalize_tokens(pred)
    n = len(gt_tokens)
    hits = sum(
        1 for i in range(n) if i < len(pred_tokens) and pred_tokens[i] == gt_tokens[i]
    )
    return hits / n


def bleu1(pred: str, gt: str) -> float:
    """Unigram BLEU: clipped precision times the brevity penalty."""
    pred_tokens = normalize_tokens(pred)
    gt_tokens = normalize_tokens(gt)
    if not gt_tokens:
        raise ValueError("bleu1: empty reference")
    if not pred_tokens:
        return 0.0
    ref_counts: dict[str, int] = {}
    for tok in gt_tokens:
        ref_counts[tok] = ref_counts.get(tok, 0) + 1
    cand_counts: dict[str, int] = {}
    for tok in pred_tokens:
        cand_counts[tok] = cand_counts.get(tok, 0) + 1
    clipped = sum(min(c, ref_counts.get(tok, 0)) for tok, c in cand_counts.items())
    precision = clipped / len(pred_tokens)
    c, r = len(pred_tokens), len(gt_tokens)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return precision * bp


def _lcs_length(a: list[str], b: list[str]) -> int:
    """Classic O(len(a)*len(b)) longest-common-subsequence table."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    return prev[len(b)]


def rougeL_f1(pred: str, gt: str) -> float:
    """LCS-based F-measure with precision and recall weighted equally."""
    pred_tokens = normalize_tokens(pred)
    gt_tokens = normalize_tokens(gt)
    if not gt_tokens:
        raise ValueError("rougeL_f1: empty reference")
    if not pred_tokens:
        return 0.0
    lcs = _lcs_length(pred_tokens, gt_tokens)
    if lcs == 0:
        return 0.0
    p = lcs / len(pred_tokens)
    r = lcs / len(gt_tokens)
    return 2.0 * p * r / (p + r)


@dataclass
class MetricReport:
    overlap_accuracy: float
    bleu1: float
    rougeL_f1: float
    n_pairs: int

    def as_dict(self) -> dict:
        return {
            "overlap_accuracy": self.overlap_accuracy,
            "bleu1": self.bleu1,
            "rougeL_f1": self.rougeL_f1,
            "n_pairs": self.n_pairs,
        }


def evaluate_pairs(preds: list[str], gts: list[str]) -> MetricReport:
    """Mean of each metric over aligned (prediction, ground truth) pairs."""
    if len(preds) != len(gts):
        raise ValueError("prediction/ground-truth count mismatch")
    if not preds:
        raise ValueError("no pairs to evaluate")
    n = len(preds)
    return MetricReport(
        overlap_accuracy=sum(overlap_accuracy(p, g) for p, g in zip(preds, gts)) / n,
        bleu1=sum(bleu1(p, g) for p, g in zip(preds, gts)) / n,
        rougeL_f1=sum(rougeL_f1(p, g) for p, g in zip(preds, gts)) / n,
        n_pairs=n,
    )
