"""Evaluation metrics: concordance index for survival, AUROC and AUPRC for
binary response.

Conventions, fixed so results are reproducible:
- Concordance pairs (i, j) are comparable when i's event is observed and
  t_i < t_j; risk ties earn half credit. Higher risk should mean shorter
  survival.
- AUROC is the normalized Mann-Whitney statistic with half credit for
  score ties.
- AUPRC is average precision over score-sorted thresholds (no linear
  interpolation), with tied scores collapsed into one threshold.
"""

from __future__ import annotations

import numpy as np

__all__ = ["concordance_index", "auroc", "auprc"]


def concordance_index(times, event_observed, risk_scores) -> float:
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(event_observed, dtype=bool)
    r = np.asarray(risk_scores, dtype=np.float64)
    if not (len(t) == len(e) == len(r)):
        raise ValueError("concordance_index: inputs must have equal length")
    # comparable: row i observed and strictly earlier than column j
    comparable = e[:, None] & (t[:, None] < t[None, :])
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise ValueError("concordance_index: no comparable pairs")
    higher = r[:, None] > r[None, :]
    tied = r[:, None] == r[None, :]
    score = (higher & comparable).sum() + 0.5 * (tied & comparable).sum()
    return float(score / n_pairs)


def auroc(labels, scores) -> float:
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise ValueError("auroc: inputs must have equal length")
    pos = s[y == 1]
    neg = s[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("auroc: both classes must be present")
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(pos) * len(neg)))


def auprc(labels, scores) -> float:
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if len(y) != len(s):
        raise ValueError("auprc: inputs must have equal length")
    n_pos = int((y == 1).sum())
    if n_pos == 0:
        raise ValueError("auprc: at least one positive required")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    # one threshold per distinct score: last position of each tie group
    boundaries = np.nonzero(np.diff(s_sorted) != 0)[0]
    cut_ends = np.concatenate([boundaries, [len(s_sorted) - 1]])
    tp = np.cumsum(y_sorted == 1)[cut_ends]
    predicted = cut_ends + 1
    precision = tp / predicted
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev_recall) * precision))
