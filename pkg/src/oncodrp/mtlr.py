"""Discrete-time survival machinery in the multi-task logistic regression
(MTLR) form.

With K time intervals and per-interval logits phi, each of the K+1 event
configurations (event in interval k; or no event within the horizon) gets
an unnormalized score exp(sum_{j>=k} phi_j), the no-event configuration
scoring exp(0). Normalizing over all K+1 configurations yields the event
distribution; the survival function is its tail sum. The training loss is
the negative log of the probability mass consistent with each record: a
single configuration for observed events, every configuration strictly
after the censoring interval (plus no-event) for censored ones.

Note: the per-interval response vector used here has K entries aligned to
the K logits; descriptions elsewhere sometimes index it 0..K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class IntervalGrid:
    """Strictly increasing interval boundaries tau_1 < ... < tau_K in days.

    Interval k covers (tau_{k-1}, tau_k] with tau_0 = 0; times beyond tau_K
    fall into the virtual interval K+1.
    """

    boundaries: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 1:
            raise ValueError("interval grid needs at least one boundary")
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])) or b[0] <= 0:
            raise ValueError(f"boundaries must be strictly increasing and positive: {b}")
        object.__setattr__(self, "boundaries", b)

    @property
    def n_intervals(self) -> int:
        return len(self.boundaries)

    def to_dict(self) -> dict:
        return {"boundaries": list(self.boundaries)}

    @classmethod
    def from_dict(cls, d: dict) -> "IntervalGrid":
        return cls(tuple(d["boundaries"]))


def discretize(times, n_intervals: int) -> IntervalGrid:
    """Boundaries at the 1/K .. (K-1)/K, 1 quantiles of observed event times.

    Quantiles use linear interpolation between order statistics. Requires at
    least K distinct times, otherwise boundaries would collide.
    """
    t = np.asarray(list(times), dtype=np.float64)
    if t.size == 0:
        raise ValueError("discretize: no event times given")
    k = int(n_intervals)
    if k < 1:
        raise ValueError("discretize: need at least one interval")
    distinct = np.unique(t).size
    if distinct < k:
        raise ValueError(
            f"discretize: only {distinct} distinct event times for {k} intervals; use a smaller K")
    qs = np.arange(1, k + 1) / k
    bounds = np.quantile(t, qs)
    if np.any(np.diff(bounds) <= 0) or bounds[0] <= 0:
        raise ValueError(
            f"discretize: quantile boundaries collide for K={k}; use a smaller K")
    return IntervalGrid(tuple(float(b) for b in bounds))


@dataclass(frozen=True)
class SurvivalTarget:
    """Encoded record: interval index in 1..K+1 and the step response vector.

    ``response`` has K entries with entry j-1 set iff j >= interval; it is
    all zeros when the event falls beyond the horizon. For censored records
    ``interval`` marks the censoring interval and the loss enumerates the
    consistent configurations instead of using ``response`` directly.
    """

    interval: int
    event_observed: bool
    response: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.response)
        steps = np.diff(r.astype(int))
        if np.any(steps < 0) or not set(np.unique(r)) <= {0, 1}:
            raise ValueError("response must be a non-decreasing 0/1 step vector")
        object.__setattr__(self, "response", r.astype(np.float64))


def encode_target(t_days: float, observed: bool, grid: IntervalGrid) -> SurvivalTarget:
    """Map a time to its interval: smallest j with t <= tau_j, else K+1."""
    if t_days < 0:
        raise ValueError("encode_target: negative time")
    k_max = grid.n_intervals
    idx = int(np.searchsorted(np.asarray(grid.boundaries), t_days, side="left")) + 1
    response = np.zeros(k_max)
    if idx <= k_max:
        response[idx - 1:] = 1.0
    return SurvivalTarget(interval=idx, event_observed=bool(observed), response=response)


def _config_scores(phi: np.ndarray) -> np.ndarray:
    """Per-configuration log scores: reverse cumulative sums of phi, then 0."""
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    rev_cum = np.cumsum(phi[:, ::-1], axis=1)[:, ::-1]
    zeros = np.zeros((phi.shape[0], 1))
    return np.concatenate([rev_cum, zeros], axis=1)


def event_distribution(phi) -> np.ndarray:
    """Probabilities p_1..p_{K+1} over event configurations, stable softmax."""
    scores = _config_scores(phi)
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if np.asarray(phi).ndim == 1 else p


def survival_function(phi, grid: IntervalGrid, t: float) -> float:
    """F(tau_k) = P(event after tau_k); defined only at tau_0 = 0 and the boundaries."""
    p = event_distribution(np.asarray(phi, dtype=np.float64).reshape(-1))
    bounds = (0.0,) + grid.boundaries
    matches = [i for i, b in enumerate(bounds) if np.isclose(b, t, rtol=1e-9, atol=1e-12)]
    if not matches:
        raise ValueError(f"survival_function: {t} is not an interval boundary of {bounds}")
    k = matches[0]
    return float(p[k:].sum())


def consistency_mask(target: SurvivalTarget, n_intervals: int) -> np.ndarray:
    """0/1 mask over the K+1 configurations consistent with one record."""
    k_max = n_intervals
    mask = np.zeros(k_max + 1)
    if target.event_observed:
        mask[target.interval - 1] = 1.0
    else:
        # strictly later intervals, plus the no-event configuration
        mask[target.interval:] = 1.0
        mask[k_max] = 1.0
    return mask


def mtlr_loss(phi: Tensor, targets: list[SurvivalTarget]) -> Tensor:
    """Mean negative log of (consistent mass / total mass) over the batch.

    Both masses go through max-shifted log-sum-exp; the shift is a constant
    taken from the forward values, which leaves gradients exact.
    """
    if len(targets) == 0:
        raise ValueError("mtlr_loss: empty batch")
    if phi.data.ndim != 2 or phi.shape[0] != len(targets):
        raise ValueError(f"mtlr_loss: phi shape {phi.shape} does not match {len(targets)} targets")
    k_max = phi.shape[1]
    for tg in targets:
        if len(tg.response) != k_max:
            raise ValueError("mtlr_loss: target encoded against a different grid")

    lower = np.tril(np.ones((k_max, k_max), dtype=phi.data.dtype))
    rev_cum = ad.matmul(phi, Tensor(lower))                       # (B, K)
    zeros = Tensor(np.zeros((phi.shape[0], 1), dtype=phi.data.dtype))
    scores = ad.concat([rev_cum, zeros], axis=1)                  # (B, K+1)

    masks = np.stack([consistency_mask(tg, k_max) for tg in targets]).astype(phi.data.dtype)

    def masked_lse(select: np.ndarray) -> Tensor:
        # additive mask before exp so unselected entries underflow to exactly 0
        neg = np.where(select > 0, 0.0, -1e30).astype(phi.data.dtype)
        shift = (scores.data + neg).max(axis=1, keepdims=True)  # constant per row
        expd = ad.exp(scores + Tensor(neg) - Tensor(shift))
        total = ad.tensor_sum(expd, axis=1, keepdims=True)
        return ad.log(total) + Tensor(shift)

    log_consistent = masked_lse(masks)
    log_total = masked_lse(np.ones_like(masks))
    per_record = log_total - log_consistent
    return ad.tensor_sum(per_record) * (1.0 / len(targets))


def predict_risk(phi, grid: IntervalGrid) -> np.ndarray:
    """Risk score per row: 1 - F at the median boundary (higher = worse survival)."""
    phi2 = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    p = event_distribution(phi2)
    mid = (grid.n_intervals - 1) // 2
    surv = p[:, mid + 1:].sum(axis=1)
    return 1.0 - surv
