"""Prediction heads over the concatenated patient and drug vectors, and the
two response losses: focal binary cross-entropy and mean squared error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, named_rng
from .encoder import _linear, _linear_params

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


class MlpHead:
    """Two-layer head 2d -> d -> out over concat(patient, drug)."""

    def __init__(self, dim: int, out_dim: int, sigmoid_output: bool,
                 seed: int = 0, dtype=np.float32, prefix: str = "head"):
        self.prefix = prefix
        self.sigmoid_output = sigmoid_output
        rng = named_rng(seed, f"init/{prefix}")
        p: dict[str, Tensor] = {}
        p.update(_linear_params(rng, f"{prefix}.fc1", 2 * dim, dim, dtype))
        p.update(_linear_params(rng, f"{prefix}.fc2", dim, out_dim, dtype))
        self.params = p

    def __call__(self, patient: Tensor, drug: Tensor) -> Tensor:
        if patient.shape != drug.shape:
            raise ad.ShapeError(
                f"head {self.prefix}: patient {patient.shape} and drug {drug.shape} differ")
        h = ad.relu(_linear(self.params, f"{self.prefix}.fc1",
                            ad.concat([patient, drug], axis=-1)))
        out = _linear(self.params, f"{self.prefix}.fc2", h)
        return ad.sigmoid(out) if self.sigmoid_output else out


def _power(t: Tensor, exponent: float) -> Tensor:
    """t ** exponent for t in (0, 1], via exp(exponent * log t)."""
    if exponent == 0.0:
        return Tensor(np.ones_like(t.data))
    return ad.exp(ad.log(t, floor=LOG_FLOOR) * exponent)


def focal_loss(y_hat: Tensor, y: np.ndarray, fp: FocalParams = FocalParams()) -> Tensor:
    """Mean focal BCE; reduces to alpha-weighted BCE at gamma = 0."""
    y = np.asarray(y, dtype=y_hat.dtype).reshape(-1)
    if y.size == 0:
        raise ValueError("focal_loss: empty batch")
    if y_hat.size != y.size:
        raise ad.ShapeError(f"focal_loss: {y_hat.size} predictions vs {y.size} labels")
    if not set(np.unique(y)) <= {0.0, 1.0}:
        raise ValueError("focal_loss: labels must be 0/1")
    flat = y_hat if y_hat.data.ndim == 1 else y_hat[:, 0]
    one = Tensor(np.ones_like(flat.data))
    pos = ad.mul(Tensor(y), ad.mul(_power(one - flat, fp.gamma), ad.log(flat, floor=LOG_FLOOR)))
    neg = ad.mul(Tensor(1.0 - y), ad.mul(_power(flat, fp.gamma), ad.log(one - flat, floor=LOG_FLOOR)))
    total = ad.tensor_sum(pos * (-fp.alpha) + neg * (-(1.0 - fp.alpha)))
    return total * (1.0 / y.size)


def mse_loss(r_hat: Tensor, r: np.ndarray) -> Tensor:
    """Mean squared error against real-valued targets."""
    r = np.asarray(r, dtype=r_hat.dtype).reshape(-1)
    if r.size == 0:
        raise ValueError("mse_loss: empty batch")
    if r_hat.size != r.size:
        raise ad.ShapeError(f"mse_loss: {r_hat.size} predictions vs {r.size} targets")
    flat = r_hat if r_hat.data.ndim == 1 else r_hat[:, 0]
    diff = flat - Tensor(r)
    return ad.tensor_sum(ad.mul(diff, diff)) * (1.0 / r.size)
