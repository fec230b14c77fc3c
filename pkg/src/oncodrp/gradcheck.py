"""Central finite-difference validation of autodiff gradients.

The numeric side only ever calls the loss builder and reads scalar values,
so it stays independent of the reverse-mode implementation it checks.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .autodiff import Tensor, backward, zero_grads

__all__ = ["numeric_gradient", "max_relative_error", "check_gradients"]


def numeric_gradient(build: Callable[[], Tensor], t: Tensor,
                     coords: Iterable[tuple] | None = None,
                     eps_scale: float = 1e-6) -> dict[tuple, float]:
    """Central differences of the scalar ``build()`` wrt entries of ``t``.

    ``build`` must be deterministic and read ``t.data`` afresh on each call.
    Returns a map from index tuple to the numeric derivative. The step is
    small enough in float64 that straddling a ReLU kink is rare while
    truncation and round-off both stay near 1e-10.
    """
    flat = t.data.reshape(-1)
    if coords is None:
        coords = list(np.ndindex(t.data.shape))
    out: dict[tuple, float] = {}
    for idx in coords:
        orig = t.data[idx]
        h = eps_scale * max(1.0, abs(float(orig)))
        t.data[idx] = orig + h
        f_plus = build().item()
        t.data[idx] = orig - h
        f_minus = build().item()
        t.data[idx] = orig
        out[idx] = (f_plus - f_minus) / (2.0 * h)
    del flat
    return out


def max_relative_error(build: Callable[[], Tensor], tensors: Sequence[Tensor],
                       sample_per_tensor: int | None = None,
                       rng: np.random.Generator | None = None,
                       atol: float = 0.0) -> float:
    """Worst-case |autodiff - numeric| / (|numeric| + 1e-8) over checked entries.

    With ``sample_per_tensor`` set, only a random subset of coordinates per
    tensor is checked; useful for large parameter sets. ``atol`` ignores
    disagreements below an absolute floor: a central difference of an O(1)
    function carries roughly 1e-9 of round-off in float64, so coordinates
    whose true derivative sits near that floor cannot be measured to any
    relative precision. Zero keeps the strict formula.
    """
    zero_grads(tensors)
    loss = build()
    backward(loss)
    ad = {id(t): (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for t in tensors}

    worst = 0.0
    for t in tensors:
        all_coords = list(np.ndindex(t.data.shape))
        if sample_per_tensor is not None and len(all_coords) > sample_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            picks = rng.choice(len(all_coords), size=sample_per_tensor, replace=False)
            coords = [all_coords[i] for i in picks]
        else:
            coords = all_coords
        numeric = numeric_gradient(build, t, coords)
        for idx, fd in numeric.items():
            err = abs(ad[id(t)][idx] - fd)
            if err <= atol:
                continue
            worst = max(worst, err / (abs(fd) + 1e-8))
    return worst


def check_gradients(build: Callable[[], Tensor], tensors: Sequence[Tensor],
                    rel_tol: float = 1e-4, sample_per_tensor: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Assert-style wrapper; raises when the worst relative error exceeds ``rel_tol``."""
    worst = max_relative_error(build, tensors, sample_per_tensor, rng)
    if worst >= rel_tol:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3e} >= {rel_tol:.1e}")
    return worst
