"""A walk through the tensor engine: building a graph, checking its
gradients against finite differences, and fitting a tiny least-squares
problem with both optimizers.

Run: python3 demos/01_autodiff_and_optimizers.py
"""

import numpy as np

from oncodrp import autodiff as ad
from oncodrp.gradcheck import max_relative_error
from oncodrp.optim import SGD, Adam

rng = ad.named_rng(0, "demo1")

# --- a small expression and its gradient -------------------------------------
x = ad.Tensor([1.0, 2.0, 3.0], requires_grad=True, dtype=np.float64)
loss = ad.tensor_sum(ad.mul(ad.sigmoid(x), ad.sigmoid(x)))
loss.backward()
print("f(x) = sum(sigmoid(x)^2)")
print("  value    :", loss.item())
print("  gradient :", x.grad)

# the numeric oracle agrees to a few parts in ten thousand or better
err = max_relative_error(lambda: ad.tensor_sum(ad.mul(ad.sigmoid(x), ad.sigmoid(x))), [x])
print(f"  worst relative error vs central differences: {err:.2e}")

# --- least squares with Adam and SGD ------------------------------------------
A = ad.Tensor(rng.standard_normal((32, 4)))
true_w = rng.standard_normal((4, 1))
y = ad.Tensor(A.data @ true_w + 0.01 * rng.standard_normal((32, 1)))

for make in (lambda p: SGD(p, lr=0.05), lambda p: Adam(p, lr=0.05)):
    w = ad.parameter(np.zeros((4, 1)), "w")
    opt = make({"w": w})
    for step in range(200):
        ad.zero_grads([w])
        resid = ad.matmul(A, w) - y
        loss = ad.tensor_sum(ad.mul(resid, resid)) * (1.0 / 32)
        loss.backward()
        opt.step()
    print(f"{type(opt).__name__:<5} final mse={loss.item():.5f} "
          f"w_err={np.abs(w.data - true_w).max():.4f}")
