"""Tour of the minimal autodiff engine.

Builds a small computation graph, runs reverse-mode backward, and confirms
one gradient against a central finite difference.
"""

import numpy as np

from reconprune import tensor as T
from reconprune.tensor import Tensor

rng = np.random.default_rng(0)

# a tiny two-layer computation: y = mean(silu(x @ w1) @ w2)
x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
w1 = Tensor(rng.standard_normal((6, 5)) * 0.5, requires_grad=True)
w2 = Tensor(rng.standard_normal((5, 3)) * 0.5, requires_grad=True)

y = T.tmean(T.matmul(T.silu(T.matmul(x, w1)), w2))
print("forward value:", y.item())

T.backward(y)
print("dL/dw1 shape:", w1.grad.shape, " |dL/dw1| max:", np.abs(w1.grad).max())

# finite-difference spot check on one weight entry
h = 1e-3
orig = w1.data[2, 3]
w1.data[2, 3] = orig + h
up = T.tmean(T.matmul(T.silu(T.matmul(x, w1)), w2)).item()
w1.data[2, 3] = orig - h
dn = T.tmean(T.matmul(T.silu(T.matmul(x, w1)), w2)).item()
w1.data[2, 3] = orig
fd = (up - dn) / (2 * h)
print(f"analytic {w1.grad[2, 3]:+.6f}  finite-difference {fd:+.6f}")

# backward accumulates across calls; zero_grad resets
w1.zero_grad()
loss = T.tsum(T.square(T.matmul(x, w1)))
T.backward(loss)
once = w1.grad.copy()
T.backward(loss)
print("two backward calls double the gradient:", np.array_equal(w1.grad, 2 * once))

# the straight-through estimator in one picture: hard forward, identity grad
from reconprune.masking import binarize

s = Tensor(np.array([[-0.5], [0.2], [0.0]])[None], requires_grad=True)
mask = binarize(s)
print("scores     :", s.data.reshape(-1))
print("hard mask  :", mask.soft.data.reshape(-1), "(strictly positive keeps)")
T.backward(T.tsum(mask.soft))
print("d sum(M)/dS:", s.grad.reshape(-1), "(identity, not zero)")
