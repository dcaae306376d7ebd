"""A walk through the tensor core: build a small computation, run
reverse-mode autodiff, and confirm the gradients against central finite
differences.

Run with:  python3 demos/01_autodiff_basics.py
"""

import numpy as np

import spoofsmith.tensor as T
from spoofsmith.gradcheck import finite_difference_grad, grad_error
from spoofsmith.tensor import Tensor

# A two-layer toy network: y = sum(tanh(x @ w1) @ w2), all f64.
rng = np.random.default_rng(0)
x0 = rng.standard_normal((4, 5))
w1 = Tensor(rng.standard_normal((5, 3)), requires_grad=True, name="w1")
w2 = Tensor(rng.standard_normal((3, 1)), requires_grad=True, name="w2")

x = Tensor(x0, requires_grad=True, name="x")
loss = T.tsum(T.matmul(T.tanh(T.matmul(x, w1)), w2))
grads = T.backward(loss)

print("loss =", loss.item())
print("named gradients:", sorted(grads))
print("dL/dw2 =", np.round(grads["w2"].data.ravel(), 4))

# Check dL/dx against finite differences.
def f(arr):
    with T.no_grad():
        return T.tsum(T.matmul(T.tanh(T.matmul(Tensor(arr), w1)), w2)).item()

fd = finite_difference_grad(f, x0)
print("finite-difference agreement on dL/dx:", grad_error(x.grad, fd))

# Gradient accumulation: a tensor used twice receives the sum of both
# contributions.
a = Tensor(np.array([2.0]), requires_grad=True, name="a")
T.backward(T.tsum(T.mul(a, a)))          # d(a^2)/da = 2a = 4
print("d(a*a)/da at a=2:", a.grad)

# Inside no_grad() nothing is recorded.
with T.no_grad():
    silent = T.mul(a, a)
print("graph recorded under no_grad:", silent._parents != ())
