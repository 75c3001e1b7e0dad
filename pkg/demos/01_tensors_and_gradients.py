#!/usr/bin/env python3
"""Tour of the tensor core: forward ops, reverse-mode gradients, Adam.

Run:  python3 demos/01_tensors_and_gradients.py
"""

import numpy as np

from alignrec import autodiff as ad
from alignrec.autodiff import ParameterSet, Tensor, grad_check

print("=== Tensors and the tape ===")
w = Tensor(np.array([[0.5, -0.2], [0.1, 0.8]]), requires_grad=True)
x = Tensor(np.array([[1.0, 2.0]]))
hidden = ad.apply_activation("leaky_relu", ad.matmul(x, w))
loss = ad.reduce_sum(ad.mul(hidden, hidden))
print("forward value:", loss.item())

loss.backward()
print("d loss / d w:\n", w.grad)

print()
print("=== Stable softmax ===")
rows = Tensor(np.array([[1000.0, 0.0, -5.0], [0.0, np.log(2.0), 0.0]]))
probs = ad.softmax_rows(rows)
print(probs.data, "row sums:", probs.data.sum(axis=1))

print()
print("=== Gradient checking ===")
rng = np.random.default_rng(0)
a = Tensor(rng.normal(size=(4, 3)))
b = Tensor(rng.normal(size=(3, 2)))


def f():
    return ad.mean(ad.softplus(ad.matmul(a, b)))


err = grad_check(f, [a, b])
print(f"max relative error vs central differences: {err:.2e}")

print()
print("=== Adam on a toy quadratic ===")
params = ParameterSet(seed=1)
theta = params.create("theta", (2,), init="zeros")
target = Tensor(np.array([3.0, -1.0]))
for step in range(300):
    diff = ad.sub(theta, target)
    objective = ad.reduce_sum(ad.mul(diff, diff))
    params.zero_grads()
    objective.backward()
    params.adam_step(lr=0.05)
print("recovered argmin:", np.round(theta.data, 4), "(target", target.data, ")")
