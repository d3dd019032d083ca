"""A tour of the tensor engine: forward ops, backward passes, gradient checks.

Run: python3 demos/01_autodiff_basics.py
"""

import numpy as np

from crdgan.autodiff import (
    Tensor, backward, conv2d, detach, finite_diff_grad, gradcheck, l2_norm,
    max_rel_error, mul, tanh, tmean, tsum,
)

# Tensors wrap numpy arrays; setting requires_grad opens a gradient slot.
x = Tensor(np.array([3.0, -1.0, 2.0]), requires_grad=True)
loss = tsum(mul(x, x))          # sum of squares
backward(loss)
print("d/dx sum(x^2)      =", x.grad, "  (expect 2x =", 2 * x.data, ")")

# detach() shares values but cuts the graph: only one path differentiates.
x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
backward(tsum(mul(detach(x), x)))
print("d/dx sum(sg(x)*x)  =", x.grad, "  (expect x itself)")

# A convolution against its nested-loop definition.
rng = np.random.default_rng(0)
img = Tensor(rng.normal(size=(1, 1, 5, 5)))
ker = Tensor(rng.normal(size=(2, 1, 3, 3)))
out = conv2d(img, ker, stride=1, padding=1)
print("conv output shape  =", out.shape)

# Every differentiable op is checked against central finite differences.
err = gradcheck(lambda t: tmean(mul(tanh(conv2d(t, ker, stride=2, padding=1)),
                                    tanh(conv2d(t, ker, stride=2, padding=1)))),
                img, tol=1e-6)
print(f"conv gradcheck     = {err:.2e} relative error")

# The same harness is available piecemeal.
v = Tensor(rng.normal(size=6), requires_grad=True)
backward(l2_norm(v))
numeric = finite_diff_grad(lambda t: l2_norm(t), v, 1e-6)
print(f"l2_norm gradcheck  = {max_rel_error(v.grad, numeric.data):.2e}")
