"""A single RBFI unit, and why training uses pseudogradients.

An And unit computes exp(-max_i (u_i (x_i - w_i))^2). Far from its centre w
the output saturates near 0, and the true derivative of exp(-z), which is
-exp(-z), vanishes with it. The max routes all feedback to one input. The
pseudoderivatives keep a usable signal in both places: -1/sqrt(1+z) for the
exponential and exp(z_i - max z) for the max.

    python demos/01_units_and_pseudogradients.py
"""

import numpy as np

from rbfinet.autograd import PSEUDO, TRUE, BoundedParameter, backward, parameter, total
from rbfinet.layers import RBFILayer, rbfi_forward

u = np.array([[2.0], [1.0], [0.5]])
w = np.array([[0.5], [0.5], [0.5]])

for kind in ("and", "or"):
    layer = RBFILayer(BoundedParameter(u, 0.01, 3.0), BoundedParameter(w, 0.0, 1.0), [kind])
    print(f"\n{kind.upper()} unit, u = {u.ravel()}, w = {w.ravel()}")
    for x0 in (0.5, 0.7, 0.9, 1.0):
        x = np.array([[x0, 0.6, 0.1]])
        grads = {}
        for mode in (TRUE, PSEUDO):
            xn = parameter(x)
            out = rbfi_forward(layer, xn, mode)
            backward(total(out))
            grads[mode] = xn.grad.ravel()
        print(f"  x = {x.ravel()}  output {out.value[0, 0]:.4f}")
        print(f"    true gradient   {np.array2string(grads[TRUE], precision=4)}")
        print(f"    pseudogradient  {np.array2string(grads[PSEUDO], precision=4)}")

print("\nThe true gradient is nonzero in one coordinate only (the one attaining the max)"
      "\nand shrinks with the output; the pseudogradient reaches every input and stays large.")
