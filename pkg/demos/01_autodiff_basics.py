"""A first walk through the reverse-mode tensor core.

Build a small expression, pull gradients back through it, and confirm
one entry against a central finite difference.
"""

import numpy as np

import hginet.tensor as T

rng = np.random.default_rng(0)

# tensors wrap float64 arrays; requires_grad opts a leaf into the tape
x = T.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
w = T.Tensor(rng.normal(size=(4, 2)), requires_grad=True)


def readout(xa, wa):
    hidden = T.relu(T.matmul(xa, wa))
    return T.sum_(hidden * hidden)


loss = readout(x, w)
print(f"loss = {loss.item():.6f}")

# one call walks the tape once, accumulating into .grad on the leaves
T.backward(loss)
print(f"x.grad shape {x.grad.shape}, w.grad shape {w.grad.shape}")

# sanity: nudge one weight both ways and compare the slope
i, j = 2, 1
h = 1e-6
keep = w.data[i, j]
values = []
for sign in (+1.0, -1.0):
    w.data[i, j] = keep + sign * h
    with T.no_grad():
        values.append(readout(T.Tensor(x.data), T.Tensor(w.data)).item())
w.data[i, j] = keep

numeric = (values[0] - values[1]) / (2 * h)
print(f"analytic {w.grad[i, j]:+.8f}  finite difference {numeric:+.8f}")
