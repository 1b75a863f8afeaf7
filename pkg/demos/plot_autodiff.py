"""
Reverse-mode gradients on a tape
================================

Every operation records itself on a tape. ``backward`` walks the tape in
reverse and returns gradients only for the leaves you ask for.
"""

import numpy as np

from ateaug import grad

rng = np.random.default_rng(0)

# a tiny classifier head: softmax over an affine map, scored by output entropy
tape = grad.Tape()
x = tape.data(rng.standard_normal((4, 6)))
w = tape.param(rng.standard_normal((6, 3)))
b = tape.param(np.zeros(3))
probs = grad.softmax(grad.affine(x, w, b))
h = grad.entropy(probs)
print("mean entropy", h.item(), "upper bound ln 3 =", np.log(3))

# ask for the input only; the weight branch is skipped entirely
g = tape.backward(h, [x])
print("d entropy / d x has shape", g[x].shape)

# the same graph, checked against central finite differences in float64
err = grad.check_gradients(
    lambda t, x, w, b: grad.entropy(grad.softmax(grad.affine(x, w, b))),
    [rng.standard_normal((4, 6)), rng.standard_normal((6, 3)), np.zeros(3)])
print(f"worst relative error vs finite differences: {err:.2e}")

# convolutions work the same way
tape = grad.Tape()
img = tape.data(rng.standard_normal((1, 1, 8, 8)))
k = tape.param(rng.standard_normal((2, 1, 3, 3)))
out = grad.conv2d(img, k, np.zeros(2), stride=(2, 2), padding="same", activation="relu")
print("conv output", out.shape)
print("kernel gradient", tape.backward(grad.total(out), [k])[k].shape)
