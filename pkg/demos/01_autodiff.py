# Reverse-mode gradients on a small numpy tape, checked against central differences.
import numpy as np

from segdiff import numkit as nk

rng = np.random.default_rng(0)
x = nk.Tensor(rng.normal(size=(6, 3)), requires_grad=True)
w = nk.Tensor(rng.normal(size=(3, 3, 4)), requires_grad=True)  # (K, D_in, D_out) conv kernel

with nk.Tape() as tape:
    h = nk.dilated_conv1d(x, w, dilation=2)
    loss = nk.mean(nk.square(nk.tanh(h)))
grads = tape.backward(loss)
print("loss", float(loss.data))
print("d loss / d x\n", grads[x].round(4))

# the same gradient by finite differences
rep = nk.grad_check(lambda t: nk.mean(nk.square(nk.tanh(nk.dilated_conv1d(t, w, 2)))), x.data)
print("grad check passed:", rep.passed, "max rel err %.2e" % rep.max_rel_error)
