# %% [markdown]
# # Cells and gradients
# The package trains its recurrent models with a small reverse-mode
# tape.  This walkthrough builds both cell functions by hand, checks
# their analytic gradients against central finite differences, and
# shows the antisymmetric structure of the ASRNN's hidden matrix.

# %%
import numpy as np

from rksysid import Tape, finite_difference_gradient
from rksysid.cells import (
    AsrnnParams,
    GruParams,
    antisymmetric_matrix,
    asrnn_cell,
    gru_cell,
    init_params,
)
from rksysid.tape import hadamard, vsum

rng = np.random.default_rng(0)
k = 4

# %% [markdown]
# ## A GRU application and its gradient
# Record the cell on a tape, then pull gradients of a scalar loss back
# to every parameter in one reverse sweep.

# %%
model = init_params(seed=1, k_x_raw=k, k=k, k_out=2, cell_kind="gru")
x = rng.normal(size=k) * 0.5
h = rng.normal(size=k) * 0.5

tape = Tape()
p = GruParams(
    **{f: tape.leaf(getattr(model.cell, f), trainable=True)
       for f in ("w_h", "w_z", "w_r", "u_h", "u_z", "u_r", "b_h", "b_z", "b_r")}
)
out = gru_cell(tape.constant(x), tape.constant(h), p)
loss = vsum(hadamard(out, out))
grads = tape.backward(loss, [p.w_h, p.u_h, p.b_h])
print("d loss / d W_h row 0:", grads[0][0].round(4))

# %% [markdown]
# ## The finite-difference oracle agrees

# %%
def loss_fn(params):
    q = GruParams(*params)
    y = gru_cell(x, h, q)
    return float((y * y).sum())


arrays = [getattr(model.cell, f) for f in
          ("w_h", "w_z", "w_r", "u_h", "u_z", "u_r", "b_h", "b_z", "b_r")]
numeric = finite_difference_gradient(loss_fn, arrays, step=1e-5)
print("max |analytic - numeric| over W_h:",
      np.max(np.abs(grads[0] - numeric[0])))

# %% [markdown]
# ## The ASRNN hidden matrix is antisymmetric up to the diffusion term
# A = M - M.T - gamma I, so A + A.T = -2 gamma I exactly.

# %%
asr = AsrnnParams(
    w_h=rng.normal(size=(k, k)) * 0.3,
    w_z=rng.normal(size=(k, k)) * 0.3,
    m=rng.normal(size=(k, k)),
    b_h=np.zeros(k), b_z=np.zeros(k),
    gamma=0.5, epsilon=1.0,
)
a = antisymmetric_matrix(asr)
print("A + A.T:\n", (a + a.T).round(12))
print("cell output:", asrnn_cell(x, h, asr).round(4))
