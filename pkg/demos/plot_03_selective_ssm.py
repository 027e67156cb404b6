"""
The selective state-space model
-------------------------------

The model embeds tokens, runs them through stacked selective-scan blocks and
projects back onto the vocabulary with the tied embedding. The same weights
can be evaluated over a whole sequence at once or one token at a time with a
small recurrent state; both paths give the same logits.
"""

import numpy as np

from flowssm import ssm

cfg = ssm.preset_config("desk", vocab_size=267)
params = ssm.init_parameters(cfg)
print(f"desk preset: d_model={cfg.d_model} layers={cfg.n_layers} d_state={cfg.d_state} "
      f"d_inner={cfg.d_inner} dt_rank={cfg.dt_rank}; {params.n_params():,} parameters")

###############################################################################
# Discretization: a larger step forgets more of the past state.

A = -np.arange(1.0, 5.0)[None, :]
for dt in (0.001, 0.1, 1.0):
    A_bar, _ = ssm.discretize([dt], A, [1.0])
    print(f"dt={dt:<5}  decay per step {np.round(A_bar.ravel(), 4)}")

###############################################################################
# Full-sequence forward versus incremental stepping.

tokens = np.random.default_rng(0).integers(0, 256, 64)
full = ssm.forward(tokens, params, cfg)
state = ssm.start_state(cfg)
rows = []
for t in tokens:
    state, logits = ssm.step(state, t, params, cfg)
    rows.append(logits)
print("max |forward - step| =", np.abs(full - np.array(rows)).max())
