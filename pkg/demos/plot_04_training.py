"""
Training
--------

Train a small model on a handful of synthetic flows with AdamW, elementwise
gradient clipping and a batch size of one. Gradients come from a hand-written
reverse pass; a finite-difference probe confirms one of them.
"""

import numpy as np

from flowssm import ssm, tokenizer, toydata, train

vocab = tokenizer.Vocabulary()
flows = toydata.toy_flows(4, vocab.labels, seed=4, n_data=0)
corpus = [tokenizer.encode_flow(f, vocab) for f in flows]

mcfg = ssm.ModelConfig(vocab_size=vocab.size, d_model=32, n_layers=2, d_state=8)
params = ssm.init_parameters(mcfg)

###############################################################################
# One analytic gradient entry against a central difference.

loss, grads = train.loss_and_grads(corpus[0][:40], params, mcfg)
i, h = (3, 5), 1e-5
old = params.blocks[0].in_proj[i]
params.blocks[0].in_proj[i] = old + h
up = train.cross_entropy(ssm.forward(corpus[0][:39], params, mcfg), corpus[0][1:40])
params.blocks[0].in_proj[i] = old - h
down = train.cross_entropy(ssm.forward(corpus[0][:39], params, mcfg), corpus[0][1:40])
params.blocks[0].in_proj[i] = old
print(f"analytic {grads.blocks[0].in_proj[i]:.8f}  numeric {(up - down) / (2 * h):.8f}")

###############################################################################
# A short run. Loss is the mean next-token cross-entropy in nats.

result = train.train(corpus, train.TrainConfig(epochs=30), mcfg, params=params)
for epoch in (0, 9, 19, 29):
    print(f"epoch {epoch + 1:3d}  loss {result.losses[epoch]:.3f}")
