"""
Seeded generation
-----------------

A seed is the label token, the first real packet and a delimiter. The model
continues it up to a token budget (the real flow length plus ten by default)
and the output is cut back into packets with synthetic 1 ms spacing.
"""

from flowssm import generate, ssm, tokenizer, toydata, train

vocab = tokenizer.Vocabulary()
flows = toydata.toy_flows(2, ["netflix", "zoom"], seed=5, n_data=0)
corpus = [tokenizer.encode_flow(f, vocab) for f in flows]
mcfg = ssm.preset_config("desk", vocab.size)
model = train.train(corpus, train.TrainConfig(epochs=200), mcfg).params  # about 20 s

flow = flows[0]
seed = generate.make_seed(flow, vocab)
budget = generate.default_length(flow, vocab)
print("seed", len(seed), "tokens; budget", budget)

for mode, temp in (("greedy", 1.0), ("temperature", 0.7)):
    req = generate.GenerationRequest(seed, budget, mode, temperature=temp, rng_seed=1)
    out = generate.generate(model, mcfg, req, vocab)
    rb = generate.rebuild_pcap(out, vocab)
    sizes = [len(p.data) for p in rb.capture.packets]
    print(f"{mode:<12} packets {rb.n_packets} (sizes {sizes}), malformed {rb.malformed}, "
          f"dropped tail {rb.dropped_tail}")

print("real sizes  ", [len(p.data) for p in flow.packets])
