"""
Byte tokens
-----------

A flow becomes one token stream: a label token, then each packet's bytes
(ids 0-255) followed by the packet delimiter (id 256).
"""

import os
import tempfile

from flowssm import tokenizer, toydata

vocab = tokenizer.Vocabulary()
print("vocabulary size", vocab.size, "labels", vocab.labels[:3], "...")

flow = toydata.toy_flows(1, ["youtube"], seed=2, n_data=0)[0]
tokens = tokenizer.encode_flow(flow, vocab)
print(len(tokens), "tokens for", len(flow), "packets")
print(vocab.render(tokens[:40]), "...")

###############################################################################
# Decoding splits on the delimiter. Segments too short to hold Ethernet and
# IPv4 headers are counted as malformed, and an unterminated tail is dropped.

dec = tokenizer.decode_tokens(tokens, vocab)
print("round trip exact:", dec.packets == [p.data for p in flow.packets])

broken = list(tokens[:30]) + [tokenizer.PKT_TOKEN] + list(tokens[1:20])
dec = tokenizer.decode_tokens(broken, vocab)
print("packets", len(dec.packets), "malformed", dec.malformed, "dropped tail", dec.dropped_tail)

###############################################################################
# A corpus file stores many streams compactly as little-endian u16 ids.

path = os.path.join(tempfile.mkdtemp(), "corpus.ntgc")
tokenizer.write_corpus([tokens, tokens[:10]], path)
print([len(s) for s in tokenizer.read_corpus(path)], os.path.getsize(path), "bytes")
