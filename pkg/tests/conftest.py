import time

import numpy as np
import pytest

from flowssm import ssm, tokenizer, toydata, train

LABELS = ("twitch", "youtube", "zoom")


@pytest.fixture
def vocab():
    return tokenizer.Vocabulary(LABELS)


@pytest.fixture
def tcp_flows():
    return toydata.toy_flows(4, LABELS, seed=7, n_data=2)


@pytest.fixture
def tiny_cfg():
    return ssm.ModelConfig(vocab_size=260, d_model=8, n_layers=2, d_state=4,
                           max_seq_len=64, rng_seed=3)


@pytest.fixture(scope="session")
def overfit_run():
    """Desk preset trained 300 epochs on two handshake-only flows (under a minute)."""
    vocab = tokenizer.Vocabulary(LABELS)
    flows = toydata.toy_flows(2, ["twitch", "zoom"], seed=0, n_data=0)
    corpus = [tokenizer.encode_flow(f, vocab) for f in flows]
    mcfg = ssm.preset_config("desk", vocab.size)
    t0 = time.perf_counter()
    res = train.train(corpus, train.TrainConfig(epochs=300), mcfg)
    return {"vocab": vocab, "flows": flows, "corpus": corpus, "mcfg": mcfg, "result": res,
            "train_seconds": time.perf_counter() - t0}


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; returns the verdict so tests can assert on it."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        lines[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[n])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        terminalreporter.write_line(lines.get(n, f"criterion {n:>2}: ----  not run"))
