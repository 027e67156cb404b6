import json
import os

import pytest

from flowssm import toydata
from flowssm.cli import run
from flowssm.frames import dns_a_response, dns_query, tcp_frame, udp_frame
from flowssm.pcap import CaptureFile, Packet, read_pcap, save_pcap


@pytest.fixture
def capture_path(tmp_path):
    flows = toydata.toy_flows(3, ["zoom"], seed=3, n_data=1)
    path = tmp_path / "mixed.pcap"
    save_pcap(toydata.interleave(flows), path)
    return str(path)


def _run_json(capsys, argv):
    code = run(["--json", *argv])
    out = capsys.readouterr().out
    assert code == 0, out
    return json.loads(out)


def test_split_writes_flows_and_manifest(tmp_path, capture_path, capsys):
    out = tmp_path / "flows"
    summary = _run_json(capsys, ["split", "--input", capture_path, "--out", str(out), "--label", "zoom"])
    assert summary["flows"] == 3 and summary["diverted"] == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest) == 3 and {e["label"] for e in manifest} == {"zoom"}
    assert (out / "config.json").exists()
    assert sum(len(read_pcap(out / e["pcap"])) for e in manifest) == summary["packets"]


def test_dnsfilter(tmp_path, capsys):
    frames = [
        udp_frame("10.0.0.2", "8.8.8.8", 5353, 53, dns_query("video.example.com")),
        udp_frame("8.8.8.8", "10.0.0.2", 53, 5353, dns_a_response("video.example.com", ["93.184.1.1"])),
        tcp_frame("10.0.0.2", "93.184.1.1", 50000, 443),
        tcp_frame("10.0.0.2", "1.2.3.4", 50001, 443),
    ]
    src = tmp_path / "in.pcap"
    save_pcap(CaptureFile([Packet(f) for f in frames]), src)
    out = tmp_path / "kept.pcap"
    summary = _run_json(capsys, ["dnsfilter", "--input", str(src), "--out", str(out),
                                 "--pattern", "example.com"])
    assert summary["addresses"] == ["93.184.1.1"]
    kept = read_pcap(out)
    assert len(kept) == 3  # both DNS packets plus the resolved flow
    assert frames[3] not in [p.data for p in kept.packets]
    assert os.path.exists(str(out) + ".config.json")


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run([]) == 1
    assert run(["bogus"]) == 1
    assert run(["nprint", "--input", "x.pcap"]) == 1
    assert run(["similarity", "--real", "a.pcap", "--out", str(tmp_path / "s.json")]) == 1
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"\x00" * 40)
    assert run(["nprint", "--input", str(bad), "--out", str(tmp_path / "o.csv")]) == 2
    assert run(["nprint", "--input", str(tmp_path / "missing.pcap"), "--out", str(tmp_path / "o.csv")]) == 2
    assert "data error" in capsys.readouterr().err


def test_nprint_csv(tmp_path, capture_path, capsys):
    out = tmp_path / "bits.csv"
    summary = _run_json(capsys, ["nprint", "--input", capture_path, "--out", str(out)])
    lines = out.read_text().splitlines()
    assert summary["columns"] == 1136
    assert len(lines) == summary["rows"] + 1
    assert len(lines[1].split(",")) == 1136


def test_config_file_and_flag_override(tmp_path, capture_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"label": "from-file", "unidirectional": True}))
    out = tmp_path / "flows"
    run(["--config", str(cfg), "split", "--input", capture_path, "--out", str(out), "--label", "cli"])
    capsys.readouterr()
    snap = json.loads((out / "config.json").read_text())
    assert snap["label"] == "cli"
    assert snap["unidirectional"] is True
    assert snap["command"] == "split"


def _pipeline(root, capture_path, capsys):
    os.makedirs(root, exist_ok=True)
    j = lambda *parts: os.path.join(root, *parts)
    _run_json(capsys, ["split", "--input", capture_path, "--out", j("flows"), "--label", "zoom"])
    _run_json(capsys, ["tokenize", "--manifest", j("flows", "manifest.json"),
                       "--labels", "zoom,teams", "--out", j("corpus.ntgc")])
    t = _run_json(capsys, ["train", "--corpus", j("corpus.ntgc"), "--out", j("model.ntgm"),
                           "--epochs", "2", "--d-model", "8", "--n-layers", "1", "--d-state", "4"])
    g = _run_json(capsys, ["generate", "--model", j("model.ntgm"), "--seed-pcap", capture_path,
                           "--label", "zoom", "--out", j("synth.pcap"), "--seed", "5"])
    _run_json(capsys, ["similarity", "--real", capture_path, "--synth", j("synth.pcap"),
                       "--out", j("sim.json")])
    _run_json(capsys, ["memcheck", "--real", capture_path, "--synth", j("synth.pcap"),
                       "--out", j("mem.json"), "--csv", j("fields.csv")])
    return t, g


def test_pipeline_is_deterministic(tmp_path, capture_path, capsys):
    t, g = _pipeline(str(tmp_path / "a"), capture_path, capsys)
    _pipeline(str(tmp_path / "b"), capture_path, capsys)
    assert t["epochs"] == 2
    assert g["generated_tokens"] == g["budget"]
    for name in ("corpus.ntgc", "corpus.vocab.json", "model.ntgm", "model.loss.csv",
                 "synth.pcap", "synth.json", "sim.json", "mem.json", "fields.csv"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, name
    assert (tmp_path / "a" / "model.ntgm.config.json").exists()


def test_random_baseline_similarity(tmp_path, capture_path, capsys):
    out = tmp_path / "rb.json"
    summary = _run_json(capsys, ["similarity", "--real", capture_path, "--random-baseline",
                                 "--per-bit", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert set(summary["means"]) == {"jsd", "tvd", "hd"}
    assert len(rep["per_bit"]["jsd"]) == rep["n_scored"]


def test_generate_bad_flow_index(tmp_path, capture_path, capsys):
    root = str(tmp_path)
    _pipeline(root, capture_path, capsys)
    code = run(["generate", "--model", os.path.join(root, "model.ntgm"), "--seed-pcap", capture_path,
                "--label", "zoom", "--flow-index", "99", "--out", os.path.join(root, "x.pcap")])
    assert code == 2
