"""
Command-line entry point: ``flowssm <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors. Every
run writes ``<output>.config.json`` holding the effective configuration.
Options may also come from ``--config file.json``; flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from . import flows, generate, nprint, similarity, ssm, tokenizer, train
from .errors import DataError
from .modelfile import load_model, save_model
from .pcap import CaptureFile, read_pcap, save_pcap

log = logging.getLogger("flowssm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


DEFAULTS: Dict[str, Dict] = {
    "split": {"label": "unlabeled", "unidirectional": False},
    "dnsfilter": {"pattern": []},
    "tokenize": {"labels": None, "vocab": None},
    "train": {"preset": "desk", "epochs": 50, "lr": 5e-4, "weight_decay": 1e-2,
              "clip_value": 1.0, "clip_mode": "value", "max_seq_len": None,
              "seed": 0, "vocab": None, "checkpoint_dir": None,
              "d_model": None, "n_layers": None, "d_state": None},
    "generate": {"flow_index": 0, "length": None, "greedy": False,
                 "temperature": 1.0, "seed": 0},
    "nprint": {},
    "similarity": {"random_baseline": False, "seed": 0, "per_bit": False},
    "memcheck": {"k": 100, "csv": None},
}


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flowssm", description="Byte-level SSM synthetic trace toolkit.")
    p.add_argument("--config", help="JSON file of option values")
    p.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("split", help="split a capture into per-flow PCAP files")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--label")
    s.add_argument("--unidirectional", action="store_true", default=None)

    s = sub.add_parser("dnsfilter", help="keep traffic of services resolved via DNS")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--pattern", action="append", help="domain suffix, repeatable")

    s = sub.add_parser("tokenize", help="encode labelled captures into a token corpus")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help='JSON list of {"pcap": ..., "label": ...}')
    src.add_argument("--input", nargs="+", help="capture files, all with --label")
    s.add_argument("--label")
    s.add_argument("--labels", help="comma-separated label set in id order")
    s.add_argument("--vocab", help="vocabulary JSON to use")
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="train a model on a token corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--vocab")
    s.add_argument("--preset", choices=sorted(ssm.PRESETS))
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--weight-decay", type=float)
    s.add_argument("--clip-value", type=float)
    s.add_argument("--clip-mode", choices=["value", "norm"])
    s.add_argument("--max-seq-len", type=int)
    s.add_argument("--d-model", type=int)
    s.add_argument("--n-layers", type=int)
    s.add_argument("--d-state", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--checkpoint-dir")

    s = sub.add_parser("generate", help="generate a synthetic flow from a seed flow")
    s.add_argument("--model", required=True)
    s.add_argument("--seed-pcap", required=True)
    s.add_argument("--label", required=True)
    s.add_argument("--flow-index", type=int)
    s.add_argument("--length", type=int, help="token budget (default: real length + 10)")
    s.add_argument("--greedy", action="store_true", default=None)
    s.add_argument("--temperature", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("nprint", help="export per-bit header encoding as CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("similarity", help="JSD/TVD/HD between real and synthetic traces")
    s.add_argument("--real", nargs="+", required=True)
    s.add_argument("--synth", nargs="+")
    s.add_argument("--random-baseline", action="store_true", default=None)
    s.add_argument("--seed", type=int)
    s.add_argument("--per-bit", action="store_true", default=None)
    s.add_argument("--out", required=True)

    s = sub.add_parser("memcheck", help="packet-by-packet memorization analysis")
    s.add_argument("--real", nargs="+", required=True)
    s.add_argument("--synth", nargs="+", required=True)
    s.add_argument("--k", type=int)
    s.add_argument("--csv")
    s.add_argument("--out", required=True)
    return p


def _effective(args, file_cfg: dict) -> dict:
    eff = dict(DEFAULTS[args.command])
    eff.update({k: v for k, v in file_cfg.items() if k in eff or hasattr(args, k)})
    for k, v in vars(args).items():
        if k in ("config", "json", "verbose", "command"):
            continue
        if v is not None:
            eff[k] = v
    return eff


def _snapshot(out_path: str, command: str, eff: dict) -> None:
    base = out_path.rstrip("/\\")
    path = os.path.join(base, "config.json") if os.path.isdir(base) else base + ".config.json"
    with open(path, "w") as f:
        json.dump({"command": command, **eff}, f, indent=2, sort_keys=True, default=str)


def _vocab_for(eff) -> tokenizer.Vocabulary:
    if eff.get("vocab"):
        return tokenizer.Vocabulary.load(eff["vocab"])
    if eff.get("labels"):
        labels = eff["labels"]
        if isinstance(labels, str):
            labels = [x.strip() for x in labels.split(",") if x.strip()]
        return tokenizer.Vocabulary(tuple(labels))
    return tokenizer.Vocabulary()


def cmd_split(eff) -> dict:
    cap = read_pcap(eff["input"])
    res = flows.split_flows(cap, eff["label"], bidirectional=not eff["unidirectional"])
    os.makedirs(eff["out"], exist_ok=True)
    entries = []
    for i, fl in enumerate(res.flows):
        name = f"{i:05d}_{fl.key.filename}"
        save_pcap(CaptureFile(fl.packets, cap.link_type, cap.resolution, cap.snaplen),
                  os.path.join(eff["out"], name))
        entries.append({"pcap": name, "label": fl.label})
    flows.save_manifest(entries, os.path.join(eff["out"], "manifest.json"))
    return {"flows": len(res.flows), "diverted": res.diverted, "packets": len(cap)}


def cmd_dnsfilter(eff) -> dict:
    cap = read_pcap(eff["input"])
    res = flows.dns_filter(cap, eff["pattern"])
    save_pcap(res.capture, eff["out"])
    import ipaddress
    return {"packets_in": len(cap), "packets_out": len(res.capture),
            "addresses": sorted(str(ipaddress.IPv4Address(a)) for a in res.addresses),
            "malformed_dns": res.malformed_dns}


def cmd_tokenize(eff) -> dict:
    vocab = _vocab_for(eff)
    if eff.get("manifest"):
        entries = flows.load_manifest(eff["manifest"], vocab.labels)
    else:
        if not eff.get("label"):
            raise UsageError("--input needs --label")
        entries = [{"pcap": p, "label": eff["label"]} for p in eff["input"]]
    samples = []
    diverted = 0
    for e in entries:
        res = flows.split_flows(read_pcap(e["pcap"]), e["label"])
        diverted += res.diverted
        samples.extend(tokenizer.encode_flow(f, vocab) for f in res.flows)
    tokenizer.write_corpus(samples, eff["out"])
    vocab_path = os.path.splitext(eff["out"])[0] + ".vocab.json"
    vocab.save(vocab_path)
    return {"samples": len(samples), "tokens": int(sum(len(s) for s in samples)),
            "diverted": diverted, "vocab": vocab_path}


def cmd_train(eff) -> dict:
    corpus = tokenizer.read_corpus(eff["corpus"])
    vocab_path = eff.get("vocab") or os.path.splitext(eff["corpus"])[0] + ".vocab.json"
    vocab = tokenizer.Vocabulary.load(vocab_path) if os.path.exists(vocab_path) else tokenizer.Vocabulary()
    overrides = {k: eff[k] for k in ("d_model", "n_layers", "d_state", "max_seq_len") if eff.get(k)}
    mcfg = ssm.preset_config(eff["preset"], vocab.size, rng_seed=eff["seed"], **overrides)
    tcfg = train.TrainConfig(learning_rate=eff["lr"], weight_decay=eff["weight_decay"],
                             clip_value=eff["clip_value"], clip_mode=eff["clip_mode"],
                             epochs=eff["epochs"], max_seq_len=mcfg.max_seq_len,
                             rng_seed=eff["seed"])
    res = train.train(corpus, tcfg, mcfg, checkpoint_dir=eff.get("checkpoint_dir"),
                      labels=vocab.labels, is_label=vocab.is_label)
    save_model(eff["out"], res.params, mcfg, vocab.labels)
    loss_path = os.path.splitext(eff["out"])[0] + ".loss.csv"
    train.write_loss_csv(res.losses, loss_path)
    return {"epochs": len(res.losses), "final_loss_nats": res.losses[-1],
            "parameters": res.params.n_params(), "loss_csv": loss_path}


def cmd_generate(eff) -> dict:
    params, mcfg, labels = load_model(eff["model"])
    vocab = tokenizer.Vocabulary(tuple(labels)) if labels else tokenizer.Vocabulary()
    res = flows.split_flows(read_pcap(eff["seed_pcap"]), eff["label"])
    if not 0 <= eff["flow_index"] < len(res.flows):
        raise DataError(f"flow index {eff['flow_index']} out of range ({len(res.flows)} flows)")
    flow = res.flows[eff["flow_index"]]
    seed = generate.make_seed(flow, vocab)
    length = eff["length"] or generate.default_length(flow, vocab)
    req = generate.GenerationRequest(seed, length,
                                     "greedy" if eff["greedy"] else "temperature",
                                     eff["temperature"], eff["seed"])
    toks = generate.generate(params, mcfg, req, vocab)
    rb = generate.rebuild_pcap(toks, vocab)
    save_pcap(rb.capture, eff["out"])
    report = {"seed_tokens": len(seed), "budget": length, "generated_tokens": int(len(toks)),
              "packets": rb.n_packets, "malformed": rb.malformed, "dropped_tail": rb.dropped_tail}
    with open(os.path.splitext(eff["out"])[0] + ".json", "w") as f:
        json.dump(report, f, indent=2)
    return report


def cmd_nprint(eff) -> dict:
    cap = read_pcap(eff["input"])
    rows = nprint.write_csv([p.data for p in cap.packets], eff["out"])
    return {"rows": rows, "columns": nprint.N_BITS}


def cmd_similarity(eff) -> dict:
    if not eff["random_baseline"] and not eff.get("synth"):
        raise UsageError("similarity needs --synth or --random-baseline")
    real = [read_pcap(p) for p in eff["real"]]
    if eff["random_baseline"]:
        synth = similarity.random_baseline(real, eff["seed"])
    else:
        synth = [read_pcap(p) for p in eff["synth"]]
    rep = similarity.similarity(real, synth)
    with open(eff["out"], "w") as f:
        f.write(rep.to_json(per_bit=eff["per_bit"]))
    return {"means": rep.means, "n_scored": len(rep.scored_bits), "n_skipped": len(rep.skipped_bits)}


def cmd_memcheck(eff) -> dict:
    if len(eff["real"]) != len(eff["synth"]):
        raise UsageError("--real and --synth must list the same number of files")
    real = [read_pcap(p) for p in eff["real"]]
    synth = [read_pcap(p) for p in eff["synth"]]
    rep = similarity.memorization(real, synth, eff["k"])
    with open(eff["out"], "w") as f:
        f.write(rep.to_json())
    if eff.get("csv"):
        rep.write_field_csv(eff["csv"])
    return {"pairs": len(rep.pairs), "mean_identical": rep.mean_identical,
            "mean_differing_byte_pct": rep.mean_differing_byte_pct}


COMMANDS = {
    "split": cmd_split, "dnsfilter": cmd_dnsfilter, "tokenize": cmd_tokenize,
    "train": cmd_train, "generate": cmd_generate, "nprint": cmd_nprint,
    "similarity": cmd_similarity, "memcheck": cmd_memcheck,
}


def run(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        file_cfg = {}
        if args.config:
            with open(args.config) as f:
                file_cfg = json.load(f)
        eff = _effective(args, file_cfg)
        summary = COMMANDS[args.command](eff)
        _snapshot(eff["out"], args.command, eff)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError, KeyError) as e:
        print(f"flowssm: data error: {e}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps({"command": args.command, **summary}, default=float))
    else:
        for k, v in summary.items():
            print(f"{k}: {v}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
