"""Synthetic packet-trace generation with a byte-level selective state-space model."""

from .errors import FlowSSMError, DataError
from .pcap import Packet, CaptureFile, parse_pcap, write_pcap, read_pcap, save_pcap
from .flows import FlowKey, FlowRecord, extract_key, split_flows, dns_filter
from .tokenizer import Vocabulary, encode_flow, decode_tokens, read_corpus, write_corpus
from .ssm import ModelConfig, ModelParameters, init_parameters, forward, step, start_state
from .train import TrainConfig, cross_entropy
from .generate import GenerationRequest, make_seed, default_length, rebuild_pcap
from .nprint import layout, encode_bits, extract_fields
from .similarity import jsd, tvd, hellinger, random_baseline, memorization

__version__ = "0.1.0"
