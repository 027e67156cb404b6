"""
Captures and flows
------------------

Build a small capture from synthetic TCP connections, write it as a classic
PCAP file, read it back, and split it into bidirectional flows. The last
part filters a capture down to the traffic of a service whose address was
learned from a DNS answer.
"""

import os
import tempfile

import numpy as np

from flowssm import frames, toydata
from flowssm.flows import dns_filter, split_flows
from flowssm.pcap import CaptureFile, Packet, read_pcap, save_pcap

###############################################################################
# Three connections, interleaved packet by packet as a sniffer would see them.

flows = toydata.toy_flows(3, ["zoom"], seed=1, n_data=1)
capture = toydata.interleave(flows)
print(f"{len(capture)} packets from {len(flows)} connections")

path = os.path.join(tempfile.mkdtemp(), "mixed.pcap")
save_pcap(capture, path)
again = read_pcap(path)
print("identical after write/read:", again == capture)

###############################################################################
# Splitting keys every packet by its canonical 5-tuple, so client-to-server
# and server-to-client packets land in the same flow.

result = split_flows(again, label="zoom")
for f in result.flows:
    print(f.key, len(f), "packets")

###############################################################################
# DNS-based filtering keeps the DNS packets themselves plus anything that
# talks to an address resolved for a matching name.

answer = frames.dns_a_response("video.example.com", ["93.184.216.34"])
cap = CaptureFile([
    Packet(frames.udp_frame("10.0.0.2", "8.8.8.8", 5353, 53, frames.dns_query("video.example.com"))),
    Packet(frames.udp_frame("8.8.8.8", "10.0.0.2", 53, 5353, answer)),
    Packet(frames.tcp_frame("10.0.0.2", "93.184.216.34", 50000, 443)),
    Packet(frames.tcp_frame("10.0.0.2", "198.51.100.9", 50001, 443)),
])
kept = dns_filter(cap, ["example.com"])
print("kept", len(kept.capture), "of", len(cap), "packets; resolved",
      [".".join(map(str, a)) for a in sorted(kept.addresses)])
