"""Random packet traces for property tests."""

from __future__ import annotations

import struct

import numpy as np

from advnids.pcap_io import Protocol, build_frame, decode_frame

HOSTS = [("02:00:00:00:00:01", "192.168.0.2"), ("02:00:00:00:00:02", "192.168.0.10"),
         ("02:00:00:00:00:03", "192.168.0.20")]
PORTS = [80, 443, 5000, 5353]


def arp_frame(src_mac, ts_us, index):
    raw = bytes.fromhex("ffffffffffff") + bytes.fromhex(src_mac.replace(":", "")) \
        + struct.pack("!H", 0x0806) + bytes(28)
    return decode_frame(raw, index, ts_us)


def random_trace(rng: np.random.Generator, n: int, long_gaps: bool = True):
    t = 1_600_000_000_000_000 + int(rng.integers(0, 10**6))
    out = []
    for i in range(n):
        gap = rng.exponential(0.2)
        if long_gaps and rng.random() < 0.02:
            gap += rng.uniform(1, 20)
        if rng.random() < 0.1:
            gap = 0.0
        t += int(gap * 1e6)
        if rng.random() < 0.05:
            out.append(arp_frame(HOSTS[rng.integers(len(HOSTS))][0], t, i))
            continue
        a, b = rng.choice(len(HOSTS), size=2, replace=rng.random() < 0.02)
        proto = Protocol.TCP if rng.random() < 0.7 else Protocol.UDP
        payload = rng.bytes(int(rng.integers(0, 1460)))
        out.append(build_frame(HOSTS[a][0], HOSTS[b][0], HOSTS[a][1], HOSTS[b][1], proto,
                               int(rng.choice(PORTS)), int(rng.choice(PORTS)), payload, t, i))
    return out
