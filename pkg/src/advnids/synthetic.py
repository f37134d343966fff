"""Synthetic IoT-style traffic: Poisson benign flows plus a short-spaced burst.

Each benign flow is a device talking to a gateway over one TCP socket and
sends about one packet per second with a flow-specific payload size.  The
malicious capture starts after the benign one ends: one device either
floods its usual socket with ordinary-sized packets or sweeps the gateway's ports
with bare SYNs, at a fixed short spacing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pcap_io import PacketRecord, Protocol, build_frame, reindex

GATEWAY_MAC = "02:00:00:00:00:01"
GATEWAY_IP = "192.168.1.1"


@dataclass(frozen=True)
class CorpusConfig:
    n_devices: int = 10
    duration: float = 1800.0       # seconds of benign traffic
    rate: float = 1.0              # packets per second per flow
    burst_len: int = 100
    burst_spacing: float = 0.001   # seconds between scan packets
    start_time: float = 1_600_000_000.0
    burst_kind: str = "flood"      # "flood" on an existing socket, or "scan" over fresh ports
    seed: int = 0


def _device(i: int) -> tuple[str, str]:
    return f"02:00:00:00:01:{i + 2:02x}", f"192.168.1.{i + 10}"


SIZE_SPREAD = 15.0


def device_mean_sizes(cfg: CorpusConfig) -> np.ndarray:
    return np.random.default_rng([cfg.seed, 0]).uniform(60, 400, size=cfg.n_devices)


def _service(dev: int) -> int:
    return 1883 if dev % 2 == 0 else 8883


def _size(rng: np.random.Generator, mean: float) -> int:
    return int(np.clip(rng.normal(mean, SIZE_SPREAD), 0, 1400))


def benign_traffic(cfg: CorpusConfig) -> list[PacketRecord]:
    rng = np.random.default_rng([cfg.seed, 1])
    means = device_mean_sizes(cfg)
    events = []
    for dev in range(cfg.n_devices):
        mac, ip = _device(dev)
        port = 40000 + dev
        service = _service(dev)
        mean_size = means[dev]
        t = cfg.start_time + rng.exponential(1.0 / cfg.rate)
        while t < cfg.start_time + cfg.duration:
            outbound = rng.random() < 0.6
            size = _size(rng, mean_size)
            events.append((t, dev, outbound, size, mac, ip, port, service))
            t += rng.exponential(1.0 / cfg.rate)
    events.sort(key=lambda e: (e[0], e[1]))
    out = []
    for i, (t, dev, outbound, size, mac, ip, port, service) in enumerate(events):
        payload = rng.bytes(size)
        ts = int(round(t * 1e6))
        if outbound:
            p = build_frame(mac, GATEWAY_MAC, ip, GATEWAY_IP, Protocol.TCP, port, service, payload, ts, i)
        else:
            p = build_frame(GATEWAY_MAC, mac, GATEWAY_IP, ip, Protocol.TCP, service, port, payload, ts, i)
        out.append(p)
    return _monotone(out)


def flood_burst(cfg: CorpusConfig, start: float) -> list[PacketRecord]:
    """Device 0 floods its usual gateway socket with ordinary-sized packets."""
    rng = np.random.default_rng([cfg.seed, 2])
    mac, ip = _device(0)
    mean = device_mean_sizes(cfg)[0]
    out = []
    for j in range(cfg.burst_len):
        ts = int(round((start + j * cfg.burst_spacing) * 1e6))
        out.append(build_frame(mac, GATEWAY_MAC, ip, GATEWAY_IP, Protocol.TCP, 40000, _service(0),
                               rng.bytes(_size(rng, mean)), ts, j))
    return out


def scan_burst(cfg: CorpusConfig, start: float) -> list[PacketRecord]:
    mac, ip = _device(0)
    out = []
    for j in range(cfg.burst_len):
        ts = int(round((start + j * cfg.burst_spacing) * 1e6))
        out.append(build_frame(mac, GATEWAY_MAC, ip, GATEWAY_IP, Protocol.TCP, 50000, 1 + j,
                               b"", ts, j, tcp_flags=0x02, seq=1000 + j))
    return out


def _monotone(packets: list[PacketRecord]) -> list[PacketRecord]:
    last = None
    out = []
    for p in packets:
        if last is not None and p.ts_us < last:
            p = p.retimed(last)
        last = p.ts_us
        out.append(p)
    return reindex(out)


def generate_corpus(cfg: CorpusConfig = CorpusConfig()) -> tuple[list[PacketRecord], list[PacketRecord]]:
    """Return (benign, malicious) packet lists; malicious follows benign in time."""
    benign = benign_traffic(cfg)
    start = benign[-1].timestamp + 1.0 if benign else cfg.start_time
    burst = flood_burst if cfg.burst_kind == "flood" else scan_burst
    return benign, burst(cfg, start)
