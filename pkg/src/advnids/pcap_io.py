"""Classic libpcap reading/writing and Ethernet/IPv4/TCP/UDP decoding.

Only the classic (non-pcapng) container with an Ethernet link layer is
supported. Timestamps are kept as integer microseconds so that a
read/write round trip is bit-exact.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
MAX_FRAME_LEN = 1514
DEFAULT_SNAPLEN = 65535

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = 0x8100


class PcapError(Exception):
    """Base class for capture file errors."""


class PcapParseError(PcapError):
    """Malformed capture; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnsupportedFormatError(PcapError):
    pass


class OrderingError(PcapError):
    pass


class PacketBoundsError(PcapError, ValueError):
    pass


class Protocol(enum.Enum):
    TCP = "TCP"
    UDP = "UDP"
    ICMP = "ICMP"
    ARP = "ARP"
    OTHER = "OTHER"


class TrafficClass(enum.Enum):
    BENIGN = "Benign"
    MALICIOUS = "Malicious"
    ADVERSARIAL = "Adversarial"


@dataclass(frozen=True)
class PacketRecord:
    """One captured Ethernet frame plus its decoded header fields.

    ``ts_us`` is the authoritative timestamp (integer microseconds since
    the epoch); ``timestamp`` is the derived seconds view.
    """

    index: int
    ts_us: int
    raw: bytes = field(repr=False)
    src_link: bytes = b"\x00" * 6
    dst_link: bytes = b"\x00" * 6
    src_net: bytes | None = None
    dst_net: bytes | None = None
    protocol: Protocol = Protocol.OTHER
    src_port: int | None = None
    dst_port: int | None = None
    payload_len: int = 0
    orig_len: int | None = None

    @property
    def timestamp(self) -> float:
        return self.ts_us / 1e6

    @property
    def frame_len(self) -> int:
        return len(self.raw)

    @property
    def wire_len(self) -> int:
        return self.frame_len if self.orig_len is None else self.orig_len

    @property
    def header_len(self) -> int:
        return self.frame_len - self.payload_len

    @property
    def payload(self) -> bytes:
        """Transport payload bytes (possibly truncated by the snap length)."""
        return self.raw[self.header_len:]

    @property
    def five_tuple(self) -> tuple:
        return (self.src_net, self.dst_net, self.protocol, self.src_port, self.dst_port)

    def retimed(self, ts_us: int, index: int | None = None) -> "PacketRecord":
        return replace(self, ts_us=int(ts_us), index=self.index if index is None else index)


def seconds_to_us(t: float) -> int:
    return int(round(t * 1e6))


def format_mac(b: bytes) -> str:
    return ":".join(f"{x:02x}" for x in b)


def format_ip(b: bytes | None) -> str:
    return "" if b is None else ".".join(str(x) for x in b)


def parse_ip(s: str) -> bytes:
    return bytes(int(x) for x in s.split("."))


def parse_mac(s: str) -> bytes:
    return bytes(int(x, 16) for x in s.split(":"))


# ---------------------------------------------------------------- decoding

def decode_frame(raw: bytes, index: int, ts_us: int, orig_len: int | None = None) -> PacketRecord:
    """Decode an Ethernet frame. Never raises; unknown or truncated headers
    fall back to ``Protocol.OTHER`` with empty network fields."""
    n = len(raw)
    if n < ETH_HEADER_LEN:
        return PacketRecord(index, ts_us, raw, payload_len=0, orig_len=orig_len)
    dst_link, src_link = raw[0:6], raw[6:12]
    ethertype = struct.unpack_from("!H", raw, 12)[0]
    off = ETH_HEADER_LEN
    if ethertype == ETHERTYPE_VLAN and n >= off + 4:
        ethertype = struct.unpack_from("!H", raw, off + 2)[0]
        off += 4
    base = dict(index=index, ts_us=ts_us, raw=raw, src_link=src_link, dst_link=dst_link,
                orig_len=orig_len)
    if ethertype == ETHERTYPE_ARP:
        return PacketRecord(protocol=Protocol.ARP, payload_len=n - off, **base)
    if ethertype != ETHERTYPE_IPV4 or n < off + 20:
        return PacketRecord(protocol=Protocol.OTHER, payload_len=n - off, **base)

    vihl = raw[off]
    ihl = (vihl & 0x0F) * 4
    if vihl >> 4 != 4 or ihl < 20 or n < off + ihl:
        return PacketRecord(protocol=Protocol.OTHER, payload_len=n - off, **base)
    proto = raw[off + 9]
    src_net, dst_net = raw[off + 12:off + 16], raw[off + 16:off + 20]
    l4 = off + ihl
    base.update(src_net=src_net, dst_net=dst_net)

    if proto == 6 and n >= l4 + 20:
        sport, dport = struct.unpack_from("!HH", raw, l4)
        doff = (raw[l4 + 12] >> 4) * 4
        hdr_end = min(l4 + max(doff, 20), n)
        return PacketRecord(protocol=Protocol.TCP, src_port=sport, dst_port=dport,
                            payload_len=max(0, n - hdr_end), **base)
    if proto == 17 and n >= l4 + 8:
        sport, dport = struct.unpack_from("!HH", raw, l4)
        return PacketRecord(protocol=Protocol.UDP, src_port=sport, dst_port=dport,
                            payload_len=n - (l4 + 8), **base)
    if proto == 1:
        hdr_end = min(l4 + 8, n)
        return PacketRecord(protocol=Protocol.ICMP, payload_len=n - hdr_end, **base)
    return PacketRecord(protocol=Protocol.OTHER, payload_len=n - l4, **base)


# ------------------------------------------------------------------ reading

def read_pcap(path: str | Path) -> list[PacketRecord]:
    data = Path(path).read_bytes()
    if len(data) < GLOBAL_HEADER_LEN:
        raise PcapParseError("truncated global header", len(data))
    magic_le = struct.unpack_from("<I", data, 0)[0]
    if magic_le in (MAGIC_USEC, MAGIC_NSEC):
        endian = "<"
    else:
        magic_be = struct.unpack_from(">I", data, 0)[0]
        if magic_be not in (MAGIC_USEC, MAGIC_NSEC):
            raise UnsupportedFormatError(f"unknown pcap magic 0x{magic_le:08x}")
        endian = ">"
    magic = struct.unpack_from(endian + "I", data, 0)[0]
    nano = magic == MAGIC_NSEC
    linktype = struct.unpack_from(endian + "I", data, 20)[0] & 0x0FFFFFFF
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedFormatError(f"unsupported link type {linktype}")

    records: list[PacketRecord] = []
    off = GLOBAL_HEADER_LEN
    rec_fmt = endian + "IIII"
    while off < len(data):
        if off + RECORD_HEADER_LEN > len(data):
            raise PcapParseError("truncated record header", off)
        ts_sec, ts_frac, incl, orig = struct.unpack_from(rec_fmt, data, off)
        start = off + RECORD_HEADER_LEN
        if start + incl > len(data):
            raise PcapParseError("truncated record body", start)
        raw = data[start:start + incl]
        ts_us = ts_sec * 1_000_000 + (ts_frac // 1000 if nano else ts_frac)
        records.append(decode_frame(raw, len(records), ts_us, None if orig == incl else orig))
        off = start + incl
    return records


# ------------------------------------------------------------------ writing

def write_pcap(records: Iterable[PacketRecord], path: str | Path,
               snaplen: int = DEFAULT_SNAPLEN) -> None:
    """Write records as little-endian microsecond pcap."""
    chunks = [struct.pack("<IHHiIII", MAGIC_USEC, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)]
    last = None
    for i, r in enumerate(records):
        if last is not None and r.ts_us < last:
            raise OrderingError(f"record {i} timestamp {r.timestamp} precedes {last / 1e6}")
        last = r.ts_us
        sec, usec = divmod(r.ts_us, 1_000_000)
        chunks.append(struct.pack("<IIII", sec, usec, len(r.raw), r.wire_len))
        chunks.append(r.raw)
    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as e:
        raise PcapError(f"cannot write {path}: {e}") from e


# ---------------------------------------------------------------- crafting

def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    s = int(np.frombuffer(data, dtype=">u2").sum(dtype=np.uint64))
    while s >> 16:
        s = (s & 0xFFFF) + (s >> 16)
    return (~s) & 0xFFFF


def internet_checksum(data: bytes) -> int:
    """RFC 1071 ones-complement checksum."""
    return _checksum(bytes(data))


def _l3_offset(raw: bytes) -> int:
    off = ETH_HEADER_LEN
    if struct.unpack_from("!H", raw, 12)[0] == ETHERTYPE_VLAN:
        off += 4
    return off


def max_payload_len(template: PacketRecord) -> int:
    return MAX_FRAME_LEN - template.header_len


def _finalize(header: bytes, payload: bytes, protocol: Protocol) -> bytes:
    """Rewrite IPv4/UDP length fields and recompute checksums."""
    hdr = bytearray(header)
    if protocol in (Protocol.TCP, Protocol.UDP, Protocol.ICMP):
        l3 = _l3_offset(hdr)
        ihl = (hdr[l3] & 0x0F) * 4
        l4 = l3 + ihl
        seg_len = len(hdr) - l4 + len(payload)
        struct.pack_into("!H", hdr, l3 + 2, ihl + seg_len)
        struct.pack_into("!H", hdr, l3 + 10, 0)
        struct.pack_into("!H", hdr, l3 + 10, internet_checksum(bytes(hdr[l3:l4])))
        if protocol == Protocol.ICMP:
            struct.pack_into("!H", hdr, l4 + 2, 0)
            struct.pack_into("!H", hdr, l4 + 2, internet_checksum(bytes(hdr[l4:]) + payload))
        else:
            tcp = protocol == Protocol.TCP
            ck_off = l4 + (16 if tcp else 6)
            if not tcp:
                struct.pack_into("!H", hdr, l4 + 4, seg_len)
            struct.pack_into("!H", hdr, ck_off, 0)
            pseudo = bytes(hdr[l3 + 12:l3 + 20]) + struct.pack("!BBH", 0, 6 if tcp else 17, seg_len)
            csum = internet_checksum(pseudo + bytes(hdr[l4:]) + payload)
            if not tcp and csum == 0:
                csum = 0xFFFF
            struct.pack_into("!H", hdr, ck_off, csum)
    return bytes(hdr) + payload


def synthesize_packet(template: PacketRecord, timestamp: float | None = None,
                      payload_len: int = 0, rng: np.random.Generator | None = None,
                      ts_us: int | None = None, index: int = 0) -> PacketRecord:
    """Build a packet with ``template``'s headers and a random payload.

    IPv4 total length, UDP length and all checksums are rewritten so the
    crafted frame is well formed.
    """
    payload_len = int(payload_len)
    if payload_len < 0 or payload_len > max_payload_len(template):
        raise PacketBoundsError(
            f"payload_len {payload_len} outside [0, {max_payload_len(template)}]")
    if ts_us is None:
        ts_us = seconds_to_us(template.timestamp if timestamp is None else timestamp)
    rng = np.random.default_rng() if rng is None else rng
    raw = _finalize(template.raw[:template.header_len], rng.bytes(payload_len),
                    template.protocol)
    return decode_frame(raw, index, int(ts_us))


def build_frame(src_mac: str, dst_mac: str, src_ip: str, dst_ip: str,
                protocol: Protocol = Protocol.TCP, src_port: int = 0, dst_port: int = 0,
                payload: bytes = b"", ts_us: int = 0, index: int = 0,
                tcp_flags: int = 0x18, seq: int = 0) -> PacketRecord:
    """Assemble an Ethernet/IPv4/{TCP,UDP} frame with valid checksums."""
    eth = parse_mac(dst_mac) + parse_mac(src_mac) + struct.pack("!H", ETHERTYPE_IPV4)
    if protocol == Protocol.TCP:
        l4 = struct.pack("!HHIIBBHHH", src_port, dst_port, seq, 0, 5 << 4, tcp_flags,
                         65535, 0, 0)
        proto_num = 6
    elif protocol == Protocol.UDP:
        l4 = struct.pack("!HHHH", src_port, dst_port, 0, 0)
        proto_num = 17
    else:
        raise ValueError(f"build_frame supports TCP/UDP, not {protocol}")
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 0, 0, 0x4000, 64, proto_num, 0,
                     parse_ip(src_ip), parse_ip(dst_ip))
    return decode_frame(_finalize(eth + ip + l4, payload, protocol), index, ts_us)


def reindex(records: Sequence[PacketRecord]) -> list[PacketRecord]:
    return [r if r.index == i else replace(r, index=i) for i, r in enumerate(records)]
