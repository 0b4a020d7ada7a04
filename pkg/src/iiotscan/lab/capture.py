"""Loopback packet capture for auditing the scanner's own traffic.

Needs an AF_PACKET raw socket (Linux, CAP_NET_RAW).  Only IPv4 TCP/UDP
headers are decoded; that is all the harness uses.
"""
from __future__ import annotations

import ipaddress
import select
import socket
import struct
import threading
from dataclasses import dataclass

ETH_P_ALL = 0x0003
PACKET_OUTGOING = 4
SO_TIMESTAMPNS = 35
SCM_TIMESTAMPNS = SO_TIMESTAMPNS


@dataclass(frozen=True)
class Packet:
    ts: float
    src: str
    dst: str
    proto: str  # tcp | udp
    sport: int
    dport: int
    flags: int  # TCP flags, 0 for UDP
    payload: bytes

    @property
    def syn(self) -> bool:
        return self.proto == "tcp" and self.flags & 0x12 == 0x02

    def client_hello(self) -> bool:
        """First bytes are a (D)TLS handshake record carrying a ClientHello."""
        p = self.payload
        if len(p) >= 6 and p[0] == 0x16 and p[1] == 0x03:
            return p[5] == 1
        if len(p) >= 14 and p[0] == 0x16 and p[1] == 0xFE:
            return p[13] == 1
        return False


def capture_available(interface: str = "lo") -> bool:
    try:
        s = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(ETH_P_ALL))
    except (OSError, AttributeError):
        return False
    try:
        s.bind((interface, 0))
        return True
    except OSError:
        return False
    finally:
        s.close()


def decode(frame: bytes, ts: float) -> Packet | None:
    if len(frame) < 34 or frame[12:14] != b"\x08\x00":
        return None
    ip = frame[14:]
    ihl = (ip[0] & 0x0F) * 4
    total = struct.unpack("!H", ip[2:4])[0]
    proto = ip[9]
    src, dst = socket.inet_ntoa(ip[12:16]), socket.inet_ntoa(ip[16:20])
    body = ip[ihl:total]
    if proto == 6 and len(body) >= 20:
        sport, dport = struct.unpack("!HH", body[:4])
        off = (body[12] >> 4) * 4
        return Packet(ts, src, dst, "tcp", sport, dport, body[13], bytes(body[off:]))
    if proto == 17 and len(body) >= 8:
        sport, dport = struct.unpack("!HH", body[:4])
        return Packet(ts, src, dst, "udp", sport, dport, 0, bytes(body[8:]))
    return None


class PacketCapture:
    """Background sniffer keeping packets that touch ``network``.

    Loopback frames are seen twice (outgoing and incoming); only the
    outgoing copy is kept.  Timestamps come from the kernel.
    """

    def __init__(self, network: str = "127.77.0.0/16", interface: str = "lo", keep_payload: int = 64):
        self.network = ipaddress.ip_network(network)
        self.interface = interface
        self.keep_payload = keep_payload
        self.packets: list[Packet] = []
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._sock: socket.socket | None = None
        self.payload_bytes: dict[tuple[str, str], int] = {}

    def _wanted(self, pkt: Packet) -> bool:
        return ipaddress.ip_address(pkt.src) in self.network or ipaddress.ip_address(pkt.dst) in self.network

    def start(self) -> "PacketCapture":
        s = socket.socket(socket.AF_PACKET, socket.SOCK_RAW, socket.htons(ETH_P_ALL))
        s.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 32 * 1024 * 1024)
        s.setsockopt(socket.SOL_SOCKET, SO_TIMESTAMPNS, 1)
        s.bind((self.interface, 0))
        self._sock = s
        self._thread = threading.Thread(target=self._loop, name="capture", daemon=True)
        self._thread.start()
        return self

    def _loop(self) -> None:
        s = self._sock
        while not self._stop.is_set():
            ready, _, _ = select.select([s], [], [], 0.05)
            if not ready:
                continue
            while True:
                try:
                    data, anc, _flags, addr = s.recvmsg(65600, 64, socket.MSG_DONTWAIT)
                except BlockingIOError:
                    break
                if addr[2] != PACKET_OUTGOING:
                    continue
                ts = 0.0
                for level, kind, raw in anc:
                    if level == socket.SOL_SOCKET and kind == SCM_TIMESTAMPNS:
                        sec, nsec = struct.unpack("qq", raw[:16])
                        ts = sec + nsec / 1e9
                pkt = decode(data, ts)
                if pkt is None or not self._wanted(pkt):
                    continue
                key = (pkt.src, pkt.dst)
                self.payload_bytes[key] = self.payload_bytes.get(key, 0) + len(pkt.payload)
                if len(pkt.payload) > self.keep_payload:
                    pkt = Packet(pkt.ts, pkt.src, pkt.dst, pkt.proto, pkt.sport, pkt.dport, pkt.flags,
                                 pkt.payload[:self.keep_payload])
                self.packets.append(pkt)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2)
        if self._sock is not None:
            self._sock.close()

    def __enter__(self) -> "PacketCapture":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def to(self, address: str) -> list[Packet]:
        return [p for p in self.packets if p.dst == address]

    def client_hellos(self, address: str) -> list[Packet]:
        return sorted((p for p in self.to(address) if p.client_hello()), key=lambda p: p.ts)

    def bytes_between(self, src: str, dst: str) -> int:
        return self.payload_bytes.get((src, dst), 0)
