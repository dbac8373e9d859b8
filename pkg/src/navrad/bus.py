"""Traffic transport: a deterministic in-process bus driven by a virtual
clock, a UDP multicast bus with the same surface, and the binary capture
format used for replay.

The in-process bus is the backbone of every seeded experiment: publications
are delivered in (time, publication order) order, so a whole scenario is a
pure function of its seed.  Topics model the two multicast groups of a
bridge network ("asterix" for radar video, "nmea" for everything else);
every subscriber sees every payload, including its own, matching a shared
medium.
"""

from __future__ import annotations

import heapq
import itertools
import socket
import struct
import threading
import time as _time
from dataclasses import dataclass
from typing import Callable, Iterator

TOPIC_ASTERIX = "asterix"
TOPIC_NMEA = "nmea"
_TOPIC_CODES = {TOPIC_ASTERIX: 1, TOPIC_NMEA: 2}
_TOPIC_NAMES = {v: k for k, v in _TOPIC_CODES.items()}


class BusError(Exception):
    pass


class EventLoop:
    """Virtual-time event loop; the single scheduler of a simulation run."""

    def __init__(self, start: float = 0.0):
        self.now = start
        self._heap: list = []
        self._seq = itertools.count()

    def call_at(self, t: float, fn: Callable, *args) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), fn, args))

    def call_after(self, dt: float, fn: Callable, *args) -> None:
        self.call_at(self.now + dt, fn, *args)

    def run_until(self, t_end: float) -> None:
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            t, _, fn, args = heapq.heappop(heap)
            self.now = t
            fn(*args)
        self.now = t_end


@dataclass(frozen=True)
class Delivery:
    """One payload as seen by a subscriber."""
    topic: str
    payload: bytes
    source: str   # declared endpoint of the sender ("addr:port")
    time: float   # delivery time (virtual seconds in-process)
    seq: int      # global publication order


class InProcBus:
    """Deterministic FIFO-per-topic bus over an EventLoop.

    `publish` with a positive delay models sender-side latency; deliveries
    are totally ordered by (time, publication sequence).
    """

    def __init__(self, loop: EventLoop):
        self.loop = loop
        self._subs: dict[str, list[Callable[[Delivery], None]]] = {}
        self._pub_seq = itertools.count()

    def subscribe(self, topic: str, callback: Callable[[Delivery], None]) -> None:
        self._subs.setdefault(topic, []).append(callback)

    def subscribe_stream(self, topic: str) -> list[Delivery]:
        """Subscribe, collecting deliveries into the returned list."""
        out: list[Delivery] = []
        self.subscribe(topic, out.append)
        return out

    def publish(self, topic: str, payload: bytes, source: str,
                delay: float = 0.0) -> float:
        """Schedule a payload; returns its delivery time."""
        seq = next(self._pub_seq)
        t = self.loop.now + delay
        d = Delivery(topic, payload, source, t, seq)
        self.loop.call_at(t, self._deliver, d)
        return t

    def _deliver(self, d: Delivery) -> None:
        for cb in self._subs.get(d.topic, ()):
            cb(d)

    def close(self) -> None:
        pass


class UdpMulticastBus:
    """Same surface as InProcBus over real UDP multicast sockets.

    Topics map to (group, port) pairs; one reader thread per subscribed
    topic invokes callbacks as datagrams arrive.  Loopback is enabled so a
    process sees its own traffic, like on a shared bridge network.
    """

    def __init__(self, groups: dict[str, tuple[str, int]] | None = None,
                 iface: str = "127.0.0.1"):
        self.groups = groups or {
            TOPIC_ASTERIX: ("239.192.42.1", 18600),
            TOPIC_NMEA: ("239.192.42.2", 18601),
        }
        self.iface = iface
        self._send_socks: dict[str, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._seq = itertools.count()
        self._t0 = _time.monotonic()

    def _sender(self, topic: str) -> socket.socket:
        sock = self._send_socks.get(topic)
        if sock is None:
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_TTL, 1)
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_LOOP, 1)
            try:
                sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_IF,
                                socket.inet_aton(self.iface))
            except OSError:
                pass
            self._send_socks[topic] = sock
        return sock

    def publish(self, topic: str, payload: bytes, source: str = "",
                delay: float = 0.0) -> float:
        group, port = self.groups[topic]
        if delay > 0.0:
            _time.sleep(delay)
        try:
            self._sender(topic).sendto(payload, (group, port))
        except OSError as e:
            raise BusError(f"multicast send failed: {e}") from e
        return _time.monotonic() - self._t0

    def subscribe(self, topic: str, callback: Callable[[Delivery], None]) -> None:
        group, port = self.groups[topic]
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind(("", port))
            mreq = socket.inet_aton(group) + socket.inet_aton(self.iface)
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, mreq)
        except OSError as e:
            sock.close()
            raise BusError(f"multicast subscribe failed: {e}") from e
        sock.settimeout(0.2)

        def reader():
            while not self._stop.is_set():
                try:
                    data, addr = sock.recvfrom(65536)
                except socket.timeout:
                    continue
                except OSError:
                    break
                callback(Delivery(topic, data, f"{addr[0]}:{addr[1]}",
                                  _time.monotonic() - self._t0, next(self._seq)))
            sock.close()

        th = threading.Thread(target=reader, daemon=True)
        th.start()
        self._threads.append(th)

    def close(self) -> None:
        self._stop.set()
        for th in self._threads:
            th.join(timeout=1.0)
        for sock in self._send_socks.values():
            sock.close()


def open_bus(mode: str, loop: EventLoop | None = None, **kw):
    """Factory for the two transport modes: 'inproc' or 'udp'."""
    if mode == "inproc":
        if loop is None:
            raise BusError("in-process bus needs an event loop")
        return InProcBus(loop)
    if mode == "udp":
        return UdpMulticastBus(**kw)
    raise BusError(f"unknown bus mode {mode!r}")


# --------------------------------------------------------------------------
# capture files: length-prefixed records with microsecond timestamps
# --------------------------------------------------------------------------

_CAPTURE_MAGIC = b"NRCAP1\x00\x00"
_REC_HDR = struct.Struct(">IQBH")  # payload len, t_us, topic code, source len


class CaptureWriter:
    def __init__(self, path):
        self._fh = open(path, "wb")
        self._fh.write(_CAPTURE_MAGIC)

    def write(self, d: Delivery) -> None:
        src = d.source.encode("ascii", "replace")
        self._fh.write(_REC_HDR.pack(len(d.payload), int(round(d.time * 1e6)),
                                     _TOPIC_CODES[d.topic], len(src)))
        self._fh.write(src)
        self._fh.write(d.payload)

    def attach(self, bus, topics=(TOPIC_ASTERIX, TOPIC_NMEA)) -> None:
        for topic in topics:
            bus.subscribe(topic, self.write)

    def close(self) -> None:
        self._fh.close()


def read_capture(path) -> Iterator[Delivery]:
    with open(path, "rb") as fh:
        if fh.read(len(_CAPTURE_MAGIC)) != _CAPTURE_MAGIC:
            raise BusError(f"{path}: not a capture file")
        seq = 0
        while True:
            hdr = fh.read(_REC_HDR.size)
            if not hdr:
                return
            if len(hdr) < _REC_HDR.size:
                raise BusError(f"{path}: truncated record header")
            plen, t_us, code, slen = _REC_HDR.unpack(hdr)
            src = fh.read(slen).decode("ascii", "replace")
            payload = fh.read(plen)
            if len(payload) < plen:
                raise BusError(f"{path}: truncated record payload")
            yield Delivery(_TOPIC_NAMES[code], payload, src, t_us / 1e6, seq)
            seq += 1


def replay_capture(path, bus, loop: EventLoop) -> int:
    """Schedule every captured record for publication at its recorded time."""
    n = 0
    for d in read_capture(path):
        loop.call_at(d.time, bus.publish, d.topic, d.payload, d.source)
        n += 1
    return n
