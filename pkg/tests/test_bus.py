import os
import socket
import threading
import time

import pytest

from navrad.asterix import decode, encode
from navrad.bus import (TOPIC_ASTERIX, TOPIC_NMEA, CaptureWriter, Delivery,
                        EventLoop, InProcBus, UdpMulticastBus, open_bus,
                        read_capture, replay_capture)


def test_publish_subscribe_roundtrip():
    loop = EventLoop()
    bus = InProcBus(loop)
    got = bus.subscribe_stream(TOPIC_ASTERIX)
    bus.publish(TOPIC_ASTERIX, b"\xf0payload", "10.0.0.1:1")
    loop.run_until(1.0)
    assert len(got) == 1
    assert got[0].payload == b"\xf0payload"
    assert got[0].source == "10.0.0.1:1"


def test_every_subscriber_gets_each_payload_once():
    loop = EventLoop()
    bus = InProcBus(loop)
    a = bus.subscribe_stream(TOPIC_NMEA)
    b = bus.subscribe_stream(TOPIC_NMEA)
    bus.publish(TOPIC_NMEA, b"one", "s")
    bus.publish(TOPIC_NMEA, b"two", "s")
    loop.run_until(1.0)
    assert [d.payload for d in a] == [b"one", b"two"]
    assert [d.payload for d in b] == [b"one", b"two"]


def test_publisher_hears_its_own_traffic():
    loop = EventLoop()
    bus = InProcBus(loop)
    got = bus.subscribe_stream(TOPIC_NMEA)
    bus.publish(TOPIC_NMEA, b"self", "me")
    loop.run_until(0.1)
    assert got and got[0].source == "me"


def test_delayed_publication_orders_after():
    loop = EventLoop()
    bus = InProcBus(loop)
    got = bus.subscribe_stream(TOPIC_ASTERIX)

    def emit():
        bus.publish(TOPIC_ASTERIX, b"first", "a")
        bus.publish(TOPIC_ASTERIX, b"late", "b", delay=0.050)
        bus.publish(TOPIC_ASTERIX, b"second", "a", delay=0.010)

    loop.call_at(1.0, emit)
    loop.run_until(2.0)
    assert [d.payload for d in got] == [b"first", b"second", b"late"]
    assert [round(d.time, 3) for d in got] == [1.0, 1.01, 1.05]


def test_topics_are_isolated():
    loop = EventLoop()
    bus = InProcBus(loop)
    got = bus.subscribe_stream(TOPIC_ASTERIX)
    bus.publish(TOPIC_NMEA, b"x", "s")
    loop.run_until(1.0)
    assert got == []


def test_capture_roundtrip(tmp_path):
    path = tmp_path / "traffic.cap"
    loop = EventLoop()
    bus = InProcBus(loop)
    writer = CaptureWriter(path)
    writer.attach(bus)
    bus.publish(TOPIC_ASTERIX, b"\x01\x02", "10.0.0.1:8600")
    loop.call_at(0.5, bus.publish, TOPIC_NMEA, b"$HETHS,33.2,A*1F\r\n", "10.0.0.2:1")
    loop.run_until(1.0)
    writer.close()

    records = list(read_capture(path))
    assert [(r.topic, r.payload) for r in records] == [
        (TOPIC_ASTERIX, b"\x01\x02"), (TOPIC_NMEA, b"$HETHS,33.2,A*1F\r\n")]
    assert records[1].time == pytest.approx(0.5, abs=1e-6)
    assert records[0].source == "10.0.0.1:8600"


def test_capture_replay(tmp_path):
    path = tmp_path / "traffic.cap"
    loop = EventLoop()
    bus = InProcBus(loop)
    writer = CaptureWriter(path)
    writer.attach(bus)
    for i in range(5):
        loop.call_at(i * 0.25, bus.publish, TOPIC_NMEA, f"m{i}".encode(), "s")
    loop.run_until(2.0)
    writer.close()

    loop2 = EventLoop()
    bus2 = InProcBus(loop2)
    got = bus2.subscribe_stream(TOPIC_NMEA)
    n = replay_capture(path, bus2, loop2)
    loop2.run_until(10.0)
    assert n == 5
    assert [d.payload for d in got] == [f"m{i}".encode() for i in range(5)]
    assert got[3].time == pytest.approx(0.75, abs=1e-5)


def test_open_bus_factory():
    loop = EventLoop()
    assert isinstance(open_bus("inproc", loop), InProcBus)
    with pytest.raises(Exception):
        open_bus("carrier-pigeon")


def _multicast_available() -> bool:
    try:
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        s.bind(("", 18699))
        mreq = socket.inet_aton("239.192.42.9") + socket.inet_aton("127.0.0.1")
        s.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, mreq)
        s.close()
        return True
    except OSError:
        return False


@pytest.mark.skipif(not _multicast_available(),
                    reason="multicast loopback unavailable in this sandbox")
def test_udp_loopback_roundtrip():
    """One CAT-240 record through a real multicast socket and back."""
    import random
    from .test_asterix import make_msg

    record = encode(make_msg(random.Random(13)))
    port = 19000 + os.getpid() % 500
    bus = UdpMulticastBus(groups={TOPIC_ASTERIX: ("239.192.42.7", port),
                                  TOPIC_NMEA: ("239.192.42.8", port + 1)})
    got = []
    done = threading.Event()

    def on_rx(d: Delivery):
        got.append(d)
        done.set()

    bus.subscribe(TOPIC_ASTERIX, on_rx)
    time.sleep(0.1)
    t0 = time.monotonic()
    bus.publish(TOPIC_ASTERIX, record)
    done.wait(timeout=2.0)
    elapsed = time.monotonic() - t0
    bus.close()
    assert got, "record never came back over multicast loopback"
    assert got[0].payload == record
    assert decode(got[0].payload) == decode(record)
    assert elapsed <= 0.050  # the injection latency budget
