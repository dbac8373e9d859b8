"""AIS message payloads and their VDM/VDO transport.

Implements the two message types the testbed exchanges: position reports
(type 1; type 3 shares the layout and decodes the same way) and static/
voyage data (type 5).  Payload bits are armored into 6-bit ASCII and
wrapped in !AIVDM sentences, split into a multi-sentence group when the
payload exceeds one sentence.

Field quantization on the radio payload:
  lon/lat   1/10000 arc-minute
  SOG       0.1 knot
  COG       0.1 degree
  heading   1 degree
  timestamp 1 second
Decoding the encoding of a report is exact up to these steps.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import nmea

_SIXBIT_TEXT = "@ABCDEFGHIJKLMNOPQRSTUVWXYZ[\\]^_ !\"#$%&'()*+,-./0123456789:;<=>?"

MAX_PAYLOAD_CHARS = 60  # per transport sentence


class AisError(ValueError):
    pass


@dataclass(frozen=True)
class AisPositionReport:
    mmsi: int
    lat: float          # degrees, |lat| <= 90
    lon: float          # degrees, [-180, 180)
    sog: float          # knots, >= 0
    cog: float          # degrees [0, 360)
    heading: float      # degrees [0, 360)
    timestamp_s: int    # UTC second of the report, 0..59

    def __post_init__(self):
        if not 0 <= self.mmsi <= 999_999_999:
            raise AisError("MMSI must be a 9-digit id")
        if abs(self.lat) > 90.0 or not -180.0 <= self.lon < 180.0:
            raise AisError("position out of range")
        if self.sog < 0.0:
            raise AisError("SOG must be >= 0")


@dataclass(frozen=True)
class AisStaticData:
    mmsi: int
    name: str
    dim_bow: int        # meters forward of the reference point
    dim_stern: int      # meters aft
    dim_port: int       # meters to port
    dim_starboard: int  # meters to starboard

    def __post_init__(self):
        if min(self.dim_bow, self.dim_stern, self.dim_port, self.dim_starboard) < 0:
            raise AisError("extents must be >= 0")

    @property
    def width(self) -> int:
        return self.dim_port + self.dim_starboard

    @property
    def length(self) -> int:
        return self.dim_bow + self.dim_stern


class _BitWriter:
    def __init__(self):
        self.value = 0
        self.nbits = 0

    def put(self, v: int, width: int):
        self.value = (self.value << width) | (v & ((1 << width) - 1))
        self.nbits += width

    def put_signed(self, v: int, width: int):
        self.put(v & ((1 << width) - 1), width)

    def put_text(self, text: str, chars: int):
        text = text.upper()[:chars]
        for ch in text:
            idx = _SIXBIT_TEXT.find(ch)
            self.put(idx if idx >= 0 else 0, 6)
        for _ in range(chars - len(text)):
            self.put(0, 6)  # '@' padding


class _BitReader:
    def __init__(self, value: int, nbits: int):
        self.value = value
        self.nbits = nbits
        self.pos = 0

    def take(self, width: int) -> int:
        if self.pos + width > self.nbits:
            raise AisError("payload too short for the declared message type")
        shift = self.nbits - self.pos - width
        self.pos += width
        return (self.value >> shift) & ((1 << width) - 1)

    def take_signed(self, width: int) -> int:
        v = self.take(width)
        if v & (1 << (width - 1)):
            v -= 1 << width
        return v

    def take_text(self, chars: int) -> str:
        out = "".join(_SIXBIT_TEXT[self.take(6)] for _ in range(chars))
        return out.replace("@", " ").rstrip()


def _armor(value: int, nbits: int) -> tuple[str, int]:
    """Pack a bit string into 6-bit armored chars; returns (payload, fill)."""
    fill = (-nbits) % 6
    value <<= fill
    nbits += fill
    chars = []
    for i in range(nbits // 6):
        shift = nbits - 6 * (i + 1)
        v = (value >> shift) & 0x3F
        chars.append(chr(v + 48 if v < 40 else v + 56))
    return "".join(chars), fill


def _unarmor(payload: str, fill: int) -> tuple[int, int]:
    value = 0
    for ch in payload:
        v = ord(ch) - 48
        if v > 40:
            v -= 8
        if not 0 <= v < 64:
            raise AisError(f"invalid armored character {ch!r}")
        value = (value << 6) | v
    nbits = len(payload) * 6 - fill
    return value >> fill, nbits


def _position_bits(r: AisPositionReport) -> _BitWriter:
    w = _BitWriter()
    w.put(1, 6)                      # message type 1
    w.put(0, 2)                      # repeat indicator
    w.put(r.mmsi, 30)
    w.put(0, 4)                      # nav status: under way using engine
    w.put_signed(-128, 8)            # rate of turn: not available
    w.put(min(round(r.sog * 10), 1022), 10)
    w.put(0, 1)                      # position accuracy
    w.put_signed(round(r.lon * 600000), 28)
    w.put_signed(round(r.lat * 600000), 27)
    w.put(round(r.cog * 10) % 3600, 12)
    w.put(round(r.heading) % 360, 9)
    w.put(int(r.timestamp_s) % 60, 6)
    w.put(0, 2)                      # maneuver indicator
    w.put(0, 3)                      # spare
    w.put(0, 1)                      # RAIM
    w.put(0, 19)                     # radio status
    return w


def _static_bits(s: AisStaticData) -> _BitWriter:
    w = _BitWriter()
    w.put(5, 6)                      # message type 5
    w.put(0, 2)
    w.put(s.mmsi, 30)
    w.put(0, 2)                      # AIS version
    w.put(0, 30)                     # IMO number
    w.put_text("", 7)                # callsign
    w.put_text(s.name, 20)
    w.put(70, 8)                     # ship type: cargo
    w.put(min(s.dim_bow, 511), 9)
    w.put(min(s.dim_stern, 511), 9)
    w.put(min(s.dim_port, 63), 6)
    w.put(min(s.dim_starboard, 63), 6)
    w.put(1, 4)                      # EPFD: GPS
    w.put(0, 20)                     # ETA
    w.put(0, 8)                      # draught
    w.put_text("", 20)               # destination
    w.put(0, 1)                      # DTE
    w.put(0, 1)                      # spare
    return w


def encode_vdm(report: AisPositionReport | AisStaticData,
               channel: str = "A", own_ship: bool = False,
               seq_id: int = 0) -> list[nmea.Sentence]:
    """Armor a report into one or more !AIVDM (or !AIVDO) sentences."""
    if isinstance(report, AisPositionReport):
        bits = _position_bits(report)
    elif isinstance(report, AisStaticData):
        bits = _static_bits(report)
    else:
        raise AisError(f"cannot encode {type(report).__name__}")
    payload, fill = _armor(bits.value, bits.nbits)

    chunks = [payload[i:i + MAX_PAYLOAD_CHARS]
              for i in range(0, len(payload), MAX_PAYLOAD_CHARS)]
    total = len(chunks)
    type_code = "VDO" if own_ship else "VDM"
    out = []
    for num, chunk in enumerate(chunks, start=1):
        fields = (
            str(total), str(num),
            str(seq_id) if total > 1 else "",
            channel, chunk,
            str(fill if num == total else 0),
        )
        out.append(nmea.Sentence("AI", type_code, fields, bang=True))
    return out


def decode_vdm(sentences: list[nmea.Sentence]) -> AisPositionReport | AisStaticData:
    """Reassemble a VDM/VDO group and decode its payload."""
    if not sentences:
        raise AisError("empty sentence group")
    parts: dict[int, tuple[str, int]] = {}
    total = None
    for s in sentences:
        if s.type_code not in ("VDM", "VDO") or len(s.fields) < 6:
            raise AisError("not an AIS transport sentence")
        total = int(s.fields[0])
        parts[int(s.fields[1])] = (s.fields[4], int(s.fields[5]))
    if total is None or sorted(parts) != list(range(1, total + 1)):
        raise AisError("incomplete multi-part group")

    payload = "".join(parts[i][0] for i in range(1, total + 1))
    fill = parts[total][1]
    value, nbits = _unarmor(payload, fill)
    r = _BitReader(value, nbits)
    msg_type = r.take(6)
    if msg_type in (1, 2, 3):
        r.take(2)
        mmsi = r.take(30)
        r.take(4)
        r.take_signed(8)
        sog = r.take(10) / 10.0
        r.take(1)
        lon = r.take_signed(28) / 600000.0
        lat = r.take_signed(27) / 600000.0
        cog = (r.take(12) % 3600) / 10.0
        heading = r.take(9) % 360
        ts = r.take(6)
        return AisPositionReport(mmsi=mmsi, lat=lat, lon=lon, sog=sog,
                                 cog=cog, heading=float(heading), timestamp_s=ts)
    if msg_type == 5:
        r.take(2)
        mmsi = r.take(30)
        r.take(2)
        r.take(30)
        r.take_text(7)
        name = r.take_text(20)
        r.take(8)
        bow = r.take(9)
        stern = r.take(9)
        port = r.take(6)
        starboard = r.take(6)
        return AisStaticData(mmsi=mmsi, name=name, dim_bow=bow,
                             dim_stern=stern, dim_port=port,
                             dim_starboard=starboard)
    raise AisError(f"unsupported AIS message type {msg_type}")
