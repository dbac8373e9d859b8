"""NMEA 0183 sentence handling.

Talker sentences are `$TTSSS,f1,f2,...*HH\\r\\n`: a two-letter talker id, a
three-letter type, comma-delimited text fields and an XOR checksum over
everything between the leading '$'/'!' and the '*'.  AIS transport
sentences use '!' framing and are built/parsed here too (payload armoring
lives in navrad.ais).

Typed builders/parsers are provided only for the sentences this testbed
uses (THS, HDT, GGA, GLL, VHW, TTM, VDM/VDO); anything else still parses
as a generic Sentence so unknown traffic is never dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

RESERVED = set("$!*,\r\n")


class NmeaError(ValueError):
    pass


class ChecksumError(NmeaError):
    pass


class FramingError(NmeaError):
    pass


def checksum(body: str) -> int:
    """XOR of all byte values in `body` (the text between '$' and '*')."""
    c = 0
    for ch in body.encode("ascii"):
        c ^= ch
    return c


@dataclass(frozen=True)
class Sentence:
    talker: str                 # two-letter talker id
    type_code: str              # three-letter sentence type
    fields: tuple[str, ...]     # ordered text fields
    bang: bool = False          # True for '!' framing (AIS transport)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(self.talker) != 2 or len(self.type_code) != 3:
            raise NmeaError("talker must be 2 chars and type 3 chars")

    @property
    def checksum(self) -> int:
        return checksum(self.body())

    def body(self) -> str:
        head = self.talker + self.type_code
        return head if not self.fields else head + "," + ",".join(self.fields)


def serialize(s: Sentence, crlf: bool = True) -> str:
    """Canonical text form `$TTSSS,f1,...*HH` (+ CR LF)."""
    for f in s.fields:
        if any(ch in RESERVED for ch in f):
            raise NmeaError(f"reserved character in field {f!r}")
    body = s.body()
    lead = "!" if s.bang else "$"
    out = f"{lead}{body}*{checksum(body):02X}"
    return out + "\r\n" if crlf else out


def parse(line: str) -> Sentence:
    """Parse one sentence, verifying framing and checksum."""
    line = line.rstrip("\r\n")
    if not line or line[0] not in "$!":
        raise FramingError(f"sentence must start with '$' or '!': {line!r}")
    star = line.rfind("*")
    if star < 0 or len(line) - star - 1 != 2:
        raise FramingError("missing or malformed checksum delimiter")
    body, given = line[1:star], line[star + 1:]
    try:
        given_val = int(given, 16)
    except ValueError:
        raise FramingError(f"non-hex checksum {given!r}") from None
    got = checksum(body)
    if got != given_val:
        raise ChecksumError(f"checksum mismatch: computed {got:02X}, sentence says {given:}")
    parts = body.split(",")
    if len(parts[0]) != 5:
        raise FramingError(f"malformed address field {parts[0]!r}")
    return Sentence(parts[0][:2], parts[0][2:], tuple(parts[1:]), bang=line[0] == "!")


# --------------------------------------------------------------------------
# field formatting helpers
# --------------------------------------------------------------------------

def _fmt(value: float, decimals: int = 1) -> str:
    out = f"{value:.{decimals}f}"
    return out


def _fmt_latlon(value: float, is_lat: bool) -> tuple[str, str]:
    """Decimal degrees -> (ddmm.mmmm, hemisphere)."""
    hemis = ("N", "S") if is_lat else ("E", "W")
    h = hemis[0] if value >= 0 else hemis[1]
    v = abs(value)
    deg = int(v)
    minutes = (v - deg) * 60.0
    width = 2 if is_lat else 3
    return f"{deg:0{width}d}{minutes:07.4f}", h


def _parse_latlon(text: str, hemi: str) -> float:
    dot = text.find(".")
    deg = int(text[:dot - 2])
    minutes = float(text[dot - 2:])
    value = deg + minutes / 60.0
    return -value if hemi in ("S", "W") else value


def _fmt_time(seconds_since_midnight: float) -> str:
    t = seconds_since_midnight % 86400.0
    h = int(t // 3600)
    m = int(t % 3600 // 60)
    s = t % 60
    return f"{h:02d}{m:02d}{s:05.2f}"


# --------------------------------------------------------------------------
# typed sentence payloads
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackedTargetMessage:
    """Payload of a TTM sentence (units: NM, knots, minutes)."""
    target_id: int
    distance: float        # nautical miles
    bearing: float         # degrees true
    speed: float           # knots
    course: float          # degrees true
    dcpa: float            # nautical miles
    tcpa: float | None     # minutes; negative = range opening; None = undefined
    status: str            # acquiring | tracked | lost
    name: str = ""

    def __post_init__(self):
        if self.status not in ("acquiring", "tracked", "lost"):
            raise NmeaError(f"bad target status {self.status!r}")


_TTM_STATUS = {"acquiring": "Q", "tracked": "T", "lost": "L"}
_TTM_STATUS_INV = {v: k for k, v in _TTM_STATUS.items()}


def build_ttm(t: TrackedTargetMessage, talker: str = "RA",
              time_s: float | None = None) -> Sentence:
    fields = [
        f"{t.target_id:02d}",
        _fmt(t.distance, 2), _fmt(t.bearing), "T",
        _fmt(t.speed), _fmt(t.course), "T",
        _fmt(t.dcpa, 2),
        "" if t.tcpa is None else _fmt(t.tcpa),
        "N", t.name, _TTM_STATUS[t.status], "",
        "" if time_s is None else _fmt_time(time_s),
        "A",
    ]
    return Sentence(talker, "TTM", tuple(fields))


def parse_ttm(s: Sentence) -> TrackedTargetMessage:
    if s.type_code != "TTM" or len(s.fields) < 12:
        raise NmeaError("not a TTM sentence")
    f = s.fields
    return TrackedTargetMessage(
        target_id=int(f[0]),
        distance=float(f[1]), bearing=float(f[2]),
        speed=float(f[4]), course=float(f[5]),
        dcpa=float(f[7]),
        tcpa=float(f[8]) if f[8] else None,
        status=_TTM_STATUS_INV.get(f[11], "tracked"),
        name=f[10],
    )


def build_ths(heading: float, talker: str = "HE", mode: str = "A") -> Sentence:
    return Sentence(talker, "THS", (_fmt(heading), mode))


def parse_ths(s: Sentence) -> float:
    if s.type_code != "THS" or len(s.fields) < 1:
        raise NmeaError("not a THS sentence")
    return float(s.fields[0])


def build_hdt(heading: float, talker: str = "HE") -> Sentence:
    return Sentence(talker, "HDT", (_fmt(heading), "T"))


def parse_hdt(s: Sentence) -> float:
    if s.type_code != "HDT" or len(s.fields) < 1:
        raise NmeaError("not an HDT sentence")
    return float(s.fields[0])


def build_gga(lat: float, lon: float, time_s: float, talker: str = "GP") -> Sentence:
    la, lah = _fmt_latlon(lat, True)
    lo, loh = _fmt_latlon(lon, False)
    fields = (_fmt_time(time_s), la, lah, lo, loh, "1", "10", "0.9", "0.0", "M",
              "0.0", "M", "", "")
    return Sentence(talker, "GGA", fields)


def parse_gga(s: Sentence) -> tuple[float, float]:
    if s.type_code != "GGA" or len(s.fields) < 5:
        raise NmeaError("not a GGA sentence")
    return (_parse_latlon(s.fields[1], s.fields[2]),
            _parse_latlon(s.fields[3], s.fields[4]))


def build_gll(lat: float, lon: float, time_s: float, talker: str = "GP") -> Sentence:
    la, lah = _fmt_latlon(lat, True)
    lo, loh = _fmt_latlon(lon, False)
    return Sentence(talker, "GLL", (la, lah, lo, loh, _fmt_time(time_s), "A", "A"))


def parse_gll(s: Sentence) -> tuple[float, float]:
    if s.type_code != "GLL" or len(s.fields) < 4:
        raise NmeaError("not a GLL sentence")
    return (_parse_latlon(s.fields[0], s.fields[1]),
            _parse_latlon(s.fields[2], s.fields[3]))


def build_vhw(heading: float, speed_kn: float, talker: str = "VW") -> Sentence:
    return Sentence(talker, "VHW",
                    (_fmt(heading), "T", _fmt(heading), "M",
                     _fmt(speed_kn), "N", _fmt(speed_kn * 1.852), "K"))


def parse_vhw(s: Sentence) -> tuple[float, float]:
    """(heading true, speed knots)."""
    if s.type_code != "VHW" or len(s.fields) < 6:
        raise NmeaError("not a VHW sentence")
    return float(s.fields[0]), float(s.fields[4])
