"""ASTERIX CAT-240 radar video codec.

Wire layout (all integers big-endian):

  Offset  Size  Field
  ------  ----  -----
   0       1    CAT               -- always 240
   1       2    LEN               -- total record length in bytes
   3       2    FSPEC             -- FX-extended presence bitmap (2 bytes here)
   5       2    Data Source Id    -- SAC, SIC
   7       1    Message Type      -- 002 = video message
   8       3    MSG_INDEX         -- 24-bit sequence number
  11       2    START_AZ          -- LSB 360/2^16 degrees
  13       2    END_AZ            -- LSB 360/2^16 degrees
  15       4    START_RG          -- start range in cells (center bias)
  19       4    CELL_DUR          -- cell duration in femtoseconds
  23       2    Cell Resolution   -- 1 spare byte, 1 resolution code byte
  25       2    NB_VB             -- number of video blocks
  27       3    NB_CELLS          -- valid cell count
  30       1+   Video Block       -- REP byte, then REP x 4/64/256 data bytes
                                     (exactly one of low/medium/high volume)
  last 3   3    TIME_OF_DAY       -- LSB 1/128 s, wraps at midnight

Item presence is encoded in the FSPEC (FRN order as above: data source=1,
message type=2, record header=3, video header=4, cell resolution=5, block
counts=6, low volume block=7; second byte: medium=8, high=9, time of day=10).
The encoder always emits every item, choosing the smallest block class whose
single block holds the packed cells; payloads over 256 bytes use repeated
high-volume blocks.  Cells are packed big-endian, most significant cell
first within a byte for sub-byte resolutions.  Trailing padding in the last
block is discarded on decode (cells truncated to NB_CELLS).

Messages are plain immutable values; everything here is a pure function and
safe to use from any thread.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

CAT240 = 240
MSGTYPE_VIDEO = 2

AZ_LSB = 360.0 / 65536.0  # degrees per azimuth count
TOD_LSB = 1.0 / 128.0     # seconds per time-of-day count
FS_PER_S = 1e15

# resolution code <-> bits per cell
RES_CODE_TO_BITS = {1: 1, 2: 2, 3: 4, 4: 8, 5: 16, 6: 32}
BITS_TO_RES_CODE = {v: k for k, v in RES_CODE_TO_BITS.items()}

_BLOCK_SIZES = (4, 64, 256)  # low / medium / high volume block data bytes

# Fixed offsets of the always-present items (2-byte FSPEC layout).
OFF_MSG_INDEX = 8
OFF_START_AZ = 11
OFF_END_AZ = 13
OFF_START_RG = 15
OFF_CELL_DUR = 19
OFF_REP = 30
OFF_CELL_DATA = 31

_HDR = struct.Struct(">BH")                    # CAT, LEN
_FIXED = struct.Struct(">BBB3sHHIIBBH3s")      # items 1-6 after the FSPEC


class AsterixError(ValueError):
    pass


class EncodeError(AsterixError):
    pass


class DecodeError(AsterixError):
    pass


class WrongCategoryError(DecodeError):
    pass


class TruncatedError(DecodeError):
    pass


class UnknownResolutionError(DecodeError):
    pass


class LengthMismatchError(DecodeError):
    pass


@dataclass(frozen=True)
class AntennaId:
    """Identity of a configured radar antenna: SAC/SIC plus the transport
    endpoint it transmits from."""
    sac: int
    sic: int
    source: str  # "address:port" of the emitting endpoint

    def key(self) -> tuple[int, int, str]:
        return (self.sac, self.sic, self.source)


def _dtype_for(cell_res: int):
    if cell_res <= 8:
        return np.uint8
    if cell_res == 16:
        return np.uint16
    return np.uint32


@dataclass(frozen=True, eq=False)
class VideoMessage:
    """One decoded CAT-240 radar video message."""

    sac: int
    sic: int
    message_id: int       # 24-bit sequence number
    time_of_day: float    # seconds since midnight, resolution 1/128 s
    start_az: float       # degrees [0, 360)
    end_az: float         # degrees [0, 360)
    center_bias: int      # start range offset, in cells
    cell_dur: float       # seconds per cell
    cell_res: int         # bits per cell: 1, 2, 4, 8, 16 or 32
    cells: np.ndarray = field(repr=False)  # n_cells unsigned strengths

    def __post_init__(self):
        if self.cell_res not in BITS_TO_RES_CODE:
            raise ValueError(f"unsupported cell resolution: {self.cell_res}")
        raw = np.asarray(self.cells)
        if raw.ndim != 1 or raw.size < 1:
            raise ValueError("cells must be a non-empty 1-d sequence")
        if int(raw.min()) < 0 or int(raw.max()) >= (1 << self.cell_res):
            raise ValueError(f"cell value out of range for {self.cell_res}-bit cells")
        cells = np.ascontiguousarray(raw, dtype=_dtype_for(self.cell_res))
        object.__setattr__(self, "cells", cells)
        if not 0 <= self.sac <= 255 or not 0 <= self.sic <= 255:
            raise ValueError("SAC/SIC must fit one byte")
        if not 0 <= self.message_id < (1 << 24):
            raise ValueError("message_id must fit 24 bits")
        if not (0.0 <= self.start_az < 360.0 and 0.0 <= self.end_az < 360.0):
            raise ValueError("azimuths must lie in [0, 360)")
        if self.cell_dur <= 0.0:
            raise ValueError("cell_dur must be > 0")
        if not 0 <= self.center_bias < (1 << 32):
            raise ValueError("center_bias must fit 32 bits")
        if not 0.0 <= self.time_of_day < 86400.0:
            raise ValueError("time_of_day must lie in [0, 86400)")

    @property
    def n_cells(self) -> int:
        return int(self.cells.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VideoMessage):
            return NotImplemented
        return (
            self.sac == other.sac
            and self.sic == other.sic
            and self.message_id == other.message_id
            and self.time_of_day == other.time_of_day
            and self.start_az == other.start_az
            and self.end_az == other.end_az
            and self.center_bias == other.center_bias
            and self.cell_dur == other.cell_dur
            and self.cell_res == other.cell_res
            and self.cells.size == other.cells.size
            and bool(np.array_equal(self.cells, other.cells))
        )

    def quantized(self) -> "VideoMessage":
        """Snap azimuths, cell duration and time of day to their wire
        resolution so that encode/decode is the exact identity."""
        return replace(
            self,
            start_az=(round(self.start_az / AZ_LSB) % 65536) * AZ_LSB,
            end_az=(round(self.end_az / AZ_LSB) % 65536) * AZ_LSB,
            cell_dur=round(self.cell_dur * FS_PER_S) / FS_PER_S,
            time_of_day=(round(self.time_of_day / TOD_LSB) % (86400 * 128)) * TOD_LSB,
        )


def span_deg(start_az: float, end_az: float) -> float:
    """Azimuthal span of a message in (0, 360].

    A zero-width encoding (start == end) is read as a full-circle sweep;
    that is the only way a 360-degree message can appear on the wire.
    """
    s = (end_az - start_az) % 360.0
    return 360.0 if s == 0.0 else s


def cell_range(msg: VideoMessage, i: int) -> tuple[float, float]:
    """Radial extent (rho_min, rho_max) in meters covered by cell `i`."""
    if not 0 <= i < msg.n_cells:
        raise IndexError(f"cell index {i} out of range for {msg.n_cells} cells")
    half_c = SPEED_OF_LIGHT / 2.0
    rho_min = msg.cell_dur * (i + msg.center_bias) * half_c
    rho_max = msg.cell_dur * (i + 1 + msg.center_bias) * half_c
    return rho_min, rho_max


def cell_width_m(cell_dur: float) -> float:
    """Radial width of one cell in meters."""
    return cell_dur * SPEED_OF_LIGHT / 2.0


def pack_cells(cells: np.ndarray, cell_res: int) -> bytes:
    """Pack cell strengths into bytes, MSB cell first for sub-byte widths."""
    if cell_res == 8:
        return cells.astype(np.uint8).tobytes()
    if cell_res == 16:
        return cells.astype(">u2").tobytes()
    if cell_res == 32:
        return cells.astype(">u4").tobytes()
    per_byte = 8 // cell_res
    pad = (-cells.size) % per_byte
    padded = np.concatenate([cells.astype(np.uint8), np.zeros(pad, np.uint8)])
    groups = padded.reshape(-1, per_byte)
    out = np.zeros(groups.shape[0], np.uint16)
    for j in range(per_byte):
        out = (out << cell_res) | groups[:, j]
    return out.astype(np.uint8).tobytes()


def unpack_cells(data: bytes, cell_res: int, n_cells: int) -> np.ndarray:
    """Inverse of pack_cells; returns exactly n_cells values."""
    if cell_res == 8:
        return np.frombuffer(data, np.uint8, count=n_cells)
    if cell_res == 16:
        return np.frombuffer(data, ">u2", count=n_cells).astype(np.uint16)
    if cell_res == 32:
        return np.frombuffer(data, ">u4", count=n_cells).astype(np.uint32)
    raw = np.frombuffer(data, np.uint8)
    per_byte = 8 // cell_res
    mask = (1 << cell_res) - 1
    cols = []
    for j in range(per_byte):
        shift = 8 - cell_res * (j + 1)
        cols.append((raw >> shift) & mask)
    cells = np.stack(cols, axis=1).reshape(-1)
    return cells[:n_cells]


def _encode_az(az: float) -> int:
    return round(az / AZ_LSB) % 65536


def encode(msg: VideoMessage) -> bytes:
    """Encode a video message to its wire record."""
    n_cells = msg.n_cells
    if n_cells >= (1 << 24):
        raise EncodeError("n_cells exceeds the 24-bit count field")
    dur_fs = round(msg.cell_dur * FS_PER_S)
    if not 0 < dur_fs < (1 << 32):
        raise EncodeError(f"cell_dur {msg.cell_dur!r} s does not fit 32-bit femtoseconds")

    payload = pack_cells(msg.cells, msg.cell_res)
    if len(payload) <= _BLOCK_SIZES[0]:
        cls = 0
    elif len(payload) <= _BLOCK_SIZES[1]:
        cls = 1
    else:
        cls = 2
    block = _BLOCK_SIZES[cls]
    rep = -(-len(payload) // block)
    if rep > 255:
        raise EncodeError("video block repetition factor exceeds 255")
    padded = payload + b"\x00" * (rep * block - len(payload))

    first = 0b11111101 | (0b10 if cls == 0 else 0)          # FRN1-6, FRN7=low, FX
    second = (0x80 if cls == 1 else 0) | (0x40 if cls == 2 else 0) | 0x20  # med/high + TOD
    fspec = bytes([first, second])

    body = _FIXED.pack(
        msg.sac, msg.sic, MSGTYPE_VIDEO,
        msg.message_id.to_bytes(3, "big"),
        _encode_az(msg.start_az), _encode_az(msg.end_az),
        msg.center_bias, dur_fs,
        0, BITS_TO_RES_CODE[msg.cell_res],
        rep, n_cells.to_bytes(3, "big"),
    )
    tod = (round(msg.time_of_day / TOD_LSB) % (86400 * 128)).to_bytes(3, "big")
    total = _HDR.size + len(fspec) + len(body) + 1 + len(padded) + 3
    if total > 0xFFFF:
        raise EncodeError("record exceeds the 16-bit length field")
    return _HDR.pack(CAT240, total) + fspec + body + bytes([rep]) + padded + tod


class HeaderView(NamedTuple):
    """Header fields of a CAT-240 record, decoded without touching cells."""
    sac: int
    sic: int
    message_id: int
    time_of_day: float
    start_az: float
    end_az: float
    center_bias: int
    cell_dur: float
    cell_res: int
    n_cells: int
    n_blocks: int
    block_class: int      # 0 low, 1 medium, 2 high
    cells_offset: int
    record_len: int

    @property
    def span(self) -> float:
        return span_deg(self.start_az, self.end_az)


# (first FSPEC byte, second) -> block class, for records in canonical item order
_FSPEC_FAST = {(0xFF, 0x20): 0, (0xFD, 0xA0): 1, (0xFD, 0x60): 2}


def decode_header(data: bytes) -> HeaderView:
    """Decode the header of a CAT-240 record; cheap, cells untouched."""
    if len(data) < 3:
        raise TruncatedError("record shorter than the category/length header")
    cat, length = _HDR.unpack_from(data)
    if cat != CAT240:
        raise WrongCategoryError(f"expected category 240, got {cat}")
    if length != len(data):
        raise LengthMismatchError(f"length field {length} != record size {len(data)}")

    # fast path: the canonical layout this codec itself emits
    cls = _FSPEC_FAST.get((data[3], data[4])) if len(data) >= 34 else None
    if cls is not None:
        (sac, sic, msgtype, mid, s_az, e_az, bias, dur_fs,
         _spare, res_code, nbvb, ncells) = _FIXED.unpack_from(data, 5)
        rep = data[OFF_REP]
        end = OFF_CELL_DATA + rep * _BLOCK_SIZES[cls] + 3
        if msgtype == MSGTYPE_VIDEO and res_code in RES_CODE_TO_BITS \
                and dur_fs and ncells != b"\x00\x00\x00" and end == length:
            return HeaderView(
                sac=sac, sic=sic, message_id=int.from_bytes(mid, "big"),
                time_of_day=int.from_bytes(data[-3:], "big") * TOD_LSB,
                start_az=s_az * AZ_LSB, end_az=e_az * AZ_LSB,
                center_bias=bias, cell_dur=dur_fs / FS_PER_S,
                cell_res=RES_CODE_TO_BITS[res_code],
                n_cells=int.from_bytes(ncells, "big"),
                n_blocks=rep, block_class=cls,
                cells_offset=OFF_CELL_DATA, record_len=length,
            )

    # FSPEC: FX-extended presence bitmap
    pos = 3
    frns: list[bool] = []
    while True:
        if pos >= len(data):
            raise TruncatedError("record ends inside the FSPEC")
        b = data[pos]
        pos += 1
        frns.extend(bool(b & (0x80 >> i)) for i in range(7))
        if not b & 1:
            break
    frns += [False] * (10 - len(frns))

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedError("record truncated inside a data item")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if not all(frns[i] for i in range(6)):
        raise DecodeError("missing mandatory items in FSPEC")
    sac, sic = take(2)
    msgtype = take(1)[0]
    if msgtype != MSGTYPE_VIDEO:
        raise DecodeError(f"unsupported message type {msgtype:03d}")
    message_id = int.from_bytes(take(3), "big")
    start_az = int.from_bytes(take(2), "big") * AZ_LSB
    end_az = int.from_bytes(take(2), "big") * AZ_LSB
    center_bias = int.from_bytes(take(4), "big")
    dur_fs = int.from_bytes(take(4), "big")
    if dur_fs == 0:
        raise DecodeError("cell duration of zero")
    take(1)  # spare
    res_code = take(1)[0]
    if res_code not in RES_CODE_TO_BITS:
        raise UnknownResolutionError(f"unknown resolution code {res_code}")
    cell_res = RES_CODE_TO_BITS[res_code]
    n_blocks = int.from_bytes(take(2), "big")
    n_cells = int.from_bytes(take(3), "big")
    if n_cells == 0:
        raise DecodeError("empty video block (zero cells)")

    present = [frns[6], frns[7], frns[8]]
    if sum(present) != 1:
        raise DecodeError("record must carry exactly one video block class")
    block_class = present.index(True)
    rep = take(1)[0]
    cells_offset = pos
    take(rep * _BLOCK_SIZES[block_class])
    if not frns[9]:
        raise DecodeError("missing time of day item")
    tod = int.from_bytes(take(3), "big") * TOD_LSB
    if pos != len(data):
        raise LengthMismatchError("trailing bytes after the last item")

    return HeaderView(
        sac=sac, sic=sic, message_id=message_id, time_of_day=tod,
        start_az=start_az, end_az=end_az, center_bias=center_bias,
        cell_dur=dur_fs / FS_PER_S, cell_res=cell_res, n_cells=n_cells,
        n_blocks=rep, block_class=block_class,
        cells_offset=cells_offset, record_len=length,
    )


def decode(data: bytes) -> VideoMessage:
    """Decode a full CAT-240 record, including cell strengths."""
    h = decode_header(data)
    nbytes = h.n_blocks * _BLOCK_SIZES[h.block_class]
    needed = -(-h.n_cells * h.cell_res // 8)
    if needed > nbytes:
        raise TruncatedError("video block too small for the declared cell count")
    raw = data[h.cells_offset:h.cells_offset + nbytes]
    cells = unpack_cells(raw, h.cell_res, h.n_cells)
    # wire values cannot violate the type invariants, so skip re-validation
    msg = object.__new__(VideoMessage)
    for name, value in (
        ("sac", h.sac), ("sic", h.sic), ("message_id", h.message_id),
        ("time_of_day", h.time_of_day), ("start_az", h.start_az),
        ("end_az", h.end_az), ("center_bias", h.center_bias),
        ("cell_dur", h.cell_dur), ("cell_res", h.cell_res), ("cells", cells),
    ):
        object.__setattr__(msg, name, value)
    return msg
