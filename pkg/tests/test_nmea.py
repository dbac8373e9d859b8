from functools import reduce

import pytest
from hypothesis import given, strategies as st

from navrad import nmea

FIELD_CHARS = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=126,
                           blacklist_characters="$!*,"),
    max_size=12,
)


def test_parse_heading_sentence():
    s = nmea.parse("$HETHS,33.2,A*1F")
    assert s.talker == "HE"
    assert s.type_code == "THS"
    assert s.fields == ("33.2", "A")
    assert s.checksum == 0x1F


def test_parse_bad_checksum():
    with pytest.raises(nmea.ChecksumError):
        nmea.parse("$HETHS,33.2,A*20")


def test_serialize_heading_sentence():
    s = nmea.Sentence("HE", "THS", ("33.2", "A"))
    assert nmea.serialize(s, crlf=False) == "$HETHS,33.2,A*1F"
    assert nmea.serialize(s).endswith("\r\n")


def test_serialize_empty_fields_checksum_oracle():
    s = nmea.Sentence("GP", "XTE", ())
    expected = reduce(lambda a, b: a ^ b, b"GPXTE")
    assert nmea.serialize(s, crlf=False) == f"$GPXTE*{expected:02X}"


def test_reserved_character_rejected():
    with pytest.raises(nmea.NmeaError):
        nmea.serialize(nmea.Sentence("GP", "ABC", ("x,y",)))


@given(st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ", min_size=2, max_size=2),
       st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ", min_size=3, max_size=3),
       st.lists(FIELD_CHARS, max_size=8))
def test_roundtrip_random_sentences(talker, code, fields):
    s = nmea.Sentence(talker, code, tuple(fields))
    back = nmea.parse(nmea.serialize(s))
    assert back == s
    assert back.checksum == s.checksum


def test_ttm_roundtrip_negative_tcpa():
    t = nmea.TrackedTargetMessage(
        target_id=3, distance=4.2, bearing=110.0, speed=9.5, course=187.0,
        dcpa=0.8, tcpa=-8.3, status="tracked")
    back = nmea.parse_ttm(nmea.parse(nmea.serialize(nmea.build_ttm(t))))
    assert back.status == "tracked"
    assert back.tcpa == pytest.approx(-8.3)


def test_ttm_status_mapping():
    t = nmea.TrackedTargetMessage(target_id=1, distance=1.0, bearing=0.0,
                                  speed=0.0, course=0.0, dcpa=0.0,
                                  tcpa=None, status="lost")
    s = nmea.build_ttm(t)
    assert s.fields[11] == "L"
    assert nmea.parse_ttm(s).status == "lost"
    assert nmea.parse_ttm(s).tcpa is None


def test_gga_coordinates():
    s = nmea.build_gga(44.4, 8.933333333333334, 3723.0)
    lat, lon = nmea.parse_gga(s)
    assert lat == pytest.approx(44.4, abs=1e-6)
    assert lon == pytest.approx(8.9333333, abs=1e-6)
    assert s.fields[1] == "4424.0000"
    assert s.fields[3] == "00856.0000"


def test_gga_southern_western():
    s = nmea.build_gga(-33.85, -151.2, 0.0)
    lat, lon = nmea.parse_gga(s)
    assert lat == pytest.approx(-33.85, abs=1e-6)
    assert lon == pytest.approx(-151.2, abs=1e-6)


def test_gll_roundtrip():
    s = nmea.build_gll(44.05, 8.6, 120.0)
    lat, lon = nmea.parse_gll(s)
    assert (lat, lon) == (pytest.approx(44.05, abs=1e-6),
                          pytest.approx(8.6, abs=1e-6))


def test_vhw_roundtrip():
    heading, speed = nmea.parse_vhw(nmea.build_vhw(123.4, 9.9))
    assert heading == pytest.approx(123.4)
    assert speed == pytest.approx(9.9)


def test_hdt_roundtrip():
    assert nmea.parse_hdt(nmea.build_hdt(271.6)) == pytest.approx(271.6)


def test_wrong_field_count():
    with pytest.raises(nmea.NmeaError):
        nmea.parse_ttm(nmea.Sentence("RA", "TTM", ("01", "2.0")))


def test_bad_framing():
    with pytest.raises(nmea.FramingError):
        nmea.parse("HETHS,33.2,A*1F")
    with pytest.raises(nmea.FramingError):
        nmea.parse("$HETHS,33.2,A")
