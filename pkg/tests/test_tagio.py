import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from photon_bench import tagio
from photon_bench.counts import CountTable
from photon_bench.seeding import derive_seed
from photon_bench.tagio import TagFileError
from photon_bench.timesim import EventStream


def _stream(n=50, seed=0, duration=10**9):
    rng = np.random.default_rng(seed)
    return EventStream.from_unsorted(rng.integers(0, duration, n), rng.integers(0, 3, n), duration)


def test_header_layout():
    s = _stream(4)
    data = tagio.encode_ptag(s, channel_count=3)
    assert len(data) == 16 + 4 * 12
    assert struct.unpack("<4sIII", data[:16]) == (b"PTAG", 1, 3, 0)
    assert struct.unpack("<QI", data[16:28]) == (s.times[0], s.channels[0])
    assert struct.unpack("<4sIII", tagio.encode_ptag(s)[:16])[2] == s.channels.max() + 1


@settings(max_examples=50)
@given(n=st.integers(0, 300), seed=st.integers(0, 2**32 - 1))
def test_ptag_round_trip_bit_exact(n, seed):
    s = _stream(n, seed)
    data = tagio.encode_ptag(s)
    back, nch = tagio.decode_ptag(data)
    np.testing.assert_array_equal(back.times, s.times)
    np.testing.assert_array_equal(back.channels, s.channels)
    assert tagio.encode_ptag(back, nch) == data


@settings(max_examples=30)
@given(n=st.integers(0, 200), seed=st.integers(0, 2**32 - 1))
def test_csv_round_trip(n, seed):
    s = _stream(n, seed)
    back = tagio.decode_csv(tagio.encode_csv(s))
    np.testing.assert_array_equal(back.times, s.times)
    np.testing.assert_array_equal(back.channels, s.channels)


def test_csv_header():
    assert tagio.encode_csv(_stream(1)).splitlines()[0] == b"time_ps,channel"


@pytest.mark.parametrize("bad", [
    b"",
    b"XTAG" + bytes(12),
    struct.pack("<4sIII", b"PTAG", 2, 1, 0),
    struct.pack("<4sIII", b"PTAG", 1, 1, 0) + bytes(5),
])
def test_decode_rejects_garbage(bad):
    with pytest.raises(TagFileError):
        tagio.decode_ptag(bad)


def test_files_and_read_any(tmp_path):
    s = _stream(100)
    tagio.write_ptag(tmp_path / "a.ptag", s)
    tagio.write_csv(tmp_path / "a.csv", s)
    for name in ("a.ptag", "a.csv"):
        back = tagio.read_any(tmp_path / name)
        np.testing.assert_array_equal(back.times, s.times)
    assert not list(tmp_path.glob("*.tmp*"))


def test_atomic_write_replaces(tmp_path):
    p = tmp_path / "x.bin"
    tagio.atomic_write_bytes(p, b"one")
    tagio.atomic_write_bytes(p, b"two")
    assert p.read_bytes() == b"two"
    assert len(list(tmp_path.iterdir())) == 1


# -- count tables and seeds --------------------------------------------------

def test_count_table_basics():
    t = CountTable({("Z", "H"): 3, ("Z", "V"): 1, ("X", "+"): 4})
    assert t.settings() == ["X", "Z"]
    assert t.total() == 8 and t.total("Z") == 4
    assert t.get_count("X", "-") == 0
    assert (t + t).get_count("Z", "H") == 6
    assert t.restrict(["Z"]).total() == 4
    assert t.digest() == CountTable(dict(reversed(list(t.items())))).digest()
    with pytest.raises(ValueError):
        CountTable({("Z", "H"): -1})


def test_derive_seed_stable():
    assert derive_seed(1, "a", 2) == derive_seed(1, "a", 2)
    assert derive_seed(1, "a", 2) != derive_seed(1, "a", 3)
    assert derive_seed(1, "a") != derive_seed(2, "a")
    assert 0 <= derive_seed(123, "x") < 2**64
