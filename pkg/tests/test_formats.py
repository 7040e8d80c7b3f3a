import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nestquant import codec, formats
from nestquant.codec import FIRST_BETA, QuantizerConfig


def test_dmat_roundtrip(tmp_path, rng):
    mat = rng.standard_normal((5, 24)).astype(np.float32).astype(np.float64)
    path = tmp_path / "m.dmat"
    formats.write_dmat(path, mat)
    raw = path.read_bytes()
    assert raw[:4] == b"DMAT" and struct.unpack("<II", raw[4:12]) == (5, 24)
    assert len(raw) == 12 + 4 * 5 * 24
    assert np.array_equal(formats.read_dmat(path), mat)
    assert formats.dmat_bytes(formats.read_dmat(path)) == raw


@pytest.mark.parametrize("blob", [b"", b"DMA", b"XXXX" + bytes(8), b"DMAT" + struct.pack("<II", 2, 2) + bytes(12)])
def test_dmat_malformed(blob):
    with pytest.raises(formats.FormatError):
        formats.parse_dmat(blob)


def test_nlq_layout_small():
    cfg = QuantizerConfig(5, (0.5, 1.0, 2.0), FIRST_BETA)
    codes = np.arange(16).reshape(1, 16) % 5
    qm = codec.QuantizedMatrix(codes, np.array([[2, 1]]), np.array([3.0]), cfg)
    expected = (
        b"NLQ1" + struct.pack("<HIIHBB", 1, 1, 16, 5, 3, 1)
        + struct.pack("<3d", 0.5, 1.0, 2.0)
        + struct.pack("<d", 3.0)
        + bytes([2 | (1 << 2)])
        + bytes(codes[0].tolist())
    )
    assert formats.nlq_bytes(qm) == expected


@pytest.mark.parametrize("k", [1, 4, 5, 9])
def test_nlq_roundtrip(tmp_path, rng, k):
    cfg = QuantizerConfig.from_grid(14, np.arange(1, k + 1) * 2.0)
    a = rng.standard_normal((7, 40))
    a[3] = 0
    qm = codec.quantize_matrix(a, cfg)
    path = tmp_path / "q.nlq"
    formats.write_nlq(path, qm)
    back = formats.read_nlq(path)
    assert back.config == cfg
    for f in ("codes", "beta_idx", "scales"):
        assert np.array_equal(getattr(back, f), getattr(qm, f))
    assert formats.nlq_bytes(back) == path.read_bytes()


def test_nlq_malformed(rng):
    qm = codec.quantize_matrix(rng.standard_normal((2, 16)), QuantizerConfig(14, (0.2, 0.3)))
    good = formats.nlq_bytes(qm)
    for blob in (good[:10], good[:24], good[:-1], b"NLQ2" + good[4:], good[:4] + b"\x02\x00" + good[6:]):
        with pytest.raises(formats.FormatError):
            formats.parse_nlq(blob)
    bad_code = bytearray(good)
    bad_code[-1] = 200
    with pytest.raises(formats.FormatError):
        formats.parse_nlq(bytes(bad_code))


def test_nlq_rejects_large_q(rng):
    qm = codec.quantize_matrix(rng.standard_normal((1, 8)), QuantizerConfig(300, (0.01,)))
    with pytest.raises(ValueError):
        formats.nlq_bytes(qm)


@given(st.integers(1, 8).flatmap(lambda k: st.tuples(st.just(k), st.lists(st.integers(0, k - 1), max_size=40))))
def test_index_packing(args):
    k, idx = args
    packed = formats.pack_indices(np.array(idx, dtype=np.int64), k)
    expected_len = (2 * len(idx) + 7) // 8 if k <= 4 else len(idx)
    assert len(packed) == expected_len
    assert formats.unpack_indices(packed, k, len(idx)).tolist() == idx
