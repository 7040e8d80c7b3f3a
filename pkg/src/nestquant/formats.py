"""Binary containers: ``DMAT`` dense float32 matrices and ``NLQ1`` quantized matrices.

All fields are little-endian.

DMAT: ``b"DMAT"``, rows u32, cols u32, then rows*cols float32 row-major.

NLQ1: ``b"NLQ1"``, version u16 (=1), rows u32, cols u32, q u16, k u8,
strategy u8 (0 opt, 1 first), k float64 betas, then per row: scale float64,
the row's scale indices (2 bits each, low bits first, when k <= 4, else one
byte each; padded to a whole byte), and one byte per coordinate code.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .codec import FIRST_BETA, OPT_BETA, QuantizedMatrix, QuantizerConfig
from .lattice import DIM

DMAT_MAGIC = b"DMAT"
NLQ_MAGIC = b"NLQ1"
NLQ_VERSION = 1
_DMAT_HEADER = struct.Struct("<4sII")
_NLQ_HEADER = struct.Struct("<4sHIIHBB")
_STRATEGY_CODES = {OPT_BETA: 0, FIRST_BETA: 1}
_STRATEGY_NAMES = {v: k for k, v in _STRATEGY_CODES.items()}


class FormatError(ValueError):
    pass


def dmat_bytes(mat) -> bytes:
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise ValueError("DMAT holds 2-D matrices")
    rows, cols = mat.shape
    return _DMAT_HEADER.pack(DMAT_MAGIC, rows, cols) + np.ascontiguousarray(mat, dtype="<f4").tobytes()


def parse_dmat(buf: bytes) -> np.ndarray:
    if len(buf) < _DMAT_HEADER.size:
        raise FormatError("truncated DMAT header")
    magic, rows, cols = _DMAT_HEADER.unpack_from(buf)
    if magic != DMAT_MAGIC:
        raise FormatError(f"bad DMAT magic {magic!r}")
    body = buf[_DMAT_HEADER.size :]
    if len(body) != 4 * rows * cols:
        raise FormatError(f"DMAT body has {len(body)} bytes, expected {4 * rows * cols}")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float64)


def write_dmat(path, mat) -> None:
    Path(path).write_bytes(dmat_bytes(mat))


def read_dmat(path) -> np.ndarray:
    return parse_dmat(Path(path).read_bytes())


def _index_bytes(k: int, blocks: int) -> int:
    return (2 * blocks + 7) // 8 if k <= 4 else blocks


def pack_indices(idx: np.ndarray, k: int) -> bytes:
    idx = np.asarray(idx, dtype=np.uint8)
    if k > 4:
        return idx.tobytes()
    padded = np.zeros(-(-idx.size // 4) * 4, dtype=np.uint8)
    padded[: idx.size] = idx
    quads = padded.reshape(-1, 4)
    packed = quads[:, 0] | (quads[:, 1] << 2) | (quads[:, 2] << 4) | (quads[:, 3] << 6)
    return packed.astype(np.uint8).tobytes()


def unpack_indices(buf: bytes, k: int, blocks: int) -> np.ndarray:
    raw = np.frombuffer(buf, dtype=np.uint8)
    if k > 4:
        return raw[:blocks].astype(np.int64)
    shifts = np.array([0, 2, 4, 6], dtype=np.uint8)
    return ((raw[:, None] >> shifts[None, :]) & 0x3).ravel()[:blocks].astype(np.int64)


def nlq_bytes(qm: QuantizedMatrix) -> bytes:
    cfg = qm.config
    rows, cols = qm.shape
    if cfg.q > 256:
        raise ValueError("NLQ1 stores codes in one byte; q must be <= 256")
    if cfg.k > 255:
        raise ValueError("NLQ1 supports at most 255 betas")
    parts = [
        _NLQ_HEADER.pack(NLQ_MAGIC, NLQ_VERSION, rows, cols, cfg.q, cfg.k, _STRATEGY_CODES[cfg.strategy]),
        np.asarray(cfg.betas, dtype="<f8").tobytes(),
    ]
    for i in range(rows):
        parts.append(struct.pack("<d", qm.scales[i]))
        parts.append(pack_indices(qm.beta_idx[i], cfg.k))
        parts.append(qm.codes[i].astype(np.uint8).tobytes())
    return b"".join(parts)


def parse_nlq(buf: bytes) -> QuantizedMatrix:
    if len(buf) < _NLQ_HEADER.size:
        raise FormatError("truncated NLQ1 header")
    magic, version, rows, cols, q, k, strat = _NLQ_HEADER.unpack_from(buf)
    if magic != NLQ_MAGIC:
        raise FormatError(f"bad NLQ1 magic {magic!r}")
    if version != NLQ_VERSION:
        raise FormatError(f"unsupported NLQ1 version {version}")
    if strat not in _STRATEGY_NAMES:
        raise FormatError(f"unknown strategy code {strat}")
    if cols % DIM or k < 1:
        raise FormatError("invalid NLQ1 dimensions")
    off = _NLQ_HEADER.size
    if len(buf) < off + 8 * k:
        raise FormatError("truncated NLQ1 beta table")
    betas = np.frombuffer(buf, dtype="<f8", count=k, offset=off)
    off += 8 * k
    blocks = cols // DIM
    nidx = _index_bytes(k, blocks)
    row_size = 8 + nidx + cols
    if len(buf) - off != rows * row_size:
        raise FormatError("NLQ1 body length does not match header")
    try:
        cfg = QuantizerConfig(q, tuple(betas), _STRATEGY_NAMES[strat])
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    scales = np.empty(rows)
    idx = np.empty((rows, blocks), dtype=np.int64)
    codes = np.empty((rows, cols), dtype=np.int64)
    for i in range(rows):
        (scales[i],) = struct.unpack_from("<d", buf, off)
        idx[i] = unpack_indices(buf[off + 8 : off + 8 + nidx], k, blocks)
        codes[i] = np.frombuffer(buf, dtype=np.uint8, count=cols, offset=off + 8 + nidx)
        off += row_size
    if np.any(idx >= k) or np.any(codes >= q):
        raise FormatError("NLQ1 payload out of range")
    return QuantizedMatrix(codes, idx, scales, cfg)


def write_nlq(path, qm: QuantizedMatrix) -> None:
    Path(path).write_bytes(nlq_bytes(qm))


def read_nlq(path) -> QuantizedMatrix:
    return parse_nlq(Path(path).read_bytes())
