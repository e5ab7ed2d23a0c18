"""Bit-exact wire formats for every protocol message.

Fields are packed big-endian in declaration order; reserved fields are
written as zero and ignored on decode. A packet is a :class:`Packet` with
a ``kind`` and a field dictionary that omits reserved fields.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Mapping

HEADER = 0x5A1
"""Constant 12-bit protocol/version tag carried by framed messages."""

RSV = None  # marker for a reserved field in a layout

FORMATS: dict[str, tuple[tuple[str | None, int], ...]] = {
    "GEN": (("header", 12), ("qid", 4), ("qseq", 8), (RSV, 8)),
    "REPLY": (("header", 12), ("ot", 4), ("seq", 16), ("qid", 4), ("qseq", 8),
              ("qidp", 4), ("qseqp", 8), (RSV, 8)),
    "DQP": (("opt", 10), ("ft", 2), ("cseq", 8), ("qid", 4), ("qseq", 8),
            ("schedule_cycle", 64), ("timeout", 64), ("min_fidelity", 32),
            ("purpose_id", 16), ("create_id", 16), ("num_pairs", 16), ("priority", 4), (RSV, 12),
            ("initial_virtual_finish", 32), ("est_cycles_per_pair", 32),
            ("store", 1), ("atomic", 1), ("measure_directly", 1), ("master_request", 1), (RSV, 28)),
    "CREATE": (("remote_node_id", 32), ("min_fidelity", 16), ("max_time", 16),
               ("purpose_id", 16), ("number", 16), ("priority", 4), ("type", 1),
               ("atomic", 1), ("consecutive", 1), (RSV, 25)),
    "EXPIRE": (("header", 12), ("qid", 4), ("qseq", 8), (RSV, 8), ("origin_id", 32),
               ("create_id", 16), ("seq", 16)),
    "EXPIRE_ACK": (("header", 12), ("qid", 4), ("qseq", 8), (RSV, 8), ("seq", 16), (RSV, 16)),
    "MEM": (("header", 12), ("type", 1), ("cms", 2), ("strg", 4), (RSV, 13)),
    "POLL": (("header", 12), ("gen", 1), ("qid", 4), ("qseq", 8), ("pseq", 10), (RSV, 5),
             ("params", 8), ("crc", 32)),
    "MHP_RESULT": (("header", 12), ("ot", 2), ("seq", 16), (RSV, 2), ("qid", 4), ("qseq", 8),
                   ("err", 4), ("qidp", 4), ("qseqp", 8), (RSV, 4), ("crc", 32)),
    "OK_K": (("type", 4), ("create_id", 16), ("lqid", 4), ("directional", 1), (RSV, 7),
             ("seq", 16), ("purpose_id", 16), ("remote_node_id", 32), ("goodness", 16),
             ("goodness_time", 16)),
    "OK_M": (("type", 4), ("create_id", 16), ("outcome", 1), ("basis", 3), ("directional", 1), (RSV, 7),
             ("seq", 16), ("purpose_id", 16), ("remote_node_id", 32), ("goodness", 16), (RSV, 16)),
    "ERR": (("type", 4), ("create_id", 16), ("err", 4), ("seq_range", 1), (RSV, 7),
            ("seq_low", 16), ("seq_high", 16), ("origin_id", 32)),
}

# DQP frame types.
FT_ADD, FT_ACK, FT_REJ = 0, 1, 2
# DQP option bits (the OPT field is reserved for options).
OPT_CONSECUTIVE = 1 << 0
OPT_RANDOM_BASIS = 1 << 1
OPT_CANCEL = 1 << 2

# REPLY outcome/error field: values below 8 are heralding outcomes,
# 8 | code marks a midpoint error.
OT_ERROR = 0b1000
ERR_QUEUE_MISMATCH = 0b001
ERR_TIME_MISMATCH = 0b010
ERR_NO_MESSAGE_OTHER = 0b100

MEM_REQ, MEM_ACK = 0, 1

# Upward message type codes.
TYPE_OK_K, TYPE_OK_M, TYPE_ERR = 1, 2, 3


class CodecError(ValueError):
    """Raised for unencodable fields or undecodable buffers."""


@dataclass
class Packet:
    kind: str
    fields: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, name: str) -> int:
        return self.fields[name]


def _layout(kind: str) -> tuple[tuple[str | None, int], ...]:
    try:
        return FORMATS[kind]
    except KeyError:
        raise CodecError(f"unknown packet kind {kind!r}") from None


def bit_length(kind: str) -> int:
    return sum(w for _, w in _layout(kind))


def byte_length(kind: str) -> int:
    return (bit_length(kind) + 7) // 8


def field_names(kind: str) -> list[str]:
    return [n for n, _ in _layout(kind) if n is not None and n != "crc"]


def encode(pkt: Packet) -> bytes:
    """Pack fields big-endian in layout order, padding to whole bytes."""
    layout = _layout(pkt.kind)
    # A field named "crc" holds CRC-32 over all preceding bytes.
    names = set(field_names(pkt.kind))
    unknown = set(pkt.fields) - names - {"crc"}
    if unknown:
        raise CodecError(f"{pkt.kind}: unknown fields {sorted(unknown)}")
    acc = 0
    nbits = 0
    for name, width in layout:
        if name == "crc":
            data = acc.to_bytes((nbits + 7) // 8, "big") if nbits % 8 == 0 else None
            if data is None:
                raise CodecError("CRC must start on a byte boundary")
            value = zlib.crc32(data)
        elif name is None:
            value = 0
        else:
            value = pkt.fields.get(name, HEADER if name == "header" else 0)
            if not isinstance(value, int):
                raise CodecError(f"{pkt.kind}.{name} must be an integer")
            if value < 0 or value >= 1 << width:
                raise CodecError(f"{pkt.kind}.{name}={value} does not fit in {width} bits")
        acc = (acc << width) | value
        nbits += width
    pad = (-nbits) % 8
    return (acc << pad).to_bytes((nbits + pad) // 8, "big")


def decode(kind: str, data: bytes) -> Packet:
    """Inverse of :func:`encode`; checks length, header and CRC."""
    layout = _layout(kind)
    if not isinstance(data, (bytes, bytearray)):
        raise CodecError("decode needs bytes")
    if len(data) != byte_length(kind):
        raise CodecError(f"{kind}: expected {byte_length(kind)} bytes, got {len(data)}")
    nbits = bit_length(kind)
    acc = int.from_bytes(data, "big") >> ((-nbits) % 8)
    out: dict[str, int] = {}
    pos = nbits
    crc_at = None
    for name, width in layout:
        pos -= width
        value = (acc >> pos) & ((1 << width) - 1)
        if name == "crc":
            crc_at = (nbits - pos - width, value)
        elif name is not None:
            out[name] = value
    if crc_at is not None:
        prefix_bits, value = crc_at
        if zlib.crc32(bytes(data[: prefix_bits // 8])) != value:
            raise CodecError(f"{kind}: CRC mismatch")
    if "header" in out and out["header"] != HEADER:
        raise CodecError(f"{kind}: bad header 0x{out['header']:03x}")
    return Packet(kind, out)


def make(kind: str, **fields: int) -> Packet:
    """Build a packet, filling omitted fields with zero (header with the tag)."""
    names = field_names(kind)
    out: dict[str, int] = {}
    for n in names:
        if n in fields:
            out[n] = int(fields.pop(n))
        else:
            out[n] = HEADER if n == "header" else 0
    if fields:
        raise CodecError(f"{kind}: unknown fields {sorted(fields)}")
    return Packet(kind, out)


def fixed_point(x: float, bits: int) -> int:
    """Encode x in [0, 1] as an unsigned 0.bits fraction (1.0 saturates)."""
    if not 0.0 <= x <= 1.0:
        raise CodecError(f"fraction {x} outside [0, 1]")
    return min(int(round(x * (1 << bits))), (1 << bits) - 1)


def from_fixed_point(v: int, bits: int) -> float:
    return v / (1 << bits)


def reply_ot(outcome: int = 0, error: int = 0) -> int:
    return OT_ERROR | error if error else outcome


def split_reply_ot(ot: int) -> tuple[int, int]:
    """(outcome, error code) from a REPLY OT field."""
    if ot & OT_ERROR:
        return 0, ot & 0b0111
    return ot, 0


def field_widths(kind: str) -> Mapping[str, int]:
    return {n: w for n, w in _layout(kind) if n is not None and n != "crc"}
