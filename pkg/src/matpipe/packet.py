"""Bit-exact request/response packet codec.

Wire format, all fields MSB-first:

  header (4 bytes): packet_id:12 | type:4 | mid:4 | vid:4 | rslt:4 | rid:4
  request body:     features section, then intermediates section, each
                    zero-padded up to a byte boundary
  response:         header only (exactly 4 bytes)

The intermediates section carries the live pipeline registers between
devices: tree programs ship code_0, code_1 (code_bits each), f0, f1
(value_bits each) and one 4-bit result slot per tree; SVM programs ship one
acc_bits two's-complement accumulator per hyperplane.  Section widths come
from a PacketLayout, which travels out of band keyed by (mid, vid).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

HEADER_BYTES = 4
PACKET_ID_BITS = 12
TYPE_BITS = 4
MID_BITS = 4
VID_BITS = 4
RSLT_BITS = 4
RID_BITS = 4

RESULT_SLOT_BITS = 4

TYPE_REQUEST = 0
TYPE_RESPONSE = 1


class PacketError(ValueError):
    """Malformed buffer or field value that does not fit its width."""


@dataclass(frozen=True)
class BasicHeader:
    packet_id: int
    ptype: int = TYPE_REQUEST
    mid: int = 0
    vid: int = 0
    rslt: int = 0
    rid: int = 0


@dataclass(frozen=True)
class PacketLayout:
    """Wire widths for one deployed model, registered under (mid, vid)."""

    kind: str  # "dt", "rf" or "svm"
    feature_count: int
    value_bits: int
    code_bits: int = 0
    acc_bits: int = 0
    tree_slots: int = 0
    hyperplanes: int = 0

    def feature_section_bytes(self):
        return _padded_bytes(self.feature_count * self.value_bits)

    def intermediate_section_bytes(self):
        return _padded_bytes(self._intermediate_bits())

    def _intermediate_bits(self):
        if self.kind == "svm":
            return self.hyperplanes * self.acc_bits
        return 2 * self.code_bits + 2 * self.value_bits + self.tree_slots * RESULT_SLOT_BITS

    def request_bytes(self):
        return HEADER_BYTES + self.feature_section_bytes() + self.intermediate_section_bytes()

    def response_bytes(self):
        return HEADER_BYTES


@dataclass(frozen=True)
class InferencePacket:
    header: BasicHeader
    features: tuple[int, ...] = ()
    code_0: int = 0
    code_1: int = 0
    f0: int = 0
    f1: int = 0
    slots: tuple[int, ...] = ()
    accumulators: tuple[int, ...] = ()


def make_request(packet_id, mid, vid, rid, features, layout):
    """Fresh request with zeroed intermediates, sized per the layout."""
    header = BasicHeader(packet_id=packet_id, ptype=TYPE_REQUEST, mid=mid, vid=vid, rid=rid)
    slots = (0,) * layout.tree_slots
    accs = (0,) * layout.hyperplanes
    return InferencePacket(
        header=header, features=tuple(features), slots=slots, accumulators=accs
    )


def make_response(header, rslt):
    return InferencePacket(
        header=replace(header, ptype=TYPE_RESPONSE, rslt=rslt & ((1 << RSLT_BITS) - 1))
    )


class _BitWriter:
    def __init__(self):
        self._chunks = []
        self._acc = 0
        self._nbits = 0

    def put(self, value, width, what):
        if width == 0:
            return
        if not 0 <= value < (1 << width):
            raise PacketError("%s value %d does not fit %d bits" % (what, value, width))
        self._acc = (self._acc << width) | value
        self._nbits += width

    def pad_to_byte(self):
        extra = (-self._nbits) % 8
        self._acc <<= extra
        self._nbits += extra

    def getvalue(self):
        assert self._nbits % 8 == 0
        return self._acc.to_bytes(self._nbits // 8, "big") if self._nbits else b""


class _BitReader:
    def __init__(self, data):
        self._data = data
        self._pos = 0  # bit cursor

    def take(self, width, what):
        end = self._pos + width
        if end > len(self._data) * 8:
            raise PacketError("truncated buffer while reading %s" % what)
        value = 0
        pos = self._pos
        while width > 0:
            byte = self._data[pos // 8]
            avail = 8 - pos % 8
            grab = min(avail, width)
            shift = avail - grab
            value = (value << grab) | ((byte >> shift) & ((1 << grab) - 1))
            pos += grab
            width -= grab
        self._pos = pos
        return value

    def skip_to_byte(self):
        self._pos += (-self._pos) % 8


def encode_header(header):
    w = _BitWriter()
    w.put(header.packet_id, PACKET_ID_BITS, "packet_id")
    w.put(header.ptype, TYPE_BITS, "type")
    w.put(header.mid, MID_BITS, "mid")
    w.put(header.vid, VID_BITS, "vid")
    w.put(header.rslt, RSLT_BITS, "rslt")
    w.put(header.rid, RID_BITS, "rid")
    return w.getvalue()


def decode_header(data):
    if len(data) < HEADER_BYTES:
        raise PacketError("truncated buffer: %d bytes, header needs 4" % len(data))
    r = _BitReader(data[:HEADER_BYTES])
    header = BasicHeader(
        packet_id=r.take(PACKET_ID_BITS, "packet_id"),
        ptype=r.take(TYPE_BITS, "type"),
        mid=r.take(MID_BITS, "mid"),
        vid=r.take(VID_BITS, "vid"),
        rslt=r.take(RSLT_BITS, "rslt"),
        rid=r.take(RID_BITS, "rid"),
    )
    if header.ptype not in (TYPE_REQUEST, TYPE_RESPONSE):
        raise PacketError("unknown packet type nibble %d" % header.ptype)
    return header


def encode(packet, layout=None):
    """Packet to bytes.  Responses need no layout; requests do."""
    head = encode_header(packet.header)
    if packet.header.ptype == TYPE_RESPONSE:
        return head
    if layout is None:
        raise PacketError("encoding a request needs a layout")
    if len(packet.features) != layout.feature_count:
        raise PacketError(
            "request carries %d features, layout says %d"
            % (len(packet.features), layout.feature_count)
        )
    w = _BitWriter()
    for i, v in enumerate(packet.features):
        w.put(v, layout.value_bits, "feature %d" % i)
    w.pad_to_byte()
    if layout.kind == "svm":
        if len(packet.accumulators) != layout.hyperplanes:
            raise PacketError(
                "request carries %d accumulators, layout says %d"
                % (len(packet.accumulators), layout.hyperplanes)
            )
        for h, acc in enumerate(packet.accumulators):
            w.put(acc & ((1 << layout.acc_bits) - 1), layout.acc_bits, "accumulator %d" % h)
    else:
        if len(packet.slots) != layout.tree_slots:
            raise PacketError(
                "request carries %d result slots, layout says %d"
                % (len(packet.slots), layout.tree_slots)
            )
        w.put(packet.code_0, layout.code_bits, "code_0")
        w.put(packet.code_1, layout.code_bits, "code_1")
        w.put(packet.f0, layout.value_bits, "f0")
        w.put(packet.f1, layout.value_bits, "f1")
        for t, s in enumerate(packet.slots):
            w.put(s, RESULT_SLOT_BITS, "slot %d" % t)
    w.pad_to_byte()
    return head + w.getvalue()


def decode(data, layout=None):
    """Bytes to packet.  Responses decode from the header alone."""
    header = decode_header(data)
    if header.ptype == TYPE_RESPONSE:
        if len(data) != HEADER_BYTES:
            raise PacketError(
                "response must be exactly 4 bytes, got %d" % len(data)
            )
        return InferencePacket(header=header)
    if layout is None:
        raise PacketError("decoding a request needs a layout")
    if len(data) != layout.request_bytes():
        raise PacketError(
            "request for this layout must be %d bytes, got %d"
            % (layout.request_bytes(), len(data))
        )
    r = _BitReader(data[HEADER_BYTES:])
    features = tuple(
        r.take(layout.value_bits, "feature %d" % i) for i in range(layout.feature_count)
    )
    r.skip_to_byte()
    if layout.kind == "svm":
        accs = []
        for h in range(layout.hyperplanes):
            raw = r.take(layout.acc_bits, "accumulator %d" % h)
            half = 1 << (layout.acc_bits - 1)
            accs.append((raw ^ half) - half)  # sign-extend
        return InferencePacket(header=header, features=features, accumulators=tuple(accs))
    code_0 = r.take(layout.code_bits, "code_0")
    code_1 = r.take(layout.code_bits, "code_1")
    f0 = r.take(layout.value_bits, "f0")
    f1 = r.take(layout.value_bits, "f1")
    slots = tuple(
        r.take(RESULT_SLOT_BITS, "slot %d" % t) for t in range(layout.tree_slots)
    )
    return InferencePacket(
        header=header, features=features, code_0=code_0, code_1=code_1, f0=f0, f1=f1,
        slots=slots,
    )


def _padded_bytes(bits):
    return (bits + 7) // 8
