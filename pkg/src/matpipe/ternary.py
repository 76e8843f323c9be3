"""Ternary (value/mask) match keys and range-to-prefix expansion."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TernaryKey:
    """A width-bit match key; mask bits set to 1 are compared, 0 are wildcards."""

    value: int
    mask: int
    width: int

    def __post_init__(self):
        full = (1 << self.width) - 1
        if self.width <= 0:
            raise ValueError("key width must be positive")
        if not 0 <= self.value <= full:
            raise ValueError("key value out of range for width %d" % self.width)
        if not 0 <= self.mask <= full:
            raise ValueError("key mask out of range for width %d" % self.width)

    def to_json(self):
        return {"value": self.value, "mask": self.mask, "width": self.width}

    @classmethod
    def from_json(cls, obj):
        return cls(value=obj["value"], mask=obj["mask"], width=obj["width"])


def wildcard(width):
    """Key that matches every width-bit input."""
    return TernaryKey(value=0, mask=0, width=width)


def matches(key, input_value):
    """True iff input_value hits the key: (input & mask) == (value & mask)."""
    if not 0 <= input_value < (1 << key.width):
        raise ValueError("input out of range for width %d" % key.width)
    return (input_value & key.mask) == (key.value & key.mask)


def range_to_ternary(lo, hi, width):
    """Expand the inclusive integer range [lo, hi] into prefix keys.

    Returns the unique minimal set of disjoint prefix keys whose union is
    exactly [lo, hi].  At most 2*width - 2 keys are produced for any range
    that is not the full domain; the full domain needs a single key.
    """
    full = (1 << width) - 1
    if width <= 0:
        raise ValueError("width must be positive")
    if not (0 <= lo <= hi <= full):
        raise ValueError("need 0 <= lo <= hi <= 2^width - 1")

    keys = []
    cur = lo
    while cur <= hi:
        # Largest aligned block starting at cur that stays inside [lo, hi].
        size = 1
        while True:
            nxt = size << 1
            if cur & (nxt - 1):
                break
            if cur + nxt - 1 > hi:
                break
            size = nxt
        mask = full & ~(size - 1)
        keys.append(TernaryKey(value=cur, mask=mask, width=width))
        cur += size
    return keys
