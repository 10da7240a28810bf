"""Search configurations: the (bsize, delta) pairs the optimizer navigates."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import UsageError

BSIZE_MIN, BSIZE_MAX = 2, 512
DELTA_MIN, DELTA_MAX = 0.6, 2.0
DELTA_DECIMALS = 4


@dataclass(frozen=True, eq=False)
class Configuration:
    """Beam size and expansion factor for a k-NN search.

    Equality and hashing use ``key``, i.e. delta rounded to four decimals, so
    the optimizer never evaluates two configurations that differ only by
    floating-point noise.
    """

    bsize: int
    delta: float

    def __post_init__(self):
        if not BSIZE_MIN <= self.bsize <= BSIZE_MAX:
            raise UsageError(f"bsize {self.bsize} outside [{BSIZE_MIN}, {BSIZE_MAX}]")
        if not DELTA_MIN - 1e-12 <= self.delta <= DELTA_MAX + 1e-12:
            raise UsageError(f"delta {self.delta} outside [{DELTA_MIN}, {DELTA_MAX}]")

    @classmethod
    def clamped(cls, bsize: float, delta: float) -> Configuration:
        b = min(BSIZE_MAX, max(BSIZE_MIN, int(math.ceil(bsize - 1e-9))))
        d = min(DELTA_MAX, max(DELTA_MIN, float(delta)))
        return cls(b, d)

    @property
    def key(self) -> tuple[int, float]:
        return (self.bsize, round(self.delta, DELTA_DECIMALS))

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"Configuration(bsize={self.bsize}, delta={self.delta:.4f})"


DEFAULT_CONFIG = Configuration(32, 1.0)
