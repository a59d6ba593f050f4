"""Counter-based random stream for reproducible benchmark generation.

The i-th draw of a stream is ``splitmix64(key + i * 0x9E3779B97F4A7C15)``
(mod 2**64), where ``key`` is derived from the user seed and a stream path
via BLAKE2b. Outputs therefore depend only on (seed, path, i) and are
identical on every platform and Python version. Bounded integers use
rejection sampling, shuffles are Fisher-Yates from the top index down.
"""

from __future__ import annotations

import hashlib
from typing import MutableSequence, Sequence, TypeVar

T = TypeVar("T")

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def derive_key(seed: int, *path: str) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update((seed & MASK).to_bytes(8, "little"))
    for part in path:
        h.update(b"\x00" + part.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class CounterRNG:
    def __init__(self, seed: int, *path: str):
        self.seed = seed
        self.path = path
        self.key = derive_key(seed, *path)
        self.counter = 0

    def fork(self, *path: str) -> "CounterRNG":
        return CounterRNG(self.seed, *self.path, *path)

    def next_u64(self) -> int:
        self.counter += 1
        return splitmix64((self.key + self.counter * GOLDEN) & MASK)

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs n > 0")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    def random(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]

    def shuffle(self, items: MutableSequence) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
