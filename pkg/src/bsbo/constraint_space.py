"""Sites, per-site alphabets, constraint subsets and the product library they induce.

A constraint is a ``(site, symbol)`` pair. Constraints are numbered
site-by-site, so site ``l`` owns the contiguous index block
``offsets[l] : offsets[l] + sizes[l]``. A :class:`ConstraintSet` stores the
selection as a single integer bit mask over those indices.

Items of the full library are addressed by a dense mixed-radix index with
site 0 as the most significant digit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Item = tuple[str, ...]


@dataclass(frozen=True)
class GroundSet:
    alphabets: tuple[tuple[str, ...], ...]
    offsets: tuple[int, ...] = field(init=False, repr=False, compare=False)
    strides: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _lookup: tuple[dict, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        alphabets = tuple(tuple(str(s) for s in a) for a in self.alphabets)
        if not alphabets:
            raise ValueError("ground set needs at least one site")
        for site, alpha in enumerate(alphabets):
            if not alpha:
                raise ValueError(f"site {site} has an empty alphabet")
            if len(set(alpha)) != len(alpha):
                raise ValueError(f"site {site} alphabet has duplicate symbols")
        object.__setattr__(self, "alphabets", alphabets)
        sizes = [len(a) for a in alphabets]
        offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
        strides = []
        acc = 1
        for size in reversed(sizes):
            strides.append(acc)
            acc *= size
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "strides", tuple(reversed(strides)))
        object.__setattr__(
            self, "_lookup", tuple({s: i for i, s in enumerate(a)} for a in alphabets)
        )

    @classmethod
    def uniform(cls, n_sites: int, alphabet: Sequence[str]) -> "GroundSet":
        return cls(tuple(tuple(alphabet) for _ in range(n_sites)))

    @property
    def n_sites(self) -> int:
        return len(self.alphabets)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.alphabets)

    @property
    def total_constraints(self) -> int:
        return sum(self.sizes)

    @property
    def library_size(self) -> int:
        return math.prod(self.sizes)

    def constraint_index(self, site: int, symbol: str) -> int:
        try:
            return self.offsets[site] + self._lookup[site][symbol]
        except KeyError:
            raise ValueError(f"symbol {symbol!r} not in alphabet of site {site}") from None

    def constraint_label(self, j: int) -> tuple[int, str]:
        site = self.site_of(j)
        return site, self.alphabets[site][j - self.offsets[site]]

    def site_of(self, j: int) -> int:
        if not 0 <= j < self.total_constraints:
            raise IndexError(f"constraint index {j} out of range")
        return int(np.searchsorted(self.offsets, j, side="right") - 1)

    def site_array(self) -> np.ndarray:
        """Site id of every constraint index."""
        return np.repeat(np.arange(self.n_sites), self.sizes)

    # item <-> dense index

    def symbol_codes(self, item: Sequence[str]) -> tuple[int, ...]:
        if len(item) != self.n_sites:
            raise ValueError(f"item has {len(item)} sites, ground set has {self.n_sites}")
        codes = []
        for site, sym in enumerate(item):
            code = self._lookup[site].get(sym)
            if code is None:
                raise ValueError(f"symbol {sym!r} not in alphabet of site {site}")
            codes.append(code)
        return tuple(codes)

    def item_index(self, item: Sequence[str]) -> int:
        return sum(c * s for c, s in zip(self.symbol_codes(item), self.strides))

    def item_from_index(self, index: int) -> Item:
        if not 0 <= index < self.library_size:
            raise IndexError(f"item index {index} out of range")
        return tuple(
            self.alphabets[site][(index // self.strides[site]) % self.sizes[site]]
            for site in range(self.n_sites)
        )

    def codes_from_indices(self, indices) -> np.ndarray:
        """(m, L) array of per-site symbol codes for dense item indices."""
        idx = np.asarray(indices, dtype=np.int64)
        strides = np.asarray(self.strides, dtype=np.int64)
        sizes = np.asarray(self.sizes, dtype=np.int64)
        return (idx[:, None] // strides[None, :]) % sizes[None, :]

    def indices_from_codes(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        return codes @ np.asarray(self.strides, dtype=np.int64)

    def parse_sequence(self, seq: str) -> Item:
        """Split a sequence string into one symbol per site (single-character alphabets)."""
        if len(seq) != self.n_sites:
            raise ValueError(f"sequence {seq!r} has length {len(seq)}, expected {self.n_sites}")
        return tuple(seq)

    def to_json(self) -> dict:
        return {"n_sites": self.n_sites, "alphabets": [list(a) for a in self.alphabets]}

    @classmethod
    def from_json(cls, data: dict) -> "GroundSet":
        gs = cls(tuple(tuple(a) for a in data["alphabets"]))
        if "n_sites" in data and data["n_sites"] != gs.n_sites:
            raise ValueError("n_sites does not match the number of alphabets")
        return gs


@dataclass(frozen=True)
class ConstraintSet:
    ground: GroundSet
    mask: int = 0

    def __post_init__(self):
        if self.mask < 0 or self.mask >> self.ground.total_constraints:
            raise ValueError("mask selects constraints outside the ground set")

    @classmethod
    def empty(cls, ground: GroundSet) -> "ConstraintSet":
        return cls(ground, 0)

    @classmethod
    def full(cls, ground: GroundSet) -> "ConstraintSet":
        return cls(ground, (1 << ground.total_constraints) - 1)

    @classmethod
    def from_indices(cls, ground: GroundSet, indices) -> "ConstraintSet":
        mask = 0
        for j in indices:
            mask |= 1 << int(j)
        return cls(ground, mask)

    @classmethod
    def from_array(cls, ground: GroundSet, selected) -> "ConstraintSet":
        return cls.from_indices(ground, np.flatnonzero(np.asarray(selected)))

    @classmethod
    def from_symbols(cls, ground: GroundSet, per_site: Sequence[Sequence[str]]) -> "ConstraintSet":
        if len(per_site) != ground.n_sites:
            raise ValueError("need one symbol list per site")
        return cls.from_indices(
            ground,
            [ground.constraint_index(site, s) for site, syms in enumerate(per_site) for s in syms],
        )

    @classmethod
    def from_item(cls, ground: GroundSet, item: Sequence[str]) -> "ConstraintSet":
        """The minimal constraint set whose library is exactly ``{item}``."""
        return cls.from_symbols(ground, [[s] for s in item])

    def __contains__(self, j: int) -> bool:
        return bool(self.mask >> j & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def indices(self) -> list[int]:
        return [j for j in range(self.ground.total_constraints) if self.mask >> j & 1]

    def as_array(self) -> np.ndarray:
        n = self.ground.total_constraints
        bits = np.frombuffer(self.mask.to_bytes((n + 7) // 8 or 1, "little"), dtype=np.uint8)
        return np.unpackbits(bits, bitorder="little")[:n].astype(bool)

    def site_mask(self, site: int) -> int:
        return self.mask >> self.ground.offsets[site] & ((1 << self.ground.sizes[site]) - 1)

    def site_codes(self, site: int) -> list[int]:
        m = self.site_mask(site)
        return [c for c in range(self.ground.sizes[site]) if m >> c & 1]

    def site_symbols(self, site: int) -> list[str]:
        return [self.ground.alphabets[site][c] for c in self.site_codes(site)]

    def site_counts(self) -> tuple[int, ...]:
        return tuple(bin(self.site_mask(s)).count("1") for s in range(self.ground.n_sites))

    def site_arrays(self) -> list[np.ndarray]:
        """Per-site boolean selection vectors."""
        arr = self.as_array()
        return [arr[o:o + k] for o, k in zip(self.ground.offsets, self.ground.sizes)]

    def toggle(self, j: int) -> "ConstraintSet":
        return ConstraintSet(self.ground, self.mask ^ (1 << j))

    def add(self, j: int) -> "ConstraintSet":
        return ConstraintSet(self.ground, self.mask | (1 << j))

    def remove(self, j: int) -> "ConstraintSet":
        return ConstraintSet(self.ground, self.mask & ~(1 << j))

    def union(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(self.ground, self.mask | other.mask)

    def issubset(self, other: "ConstraintSet") -> bool:
        return self.mask & ~other.mask == 0

    def to_json(self) -> dict:
        return {
            "selected": [self.site_symbols(s) for s in range(self.ground.n_sites)],
            "library_size": library_size(self),
        }

    @classmethod
    def from_json(cls, ground: GroundSet, data: dict) -> "ConstraintSet":
        return cls.from_symbols(ground, data["selected"])


def library_size(S: ConstraintSet) -> int:
    """Number of items in Q(S); zero as soon as one site is empty."""
    return math.prod(S.site_counts())


def enumerate_library(S: ConstraintSet) -> Iterator[Item]:
    return itertools.product(*(S.site_symbols(s) for s in range(S.ground.n_sites)))


def library_indices(S: ConstraintSet) -> np.ndarray:
    """Dense indices of Q(S), ascending (same order as :func:`enumerate_library`)."""
    ground = S.ground
    idx = np.zeros(1, dtype=np.int64)
    for site in range(ground.n_sites):
        codes = np.asarray(S.site_codes(site), dtype=np.int64)
        idx = (idx[:, None] + codes[None, :] * ground.strides[site]).ravel()
    return idx


def neighbors(S: ConstraintSet) -> Iterator[tuple[int, ConstraintSet]]:
    for j in range(S.ground.total_constraints):
        yield j, S.toggle(j)
