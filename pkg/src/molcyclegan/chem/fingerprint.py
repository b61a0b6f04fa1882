"""Circular (Morgan/ECFP-style) fingerprints and Tanimoto similarity."""
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import ConfigError

_MASK = (1 << 64) - 1


def mix64(x):
    """splitmix64 finaliser; the fingerprint hash is built only from this."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def hash_ints(values):
    h = mix64(len(values))
    for v in values:
        h = mix64(h ^ (v & _MASK))
    return h


@dataclass(frozen=True)
class Fingerprint:
    words: np.ndarray  # packed uint64, bit i lives in words[i // 64]
    nbits: int
    radius: int

    def on_bits(self):
        bits = np.unpackbits(self.words.view(np.uint8), bitorder="little")[: self.nbits]
        return np.flatnonzero(bits)

    def count(self):
        return int(np.bitwise_count(self.words).sum())

    def __eq__(self, other):
        return (isinstance(other, Fingerprint) and self.nbits == other.nbits
                and self.radius == other.radius and np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.nbits, self.radius, self.words.tobytes()))

    @classmethod
    def from_bits(cls, bits, nbits=2048, radius=2):
        _check_nbits(nbits)
        words = np.zeros(max(1, nbits // 64), dtype=np.uint64)
        for b in bits:
            if not 0 <= b < nbits:
                raise ValueError(f"bit {b} out of range for {nbits}-bit fingerprint")
            words[b // 64] |= np.uint64(1) << np.uint64(b % 64)
        return cls(words, nbits, radius)


def _check_nbits(nbits):
    if nbits < 1 or nbits & (nbits - 1):
        raise ConfigError(f"nbits must be a power of two, got {nbits}")


def atom_identifiers(graph, radius=2):
    """Per-iteration atom environment hashes, ``[round0, round1, ...]``."""
    ids = [hash_ints([a.atomic_number, graph.degree(i), a.hydrogens, a.charge & _MASK, int(a.aromatic)])
           for i, a in enumerate(graph.atoms)]
    rounds = [ids]
    for it in range(1, radius + 1):
        prev = rounds[-1]
        nxt = []
        for i in range(len(graph.atoms)):
            env = sorted((graph.bonds[k].code, prev[j]) for j, k in graph.neighbors[i])
            flat = [it, prev[i]]
            for code, h in env:
                flat.extend((code, h))
            nxt.append(hash_ints(flat))
        rounds.append(nxt)
    return rounds


def morgan_fingerprint(graph, radius=2, nbits=2048):
    _check_nbits(nbits)
    if radius < 0:
        raise ConfigError("radius must be >= 0")
    bits = {h & (nbits - 1) for ids in atom_identifiers(graph, radius) for h in ids}
    return Fingerprint.from_bits(bits, nbits, radius)


def _check_pair(a, b):
    if a.nbits != b.nbits or a.radius != b.radius:
        raise ValueError(f"fingerprint parameters differ: ({a.nbits}, r={a.radius}) vs ({b.nbits}, r={b.radius})")


def tanimoto(a, b):
    """|a & b| / |a | b|; two empty fingerprints count as identical (1.0)."""
    _check_pair(a, b)
    union = int(np.bitwise_count(a.words | b.words).sum())
    if union == 0:
        return 1.0
    return int(np.bitwise_count(a.words & b.words).sum()) / union


def tanimoto_bulk(query, pool):
    """Tanimoto of ``query`` against a list of fingerprints, as an array."""
    if not pool:
        return np.empty(0)
    for fp in pool:
        _check_pair(query, fp)
    return kernels.tanimoto_many(query.words, np.stack([fp.words for fp in pool]))
