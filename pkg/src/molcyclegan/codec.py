"""Latent codecs: map molecules to latent points and latent points back to molecules.

Two implementations share one small interface used by the optimisation
protocols:

* ``EmbeddingTable`` looks molecules up in a table of precomputed embeddings
  and decodes a latent point to its nearest stored neighbour. It can only
  return molecules it already holds, so novelty-sensitive metrics are
  deflated; every report written from it carries ``surrogate_decode = True``.
* ``SyntheticSpace`` is an analytic space of two Gaussian clusters where a
  point decodes to itself and the property is affine in the coordinates.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .chem import SmilesError, canonical_smiles, morgan_fingerprint, parse_smiles, tanimoto
from .dataio import DataWarning, Dataset, MoleculeRecord, structural_label
from .errors import ConfigError, DataError, LookupFailure, ShapeError

SYNTHETIC_PROPERTY = "p"
SYNTHETIC_PREDICATE = "property_sign"


class LatentCodec:
    """Interface shared by the codecs.

    ``decode_many`` returns one record per row, or ``None`` where a point
    cannot be decoded. ``key`` identifies a molecule for identity and
    uniqueness counting; ``similarity`` is in [0, 1].
    """

    surrogate_decode = False

    def latent(self, record):
        if record.embedding is None:
            raise DataError(f"record {record.id!r} has no latent coordinates")
        return record.embedding

    def latents(self, records):
        return np.stack([self.latent(r) for r in records]) if len(records) else np.zeros((0, self.dim))

    def decode_many(self, z):
        raise NotImplementedError

    def key(self, record):
        raise NotImplementedError

    def similarity(self, a, b):
        raise NotImplementedError

    def set_label(self, record, predicate):
        raise NotImplementedError

    def property(self, record, name):
        try:
            return float(record.properties[name])
        except KeyError:
            raise DataError(f"record {record.id!r} has no property {name!r}") from None


def _as_queries(z, dim):
    q = np.asarray(z, dtype=np.float64)
    if q.ndim == 1:
        q = q[None, :]
    if q.ndim != 2 or q.shape[1] != dim:
        raise ShapeError(f"latent points must have dim {dim}, got shape {np.shape(z)}")
    if not np.all(np.isfinite(q)):
        raise ShapeError("latent points must be finite")
    return q


class EmbeddingTable(LatentCodec):
    """Exact nearest-neighbour decoder over a dataset's stored embeddings.

    Encoding matches SMILES by canonical form. Distance ties in decoding are
    broken by record id.
    """

    surrogate_decode = True

    def __init__(self, dataset, radius=2, nbits=2048):
        if not isinstance(dataset, Dataset):
            dataset = Dataset(dataset)
        if len(dataset) and dataset.dim is None:
            raise DataError("an embedding table needs records with embeddings")
        self.dataset = dataset
        self.records = dataset.records
        self.dim = dataset.dim
        self.radius = radius
        self.nbits = nbits
        self._matrix = dataset.embeddings() if len(dataset) else None
        order = sorted(range(len(self.records)), key=lambda i: self.records[i].id)
        self._tie_rank = np.empty(len(self.records), dtype=np.int64)
        self._tie_rank[order] = np.arange(len(self.records))
        self._by_key = None
        self._graphs = {}
        self._canon = {}
        self._fps = {}

    def __len__(self):
        return len(self.records)

    # chemistry caches keyed by SMILES text
    def graph(self, smiles):
        g = self._graphs.get(smiles)
        if g is None:
            g = self._graphs[smiles] = parse_smiles(smiles)
        return g

    def canonical(self, smiles):
        c = self._canon.get(smiles)
        if c is None:
            c = self._canon[smiles] = canonical_smiles(self.graph(smiles))
        return c

    def fingerprint(self, smiles):
        fp = self._fps.get(smiles)
        if fp is None:
            fp = self._fps[smiles] = morgan_fingerprint(self.graph(smiles), self.radius, self.nbits)
        return fp

    def _key_index(self):
        if self._by_key is None:
            index = {}
            for rec in self.records:
                if rec.smiles is None:
                    continue
                try:
                    key = self.canonical(rec.smiles)
                except SmilesError:
                    continue
                index.setdefault(key, rec)
            self._by_key = index
        return self._by_key

    def encode(self, smiles):
        """Stored embedding of the molecule spelled by ``smiles`` (any valid spelling)."""
        try:
            key = self.canonical(smiles)
        except SmilesError as exc:
            raise LookupFailure(f"cannot encode {smiles!r}: {exc}") from None
        rec = self._key_index().get(key)
        if rec is None:
            raise LookupFailure(f"molecule {smiles!r} is not in the embedding table")
        return rec.embedding

    def nearest(self, z, k=1):
        """(indices, distances) of the k nearest records per query, ascending."""
        if not self.records:
            raise LookupFailure("embedding table is empty")
        q = _as_queries(z, self.dim)
        if k < 1:
            raise ConfigError(f"k must be at least 1, got {k}")
        if k > len(self.records):
            warnings.warn(f"k={k} exceeds table size {len(self.records)}; clipped", DataWarning, stacklevel=2)
            k = len(self.records)
        idx, d2 = kernels.knn_scan(self._matrix, q, k, self._tie_rank)
        return idx, np.sqrt(d2)

    def decode_nearest(self, z, k=1):
        """The k stored records nearest to a single latent point, nearest first."""
        idx, _ = self.nearest(z, k)
        return [self.records[i] for i in idx[0]]

    def decode_many(self, z):
        if not self.records:
            return [None] * len(_as_queries(z, self.dim or np.shape(z)[-1]))
        idx, _ = self.nearest(z, 1)
        return [self.records[i] for i in idx[:, 0]]

    def key(self, record):
        if record.smiles is None:
            return "id:" + record.id
        try:
            return self.canonical(record.smiles)
        except SmilesError:
            return "id:" + record.id

    def similarity(self, a, b):
        return tanimoto(self.fingerprint(a.smiles), self.fingerprint(b.smiles))

    def set_label(self, record, predicate):
        return structural_label(self.graph(record.smiles), predicate)


def encode(table, smiles):
    return table.encode(smiles)


def decode_nearest(table, z, k=1):
    return table.decode_nearest(z, k)


@dataclass(frozen=True)
class SyntheticSpace(LatentCodec):
    """Two unit-variance Gaussian clusters with an affine property p(z) = w.z + b.

    Defaults: 56 dimensions, clusters at -2 and +2 on axis 0, p(z) = z[0].
    """
    dim: int = 56
    mu_x: np.ndarray = None
    mu_y: np.ndarray = None
    w: np.ndarray = None
    b: float = 0.0
    similarity_scale: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be positive, got {self.dim}")
        defaults = {"mu_x": -2.0, "mu_y": 2.0, "w": 1.0}
        for name, first in defaults.items():
            value = getattr(self, name)
            if value is None:
                value = np.zeros(self.dim)
                value[0] = first
            value = np.array(value, dtype=np.float64)
            if value.shape != (self.dim,) or not np.all(np.isfinite(value)):
                raise ConfigError(f"{name} must be a finite vector of length {self.dim}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if np.array_equal(self.mu_x, self.mu_y):
            raise ConfigError("cluster means must differ")
        if not np.any(self.w):
            raise ConfigError("property weights must not all be zero")

    def __hash__(self):
        return hash((self.dim, self.mu_x.tobytes(), self.mu_y.tobytes(), self.w.tobytes(), self.b))

    def __eq__(self, other):
        return isinstance(other, SyntheticSpace) and hash(self) == hash(other)

    @property
    def shift(self):
        return self.mu_y - self.mu_x

    @property
    def threshold(self):
        """Property value halfway between the cluster means; Y lies above it."""
        return float(self.w @ (self.mu_x + self.mu_y) / 2 + self.b)

    def prop(self, z):
        return np.asarray(z, dtype=np.float64) @ self.w + self.b

    def to_dict(self):
        return {"dim": self.dim, "mu_x": self.mu_x.tolist(), "mu_y": self.mu_y.tolist(),
                "w": self.w.tolist(), "b": self.b, "similarity_scale": self.similarity_scale}

    def record(self, z, rec_id=None):
        z = np.array(z, dtype=np.float64)
        rec_id = rec_id or "z:" + z.tobytes().hex()
        return MoleculeRecord(rec_id, None, z, {SYNTHETIC_PROPERTY: float(z @ self.w + self.b)})

    def decode_many(self, z):
        return [self.record(row) for row in _as_queries(z, self.dim)]

    def key(self, record):
        return record.embedding.tobytes().hex()

    def similarity(self, a, b):
        """Distance proxy for Tanimoto: 1 / (1 + |za - zb| / scale)."""
        return 1.0 / (1.0 + float(np.linalg.norm(a.embedding - b.embedding)) / self.similarity_scale)

    def set_label(self, record, predicate=SYNTHETIC_PREDICATE):
        if predicate != SYNTHETIC_PREDICATE:
            raise ConfigError(f"synthetic space only supports the {SYNTHETIC_PREDICATE!r} predicate")
        return "Y" if float(record.embedding @ self.w + self.b) > self.threshold else "X"


def synthetic_sample(space, set_label, n, seed=0):
    """n records drawn from N(mu, I) around the X or Y cluster mean.

    The label is mixed into the seed, so the same seed gives different X and Y draws.
    """
    if set_label not in ("X", "Y"):
        raise ConfigError(f"set_label must be 'X' or 'Y', got {set_label!r}")
    if n < 1:
        raise ConfigError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0 if set_label == "X" else 1]))
    mu = space.mu_x if set_label == "X" else space.mu_y
    z = rng.standard_normal((n, space.dim)) + mu
    width = len(str(n - 1))
    return Dataset(space.record(row, f"{set_label.lower()}{i:0{width}d}") for i, row in enumerate(z))


def synthetic_decode(space, z):
    return space.record(z)
