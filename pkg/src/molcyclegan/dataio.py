"""Dataset records, JSONL ingestion and the four X/Y split constructions.

A dataset line looks like::

    {"id": "m1", "smiles": "CCO", "embedding": [0.1, ...], "properties": {"penalized_logp": -1.2}}

``smiles`` and ``embedding`` may be omitted (synthetic records carry no
SMILES; a SMILES-only file can still be split structurally).
"""
import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .chem import SmilesError, count_aromatic_rings, has_halogen_moiety, parse_smiles
from .errors import ConfigError, DataError

SPLIT_FORMAT = "molcyclegan-split/1"
HALOGEN = "halogen"
AROMATIC = "aromatic_rings"
PREDICATES = (HALOGEN, AROMATIC)
PENALIZED_LOGP = "penalized_logp"


class DataWarning(UserWarning):
    """Recoverable dataset issue (empty input, skipped or excluded records, clipped sizes)."""


@dataclass(frozen=True)
class MoleculeRecord:
    id: str
    smiles: str | None = None
    embedding: np.ndarray | None = None
    properties: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.embedding is not None:
            emb = np.array(self.embedding, dtype=np.float64)
            emb.setflags(write=False)
            object.__setattr__(self, "embedding", emb)

    def prop(self, name):
        return self.properties[name]

    def to_json(self):
        out = {"id": self.id}
        if self.smiles is not None:
            out["smiles"] = self.smiles
        if self.embedding is not None:
            out["embedding"] = [float(v) for v in self.embedding]
        out["properties"] = {k: float(v) for k, v in self.properties.items()}
        return out

    def __eq__(self, other):
        if not isinstance(other, MoleculeRecord):
            return NotImplemented
        if (self.embedding is None) != (other.embedding is None):
            return False
        same_emb = self.embedding is None or np.array_equal(self.embedding, other.embedding)
        return (self.id, self.smiles, self.properties) == (other.id, other.smiles, other.properties) and same_emb

    def __hash__(self):
        return hash(self.id)


class Dataset:
    """Immutable ordered collection of records with uniform schema and unique ids."""

    def __init__(self, records=()):
        self.records = tuple(records)
        ids = set()
        dim = None
        names = None
        for rec in self.records:
            if rec.id in ids:
                raise DataError(f"duplicate id {rec.id!r}")
            ids.add(rec.id)
            d = None if rec.embedding is None else rec.embedding.shape[0]
            if dim is None and names is None:
                dim, names = d, frozenset(rec.properties)
                continue
            if d != dim:
                raise DataError(f"record {rec.id!r} has embedding dim {d}, expected {dim}")
            if frozenset(rec.properties) != names:
                raise DataError(f"record {rec.id!r} has properties {sorted(rec.properties)}, expected {sorted(names)}")
        self.dim = dim
        self.property_names = tuple(sorted(names)) if names else ()
        self._index = {rec.id: i for i, rec in enumerate(self.records)}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.records == other.records

    @property
    def ids(self):
        return [r.id for r in self.records]

    def by_id(self, rec_id):
        return self.records[self._index[rec_id]]

    def embeddings(self):
        if not self.records:
            return np.zeros((0, self.dim or 0))
        if self.dim is None:
            raise DataError("dataset has no embeddings")
        return np.stack([r.embedding for r in self.records])

    def values(self, name):
        """Property column as an array; DataError naming the first record lacking it."""
        out = np.empty(len(self.records))
        for i, rec in enumerate(self.records):
            if name not in rec.properties:
                raise DataError(f"record {rec.id!r} has no property {name!r}")
            out[i] = rec.properties[name]
        return out

    def subset(self, indices):
        return Dataset(self.records[i] for i in indices)


@dataclass(frozen=True)
class SplitSizes:
    """Requested split sizes; ``None`` means every remaining record of the pool."""
    x_train: int | None = None
    y_train: int | None = None
    x_test: int | None = None
    y_test: int | None = None

    def to_dict(self):
        return {"x_train": self.x_train, "y_train": self.y_train, "x_test": self.x_test, "y_test": self.y_test}


# Training/test set sizes of the four experiments on the full 250k corpus.
DEFAULT_SIZES = {
    HALOGEN: SplitSizes(75000, 75000, None, None),
    AROMATIC: SplitSizes(80000, 80000, None, None),
    "constrained": SplitSizes(80000, 80000, 800, 0),
    "unconstrained": SplitSizes(80000, 24946, 800, 0),
}


@dataclass(frozen=True)
class SplitPair:
    x_train: Dataset
    y_train: Dataset
    x_test: Dataset
    y_test: Dataset
    info: dict = field(default_factory=dict)

    def manifest(self):
        """JSON-ready description listing every split's ids plus how it was built."""
        out = {"format": SPLIT_FORMAT}
        out.update(self.info)
        out["counts"] = {name: len(getattr(self, name)) for name in ("x_train", "y_train", "x_test", "y_test")}
        out["ids"] = {name: getattr(self, name).ids for name in ("x_train", "y_train", "x_test", "y_test")}
        return out


def write_split_manifest(path, split):
    with open(path, "w") as fh:
        json.dump(split.manifest(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def split_from_manifest(dataset, manifest):
    """Rebuild a SplitPair from a manifest written by ``write_split_manifest``."""
    if manifest.get("format") != SPLIT_FORMAT:
        raise DataError(f"unknown split manifest format {manifest.get('format')!r}")
    parts = {}
    for name in ("x_train", "y_train", "x_test", "y_test"):
        try:
            parts[name] = Dataset(dataset.by_id(i) for i in manifest["ids"][name])
        except KeyError as exc:
            raise DataError(f"split manifest refers to unknown id {exc.args[0]!r}") from None
    info = {k: v for k, v in manifest.items() if k not in ("format", "counts", "ids")}
    return SplitPair(info=info, **parts)


# --- loading ---------------------------------------------------------------

def _finite_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def record_from_json(obj, line=None):
    if not isinstance(obj, dict):
        raise DataError("record must be a JSON object", line)
    unknown = set(obj) - {"id", "smiles", "embedding", "properties"}
    if unknown:
        raise DataError(f"unknown fields {sorted(unknown)}", line)
    rec_id = obj.get("id")
    if not isinstance(rec_id, str) or not rec_id:
        raise DataError("'id' must be a non-empty string", line)
    smiles = obj.get("smiles")
    if smiles is not None and (not isinstance(smiles, str) or not smiles):
        raise DataError("'smiles' must be a non-empty string", line)
    emb = obj.get("embedding")
    if emb is not None:
        if not isinstance(emb, list) or not emb or not all(_finite_number(v) for v in emb):
            raise DataError("'embedding' must be a non-empty list of finite numbers", line)
    props = obj.get("properties", {})
    if not isinstance(props, dict) or not all(isinstance(k, str) and _finite_number(v) for k, v in props.items()):
        raise DataError("'properties' must map names to finite numbers", line)
    return MoleculeRecord(rec_id, smiles, emb, {k: float(v) for k, v in props.items()})


def load_dataset(path):
    """Read a JSONL dataset. Errors carry the 1-based line number; blank lines are skipped."""
    records = []
    seen = {}
    dim = names = None
    first = True
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid JSON ({exc.msg})", lineno) from None
            rec = record_from_json(obj, lineno)
            d = None if rec.embedding is None else rec.embedding.shape[0]
            if first:
                dim, names, first = d, set(rec.properties), False
            elif d != dim:
                raise DataError(f"embedding dim {d} differs from dim {dim} of the first record", lineno)
            elif set(rec.properties) != names:
                raise DataError(f"property names {sorted(rec.properties)} differ from {sorted(names)}", lineno)
            if rec.id in seen:
                raise DataError(f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})", lineno)
            seen[rec.id] = lineno
            records.append(rec)
    if not records:
        warnings.warn(f"{path}: dataset is empty", DataWarning, stacklevel=2)
    return Dataset(records)


def save_dataset(path, dataset):
    with open(path, "w") as fh:
        for rec in dataset:
            fh.write(json.dumps(rec.to_json(), allow_nan=False) + "\n")


def convert_csv(csv_path, jsonl_path):
    """Convert ``id, smiles, embedding_0..embedding_{d-1}, <properties>`` CSV to JSONL.

    Returns the number of records written. Row numbers in errors count the
    header as row 1.
    """
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("CSV file has no header row", 1) from None
        header = [h.strip() for h in header]
        if "id" not in header:
            raise DataError("CSV header lacks an 'id' column", 1)
        if len(set(header)) != len(header):
            raise DataError("CSV header has duplicate column names", 1)
        emb_cols = {}
        for j, name in enumerate(header):
            if name.startswith("embedding_"):
                suffix = name[len("embedding_"):]
                if not suffix.isdigit():
                    raise DataError(f"bad embedding column name {name!r}", 1)
                emb_cols[int(suffix)] = j
        if sorted(emb_cols) != list(range(len(emb_cols))):
            raise DataError("embedding columns must be numbered 0..d-1 without gaps", 1)
        emb_idx = [emb_cols[k] for k in range(len(emb_cols))]
        prop_idx = [(j, h) for j, h in enumerate(header) if h not in ("id", "smiles") and not h.startswith("embedding_")]
        id_col = header.index("id")
        smi_col = header.index("smiles") if "smiles" in header else None

        lines = []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row has {len(row)} cells, header has {len(header)}", rowno)
            obj = {"id": row[id_col].strip()}
            if smi_col is not None and row[smi_col].strip():
                obj["smiles"] = row[smi_col].strip()
            if emb_idx:
                obj["embedding"] = [_csv_float(row[j], header[j], rowno) for j in emb_idx]
            obj["properties"] = {h: _csv_float(row[j], h, rowno) for j, h in prop_idx}
            record_from_json(obj, rowno)
            lines.append(json.dumps(obj, allow_nan=False))
    if not lines:
        warnings.warn(f"{csv_path}: CSV has a header but no rows", DataWarning, stacklevel=2)
    with open(jsonl_path, "w") as fh:
        for text in lines:
            fh.write(text + "\n")
    return len(lines)


def _csv_float(cell, column, rowno):
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"column {column!r}: {cell!r} is not a number", rowno) from None
    if not math.isfinite(value):
        raise DataError(f"column {column!r}: {cell!r} is not finite", rowno)
    return value


# --- splits ----------------------------------------------------------------

def _clip_train(requested, pool, what):
    """Train size for a pool, leaving a remainder for testing when the request is too large."""
    if requested is None:
        return pool
    if requested < 0:
        raise ConfigError(f"{what} size must be non-negative, got {requested}")
    if requested < pool or requested == 0:
        return requested
    clipped = (pool * 4) // 5
    warnings.warn(f"{what}: requested {requested} records but the pool holds {pool}; using {clipped}",
                  DataWarning, stacklevel=3)
    return clipped


def _take_test(requested, remaining):
    if requested is None:
        return remaining
    if requested < 0:
        raise ConfigError(f"test size must be non-negative, got {requested}")
    return min(requested, remaining)


def _train_test(dataset, indices, n_train, n_test, rng, what):
    order = np.asarray(indices, dtype=np.int64)[rng.permutation(len(indices))]
    k = _clip_train(n_train, len(order), what + "_train")
    t = _take_test(n_test, len(order) - k)
    return dataset.subset(order[:k]), dataset.subset(order[k:k + t])


def structural_label(graph, predicate):
    """'X', 'Y' or None (excluded) for one parsed molecule."""
    if predicate == HALOGEN:
        return "Y" if has_halogen_moiety(graph) else "X"
    if predicate == AROMATIC:
        rings = count_aromatic_rings(graph)
        if rings == 2:
            return "X"
        if rings in (1, 3):
            return "Y"
        return None
    raise ConfigError(f"unknown predicate {predicate!r}; expected one of {PREDICATES}")


def split_structural(dataset, predicate, sizes=None, seed=0):
    """X/Y split by a structural predicate, then a seeded train/test split of each side.

    Unparseable SMILES are skipped and, in aromatic mode, molecules with 0 or
    at least 4 aromatic rings are excluded; both counts go into ``info`` and
    a DataWarning.
    """
    if predicate not in PREDICATES:
        raise ConfigError(f"unknown predicate {predicate!r}; expected one of {PREDICATES}")
    sizes = sizes or DEFAULT_SIZES[predicate]
    xs, ys = [], []
    skipped = excluded = 0
    for i, rec in enumerate(dataset):
        if rec.smiles is None:
            skipped += 1
            continue
        try:
            graph = parse_smiles(rec.smiles)
        except SmilesError:
            skipped += 1
            continue
        label = structural_label(graph, predicate)
        if label == "X":
            xs.append(i)
        elif label == "Y":
            ys.append(i)
        else:
            excluded += 1
    if skipped:
        warnings.warn(f"skipped {skipped} records without a parseable SMILES", DataWarning, stacklevel=2)
    if excluded:
        warnings.warn(f"excluded {excluded} records with 0 or >= 4 aromatic rings", DataWarning, stacklevel=2)
    rx, ry = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x_train, x_test = _train_test(dataset, xs, sizes.x_train, sizes.x_test, rx, "x")
    y_train, y_test = _train_test(dataset, ys, sizes.y_train, sizes.y_test, ry, "y")
    info = {"mode": "structural", "predicate": predicate, "seed": seed, "sizes": sizes.to_dict(),
            "skipped": skipped, "excluded": excluded}
    return SplitPair(x_train, y_train, x_test, y_test, info)


def _lowest(values, n):
    """Indices of the n smallest values; ties broken by position."""
    order = np.lexsort((np.arange(len(values)), values))
    return order[:n]


def _sample(dataset, indices, n, rng, what):
    indices = np.asarray(indices, dtype=np.int64)
    if n is None:
        n = len(indices)
    if n < 0:
        raise ConfigError(f"{what} size must be non-negative, got {n}")
    if n > len(indices):
        warnings.warn(f"{what}: requested {n} records but the pool holds {len(indices)}; using all",
                      DataWarning, stacklevel=3)
        n = len(indices)
    pick = np.sort(rng.choice(len(indices), size=n, replace=False)) if n < len(indices) else np.arange(n)
    return dataset.subset(indices[rng.permutation(pick)] if n else [])


def split_by_median(dataset, property_name=PENALIZED_LOGP, sizes=None, seed=0):
    """X below the median (ties included), Y above it; x_test is the N lowest records.

    The test set is removed before X is sampled, so x_train and x_test never share ids.
    """
    sizes = sizes or DEFAULT_SIZES["constrained"]
    values = dataset.values(property_name)
    if not len(values):
        raise DataError("cannot split an empty dataset")
    median = float(np.median(values))
    test_idx = _lowest(values, _take_test(sizes.x_test, len(values)))
    in_test = np.zeros(len(values), dtype=bool)
    in_test[test_idx] = True
    x_pool = np.flatnonzero((values <= median) & ~in_test)
    y_pool = np.flatnonzero((values > median) & ~in_test)
    rx, ry = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x_train = _sample(dataset, x_pool, sizes.x_train, rx, "x_train")
    y_train = _sample(dataset, y_pool, sizes.y_train, ry, "y_train")
    info = {"mode": "median", "property": property_name, "median": median, "seed": seed, "sizes": sizes.to_dict()}
    return SplitPair(x_train, y_train, dataset.subset(test_idx), Dataset(), info)


def split_top_fraction(dataset, property_name=PENALIZED_LOGP, fraction=0.2, sizes=None, seed=0):
    """Y sampled from the top ``fraction`` by property, X from the whole dataset; x_test = N lowest."""
    if not (isinstance(fraction, (int, float)) and 0 < fraction <= 1):
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction!r}")
    sizes = sizes or DEFAULT_SIZES["unconstrained"]
    values = dataset.values(property_name)
    if not len(values):
        raise DataError("cannot split an empty dataset")
    n_top = max(1, int(math.ceil(fraction * len(values) - 1e-9)))
    # highest values first, ties by position
    top = np.lexsort((np.arange(len(values)), -values))[:n_top]
    test_idx = _lowest(values, _take_test(sizes.x_test, len(values)))
    in_test = np.zeros(len(values), dtype=bool)
    in_test[test_idx] = True
    x_pool = np.flatnonzero(~in_test)
    y_pool = np.sort(top[~in_test[top]])
    rx, ry = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    x_train = _sample(dataset, x_pool, sizes.x_train, rx, "x_train")
    y_train = _sample(dataset, y_pool, sizes.y_train, ry, "y_train")
    info = {"mode": "top_fraction", "property": property_name, "fraction": fraction, "seed": seed,
            "sizes": sizes.to_dict()}
    return SplitPair(x_train, y_train, dataset.subset(test_idx), Dataset(), info)
