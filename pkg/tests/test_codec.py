import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import table_records
from molcyclegan.codec import (
    EmbeddingTable, SyntheticSpace, decode_nearest, encode, synthetic_decode, synthetic_sample,
)
from molcyclegan.dataio import DataWarning, Dataset, MoleculeRecord
from molcyclegan.errors import ConfigError, LookupFailure, ShapeError


@pytest.fixture(scope="module")
def table():
    return EmbeddingTable(Dataset(MoleculeRecord(r["id"], r["smiles"], r["embedding"], r["properties"])
                                  for r in table_records(300)))


def point_table(points, ids=None):
    ids = ids or [f"p{i}" for i in range(len(points))]
    return EmbeddingTable(Dataset(MoleculeRecord(i, "C", np.asarray(p, float)) for i, p in zip(ids, points)))


def brute_force(matrix, ids, q, k):
    d = np.sqrt(((matrix - q) ** 2).sum(axis=1))
    order = sorted(range(len(ids)), key=lambda i: (d[i], ids[i]))
    return order[:k]


class TestEncode:
    def test_returns_stored_embedding(self, table):
        rec = table.records[17]
        assert np.array_equal(encode(table, rec.smiles), rec.embedding)

    def test_alternate_spelling(self):
        t = EmbeddingTable(Dataset([MoleculeRecord("a", "CCO", [1.0, 2.0]), MoleculeRecord("b", "CCN", [3.0, 4.0])]))
        assert np.array_equal(t.encode("OCC"), [1.0, 2.0])
        assert np.array_equal(t.encode("C(O)C"), [1.0, 2.0])

    def test_absent(self, table):
        with pytest.raises(LookupFailure):
            table.encode("C1CCCCCCCCCCCCCCCCC1")
        with pytest.raises(LookupFailure):
            table.encode("C1CC")

    def test_round_trip(self, table):
        for rec in table.records[:40]:
            assert decode_nearest(table, table.encode(rec.smiles), 1)[0].id == rec.id


class TestDecode:
    def test_exact_point_first(self, table):
        rec = table.records[5]
        idx, dist = table.nearest(rec.embedding, 3)
        assert table.records[idx[0, 0]].id == rec.id
        assert dist[0, 0] == 0.0

    def test_order_by_distance(self):
        t = point_table([[2.0, 0.0], [1.0, 0.0]])
        assert [r.id for r in t.decode_nearest([0.0, 0.0], 2)] == ["p1", "p0"]

    def test_ties_by_id(self):
        t = point_table([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], ids=["c", "a", "b"])
        assert [r.id for r in t.decode_nearest([0.0, 0.0], 3)] == ["a", "b", "c"]

    def test_k_clipped(self):
        t = point_table([[0.0], [1.0]])
        with pytest.warns(DataWarning):
            assert len(t.decode_nearest([0.0], 5)) == 2

    def test_bad_query(self, table):
        with pytest.raises(ShapeError):
            table.nearest(np.zeros(3))
        with pytest.raises(ShapeError):
            table.nearest(np.full(56, np.nan))
        with pytest.raises(ConfigError):
            table.nearest(np.zeros(56), 0)

    def test_empty_table(self):
        t = EmbeddingTable(Dataset())
        with pytest.raises(LookupFailure):
            t.nearest(np.zeros(4))
        assert t.decode_many(np.zeros((2, 4))) == [None, None]

    def test_brute_force_200_by_50(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(200, 56))
        t = point_table(pts)
        queries = rng.normal(size=(50, 56))
        idx, _ = t.nearest(queries, 5)
        for q, row in zip(queries, idx):
            assert list(row) == brute_force(pts, t.dataset.ids, q, 5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 1000), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_brute_force_property(self, n, dim, seed):
        rng = np.random.default_rng(seed)
        # coarse grid so exact distance ties are common
        pts = rng.integers(-2, 3, size=(n, dim)).astype(float)
        ids = [f"{int(v):06d}" for v in rng.permutation(n)]
        t = point_table(pts, ids)
        q = rng.integers(-2, 3, size=dim).astype(float)
        k = min(n, 4)
        idx, _ = t.nearest(q, k)
        assert list(idx[0]) == brute_force(pts, ids, q, k)

    def test_decode_many_matches_single(self, table):
        z = np.random.default_rng(1).normal(size=(10, 56))
        many = table.decode_many(z)
        assert [r.id for r in many] == [table.decode_nearest(row)[0].id for row in z]


class TestTableChemistry:
    def test_key_is_canonical(self, table):
        a = MoleculeRecord("x", "OCC")
        b = MoleculeRecord("y", "CCO")
        assert table.key(a) == table.key(b)

    def test_similarity(self, table):
        a = table.records[0]
        assert table.similarity(a, a) == 1.0

    def test_set_label(self, table):
        assert table.set_label(MoleculeRecord("x", "CCF"), "halogen") == "Y"
        assert table.set_label(MoleculeRecord("x", "c1ccccc1"), "aromatic_rings") == "Y"
        assert table.set_label(MoleculeRecord("x", "CCC"), "aromatic_rings") is None


class TestSynthetic:
    def test_defaults(self):
        s = SyntheticSpace()
        assert s.dim == 56
        assert s.mu_x[0] == -2.0 and s.mu_y[0] == 2.0 and not np.any(s.mu_x[1:])
        assert s.threshold == 0.0

    def test_invalid(self):
        with pytest.raises(ConfigError):
            SyntheticSpace(dim=2, mu_x=[1.0, 0.0], mu_y=[1.0, 0.0])
        with pytest.raises(ConfigError):
            SyntheticSpace(dim=2, w=[0.0, 0.0])
        with pytest.raises(ConfigError):
            SyntheticSpace(dim=2, mu_x=[1.0, 0.0, 0.0])

    def test_reproducible(self):
        s = SyntheticSpace()
        a = synthetic_sample(s, "X", 20, seed=3)
        assert a == synthetic_sample(s, "X", 20, seed=3)
        assert a != synthetic_sample(s, "X", 20, seed=4)
        assert not np.array_equal(a.embeddings(), synthetic_sample(s, "Y", 20, seed=3).embeddings() - 4 * np.eye(56)[0])

    def test_sample_mean(self):
        s = SyntheticSpace()
        for label, mu in (("X", s.mu_x), ("Y", s.mu_y)):
            mean = synthetic_sample(s, label, 10000, seed=0).embeddings().mean(axis=0)
            assert np.max(np.abs(mean - mu)) < 0.05

    def test_property_exact(self):
        s = SyntheticSpace(dim=4, w=[0.5, -1.0, 0.0, 2.0], b=0.25)
        for r in synthetic_sample(s, "Y", 50, seed=1):
            assert r.prop("p") == float(r.embedding @ s.w + s.b)
        assert all(r.smiles is None for r in synthetic_sample(s, "X", 3))

    def test_bad_sample_args(self):
        with pytest.raises(ConfigError):
            synthetic_sample(SyntheticSpace(), "Z", 3)
        with pytest.raises(ConfigError):
            synthetic_sample(SyntheticSpace(), "X", 0)

    def test_decode(self):
        s = SyntheticSpace(dim=3)
        z = np.array([0.1, -0.2, 0.3])
        r = synthetic_decode(s, z)
        assert r.prop("p") == float(z @ s.w)
        assert r.embedding.tobytes() == z.tobytes()
        assert synthetic_decode(s, r.embedding).embedding.tobytes() == z.tobytes()

    def test_decode_injective(self):
        s = SyntheticSpace(dim=3)
        z = np.random.default_rng(0).normal(size=(200, 3))
        z[1] = np.nextafter(z[0], np.inf)
        keys = {s.key(r) for r in s.decode_many(z)}
        ids = {r.id for r in s.decode_many(z)}
        assert len(keys) == len(ids) == 200

    def test_labels_and_similarity(self):
        s = SyntheticSpace(dim=2)
        a, b = s.record([1.0, 0.0]), s.record([-1.0, 0.0])
        assert s.set_label(a) == "Y" and s.set_label(b) == "X"
        assert s.similarity(a, a) == 1.0
        assert s.similarity(a, b) == pytest.approx(1 / 3)
        with pytest.raises(ConfigError):
            s.set_label(a, "halogen")
