import numpy as np
import pytest

from helpers import corpus_smiles, table_records
from molcyclegan.codec import EmbeddingTable, SyntheticSpace, synthetic_sample
from molcyclegan.dataio import Dataset, MoleculeRecord
from molcyclegan.errors import ConfigError
from molcyclegan import optimize as opt


def lookup_table(smiles, props=None):
    """Table with molecule i embedded at (10 i, 0) so generators can target records by index."""
    props = props or [0.0] * len(smiles)
    return EmbeddingTable(Dataset(MoleculeRecord(f"m{i}", s, [10.0 * i, 0.0], {"v": float(p)})
                                  for i, (s, p) in enumerate(zip(smiles, props))))


def mapping_generator(mapping):
    """Generator sending the record at index i to the record at index mapping[i]."""
    def g(z):
        idx = np.rint(z[:, 0] / 10.0).astype(int)
        return np.stack([[10.0 * mapping[i], 0.0] for i in idx])
    return g


def shift_generator(delta):
    return lambda z: z + delta


class TestStructural:
    SMILES = ["CCO", "CCC", "CCN", "CO", "CCCC", "CCF", "CCCl", "CCCCO", "CNC", "OCCO"]

    def test_identity_generator(self):
        t = lookup_table(self.SMILES)
        report = opt.eval_structural(lambda z: z, t.records[:5], t.records[5:7], t, "halogen")
        assert report.xy.non_identity == 0.0 and report.xy.success_rate == 0.0
        assert report.yx.non_identity == 0.0 and report.yx.success_rate == 0.0
        assert report.surrogate_decode

    def test_uniqueness(self):
        t = lookup_table(self.SMILES)
        g = mapping_generator({0: 5, 1: 6, 2: 5, 3: 7})
        report = opt.eval_structural(g, t.records[:4], [], t, "halogen")
        assert report.xy.uniqueness == 0.75
        assert report.yx is None

    def test_two_of_five(self):
        t = lookup_table(self.SMILES)
        g = mapping_generator({0: 5, 1: 7, 2: 8, 3: 6, 4: 9})
        report = opt.eval_structural(g, t.records[:5], [], t, "halogen")
        recount = sum(t.set_label(t.records[j], "halogen") == "Y" for j in (5, 7, 8, 6, 9)) / 5
        assert report.xy.success_rate == recount == 0.4
        assert report.xy.non_identity == 1.0
        assert [r["output_id"] for r in report.rows] == ["m5", "m7", "m8", "m6", "m9"]

    def test_undecodable_excluded(self):
        empty = EmbeddingTable(Dataset())
        x = [MoleculeRecord("a", "CCO", [0.0, 0.0])]
        report = opt.eval_structural(lambda z: z, x, [], empty, "halogen")
        assert report.xy.undecodable == 1 and report.xy.n == 0
        assert report.xy.success_rate == 0.0

    def test_ring_histograms(self):
        t = lookup_table(["c1ccccc1", "c1ccc2ccccc2c1", "CC"])
        report = opt.eval_structural(mapping_generator({1: 0}), [t.records[1]], [], t, "aromatic_rings")
        assert report.xy.success_rate == 1.0
        assert {(r["series"], r["aromatic_rings"], r["count"]) for r in report.ring_hist} == {("x", 2, 1), ("g_x", 1, 1)}

    def test_synthetic_oracle(self):
        s = SyntheticSpace()
        x = synthetic_sample(s, "X", 200, seed=0)
        report = opt.eval_structural(shift_generator(s.shift), x, [], s, "property_sign")
        ys = x.embeddings() + s.shift
        assert report.xy.success_rate == np.mean(ys @ s.w + s.b > s.threshold)
        assert report.xy.uniqueness == 1.0
        assert not report.surrogate_decode


class TestPath:
    def test_endpoint_bitwise(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x, gx = rng.normal(size=56), rng.normal(size=56) * 3
            pts = opt.optimization_path(x, gx, 80)
            assert pts.shape == (80, 56)
            assert pts[-1].tobytes() == gx.tobytes()
            steps = np.linalg.norm(np.diff(np.vstack([x, pts]), axis=0), axis=1)
            assert np.max(np.abs(steps - steps[0])) < 1e-12

    def test_interior_only(self):
        t = opt.path_fractions(4, include_endpoint=False)
        assert t.tolist() == [0.2, 0.4, 0.6, 0.8]
        assert opt.path_fractions(4).tolist() == [0.25, 0.5, 0.75, 1.0]

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            opt.path_fractions(0)


class TestConstrained:
    def test_analytic_path_maximum(self):
        s = SyntheticSpace()
        x = synthetic_sample(s, "X", 100, seed=1)
        step = np.zeros(56)
        step[0] = 4.0
        outs = opt.constrained_optimize(shift_generator(step), x, s, "p", 0.0, k_points=80)
        for o in outs:
            assert o.success and o.best_step == 80
            assert abs(o.improvement - 4.0) <= 1e-12
            assert o.best.embedding.tobytes() == (o.path.latent_start + step).tobytes()

    def test_oracle_generator(self):
        s = SyntheticSpace()
        x = synthetic_sample(s, "X", 50, seed=2)
        outs = opt.constrained_optimize(shift_generator(s.shift), x, s, "p", 0.0)
        assert all(o.success for o in outs)
        assert max(abs(o.improvement - float(s.w @ s.shift)) for o in outs) <= 1e-12

    def test_delta_zero_any_distinct(self):
        t = lookup_table(["CCO", "c1ccccc1Cl"], [0.0, -5.0])
        out = opt.constrained_optimize(mapping_generator({0: 1}), [t.records[0]], t, "v", 0.0, k_points=4)[0]
        assert out.success and out.best.id == "m1"
        assert out.improvement == -5.0

    def test_delta_one(self):
        t = lookup_table(["CCO", "CCCCCCCC", "CCCCCCCCC", "CCN"], [0.0, 1.0, 2.0, 3.0])
        fail = opt.constrained_optimize(mapping_generator({0: 3}), [t.records[0]], t, "v", 1.0, k_points=10)[0]
        assert not fail.success and fail.best is None and fail.improvement is None
        # octane and nonane share every radius-2 environment, so their fingerprints coincide
        hit = opt.constrained_optimize(mapping_generator({1: 2}), [t.records[1]], t, "v", 1.0, k_points=10)[0]
        assert hit.success and hit.similarity == 1.0 and hit.best.smiles == "CCCCCCCCC"

    def test_start_never_competes(self):
        t = lookup_table(["CCO", "CCN"], [10.0, 1.0])
        out = opt.constrained_optimize(mapping_generator({0: 0}), [t.records[0]], t, "v", 0.0, k_points=5)[0]
        assert not out.success and out.n_candidates == 0

    def test_duplicates_collapsed(self):
        t = lookup_table(["CCO", "CCN"], [0.0, 1.0])
        out = opt.constrained_optimize(mapping_generator({0: 1}), [t.records[0]], t, "v", 0.0, k_points=10)[0]
        assert out.n_candidates == 1
        # t = 0.5 is equidistant and the id tie-break picks the start, so CCN first appears at step 6
        assert out.best_step == 6

    def test_require_positive_improvement(self):
        s = SyntheticSpace()
        x = synthetic_sample(s, "Y", 10, seed=3)
        down = shift_generator(-s.shift)
        assert all(o.success for o in opt.constrained_optimize(down, x, s, "p", 0.0, k_points=5))
        assert not any(o.success for o in opt.constrained_optimize(down, x, s, "p", 0.0, k_points=5,
                                                                   require_positive_improvement=True))

    def test_bad_delta(self):
        s = SyntheticSpace()
        with pytest.raises(ConfigError):
            opt.constrained_optimize(lambda z: z, synthetic_sample(s, "X", 2), s, "p", 1.5)

    def test_outcome_consistency_and_monotone_rate(self):
        t = EmbeddingTable(Dataset(MoleculeRecord(r["id"], r["smiles"], r["embedding"], r["properties"])
                                   for r in table_records(400)))
        rng = np.random.default_rng(4)
        direction = rng.normal(size=56) * 2.0
        starts = t.records[:40]
        sweep = opt.constrained_sweep(shift_generator(direction), starts, t, "score",
                                      deltas=(0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0), k_points=20)
        rates = [r["success_rate"] for r in opt.eval_constrained(sweep)]
        assert rates == sorted(rates, reverse=True)
        assert rates[0] > 0
        for delta, outs in sweep.items():
            for o in outs:
                if o.success:
                    assert o.similarity >= delta
                    assert t.key(o.best) != t.key(o.start)
                    assert o.improvement == o.best.prop("score") - o.start.prop("score")


class TestEvalConstrained:
    def outcome(self, improvement=None, similarity=0.5):
        start = MoleculeRecord("s")
        if improvement is None:
            return opt.OptimizationOutcome(start, 0.0, None)
        return opt.OptimizationOutcome(start, 0.0, None, MoleculeRecord("b"), 1, improvement, similarity, True, 1)

    def test_arithmetic(self):
        row = opt.eval_constrained({0.0: [self.outcome(2.0), self.outcome(4.0), self.outcome()]})[0]
        assert row["improvement_mean"] == 3.0
        assert row["improvement_std"] == 1.0
        assert row["success_rate"] == 2 / 3

    def test_all_failures(self):
        row = opt.eval_constrained({0.4: [self.outcome(), self.outcome()]})[0]
        assert row["success_rate"] == 0.0
        assert row["improvement_mean"] is None and row["similarity_std"] is None

    def test_recount_from_raw(self, tmp_path):
        s = SyntheticSpace()
        rng = np.random.default_rng(5)
        x = synthetic_sample(s, "X", 20, seed=5)
        gen = lambda z: z + rng.normal(size=z.shape) * 2
        sweep = opt.constrained_sweep(gen, x, s, "p", deltas=(0.0, 0.3, 0.6), k_points=8)
        meta = opt.report_meta(s, "abc")
        rows = opt.write_constrained(tmp_path, sweep, s, "p", meta)
        csv_meta, csv_rows = opt.read_csv(tmp_path / "constrained_summary.csv")
        assert len(csv_rows) == 3
        assert csv_meta["surrogate_decode"] == "false" and csv_meta["config_hash"] == "abc"
        raw_meta, raw = opt.read_jsonl(tmp_path / "constrained_raw.jsonl")
        assert raw_meta == meta and len(raw) == 60
        for row, csv_row in zip(rows, csv_rows):
            mine = [r for r in raw if r["delta"] == row["delta"]]
            wins = [r for r in mine if r["success"]]
            assert row["success_rate"] == len(wins) / 20
            if wins:
                imps = np.array([r["best_property"] - r["start_property"] for r in wins])
                assert [r["improvement"] for r in wins] == imps.tolist()
                assert row["improvement_mean"] == pytest.approx(imps.mean(), abs=1e-12)
                assert row["improvement_std"] == pytest.approx(imps.std(), abs=1e-12)
                assert float(csv_row["improvement_mean"]) == row["improvement_mean"]
            for r in wins:
                assert r["similarity"] >= r["delta"] and r["best_key"] != r["start_key"]


class TestUnconstrained:
    def test_zero_iterations(self):
        s = SyntheticSpace()
        trace = opt.unconstrained_iterate(shift_generator(1.0), synthetic_sample(s, "X", 5), s, "p", 0)
        assert len(trace.iterations) == 1 and trace.iterations[0].iteration == 0

    def test_identity(self):
        t = lookup_table(["CCO", "CCN", "CCF"], [1.0, 2.0, 3.0])
        trace = opt.unconstrained_iterate(lambda z: z, t.records, t, "v", 3)
        for it in trace.iterations:
            assert np.array_equal(it.properties, [1.0, 2.0, 3.0])
            assert np.all(it.similarities == 1.0)

    def test_unit_increment(self):
        s = SyntheticSpace()
        step = np.zeros(56)
        step[0] = 1.0
        trace = opt.unconstrained_iterate(shift_generator(step), synthetic_sample(s, "X", 100, seed=6), s, "p", 10)
        means = trace.means()
        assert len(means) == 11
        assert np.max(np.abs(np.diff(means) - 1.0)) < 1e-12

    def test_summary_fields(self):
        s = SyntheticSpace()
        trace = opt.unconstrained_iterate(shift_generator(0.5), synthetic_sample(s, "X", 50, seed=7), s, "p", 2)
        summ = trace.iterations[2].summary
        p = trace.iterations[2].properties
        assert summ["p90"] == float(np.percentile(p, 90)) and summ["max"] == float(p.max())

    def test_abort_on_non_finite(self):
        s = SyntheticSpace()
        calls = []

        def g(z):
            calls.append(1)
            return z * 1e200

        trace = opt.unconstrained_iterate(g, synthetic_sample(s, "X", 3, seed=8), s, "p", 10)
        assert trace.aborted_at == 2
        assert len(trace.iterations) == 2

    def test_writes_reports(self, tmp_path):
        t = lookup_table(["CCO", "CCN", "CCF"], [1.0, 2.0, 3.0])
        trace = opt.unconstrained_iterate(mapping_generator({0: 1, 1: 2, 2: 2}), t.records, t, "v", 2)
        opt.write_trace(tmp_path, trace, t, "v", opt.report_meta(t))
        _, best = opt.read_csv(tmp_path / "best_per_iteration.csv")
        assert [b["best_smiles"] for b in best] == ["CCF", "CCF", "CCF"]
        _, rows = opt.read_csv(tmp_path / "unconstrained_summary.csv")
        assert [float(r["mean"]) for r in rows] == [2.0, 8 / 3, 3.0]


class TestBaseline:
    def test_self_dataset(self):
        t = lookup_table(["CCO"])
        assert opt.similarity_baseline(t.records * 4, t.records, t).tolist() == [1.0] * 4

    def test_seeded(self):
        t = lookup_table(corpus_smiles()[:50])
        a = opt.similarity_baseline(t.records[:20], t.records, t, seed=3)
        assert np.array_equal(a, opt.similarity_baseline(t.records[:20], t.records, t, seed=3))
        assert not np.array_equal(a, opt.similarity_baseline(t.records[:20], t.records, t, seed=4))

    def test_recount(self):
        t = lookup_table(corpus_smiles()[:100])
        got = opt.similarity_baseline(t.records, t.records, t, seed=9)
        picks = np.random.default_rng(9).integers(0, 100, size=100)
        assert got.tolist() == [t.similarity(x, t.records[j]) for x, j in zip(t.records, picks)]

    def test_empty(self):
        t = lookup_table(["CCO"])
        with pytest.raises(ConfigError):
            opt.similarity_baseline(t.records, [], t)


def test_histogram_rows():
    rows = opt.histogram_rows([0.0, 0.5, 0.5, 1.0], "s")
    assert len(rows) == 20 and sum(r["count"] for r in rows) == 4
    assert sum(r["density"] * (r["bin_hi"] - r["bin_lo"]) for r in rows) == pytest.approx(1.0)
