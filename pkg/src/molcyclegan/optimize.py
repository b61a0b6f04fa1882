"""Evaluation protocols: structural transformation, constrained paths, unconstrained iteration.

Every protocol takes a *generator*, which is either a trained
``CycleGanModel`` (applied in eval mode) or any callable mapping an
``(n, dim)`` array of latent points to another. Callables make it easy to
check the protocols against analytic generators.
"""
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .codec import EmbeddingTable
from .chem import count_aromatic_rings
from .errors import ConfigError, NumericError

DEFAULT_K = 80
DEFAULT_DELTAS = (0.0, 0.2, 0.4, 0.6)
SIMILARITY_BINS = np.linspace(0.0, 1.0, 21)


def as_generator(generator, direction="xy"):
    """Callable z -> G(z) for a model (eval mode) or a plain function."""
    if hasattr(generator, "transform"):
        return lambda z: generator.transform(z, direction)
    if callable(generator):
        return lambda z: np.asarray(generator(np.asarray(z, dtype=np.float64)), dtype=np.float64)
    raise ConfigError("generator must be a CycleGanModel or a callable")


def _apply(gen, z):
    out = gen(z)
    if out.shape != z.shape:
        raise ConfigError(f"generator returned shape {out.shape} for input {z.shape}")
    return out


# --- structural transformation ---------------------------------------------

@dataclass(frozen=True)
class DirectionMetrics:
    success_rate: float
    non_identity: float
    uniqueness: float
    n: int
    undecodable: int = 0

    def as_dict(self):
        return {"success_rate": self.success_rate, "non_identity": self.non_identity,
                "uniqueness": self.uniqueness, "n": self.n, "undecodable": self.undecodable}


@dataclass
class StructuralReport:
    xy: DirectionMetrics
    yx: DirectionMetrics | None
    surrogate_decode: bool
    rows: list = field(default_factory=list)
    similarity_hist: list = field(default_factory=list)
    ring_hist: list = field(default_factory=list)


def _rate(flags):
    return float(np.mean(flags)) if len(flags) else 0.0


def _transform_set(gen, records, codec, predicate, target, direction):
    z = codec.latents(records)
    decoded = codec.decode_many(_apply(gen, z)) if len(records) else []
    rows = []
    for rec, out in zip(records, decoded):
        row = {"direction": direction, "input_id": rec.id, "input_key": codec.key(rec)}
        if out is None:
            row.update(output_id=None, output_key=None, success=None, non_identity=None, similarity=None)
        else:
            key = codec.key(out)
            row.update(output_id=out.id, output_key=key,
                       success=codec.set_label(out, predicate) == target,
                       non_identity=key != row["input_key"],
                       similarity=codec.similarity(rec, out))
        rows.append(row)
    ok = [r for r in rows if r["output_key"] is not None]
    metrics = DirectionMetrics(
        success_rate=_rate([r["success"] for r in ok]),
        non_identity=_rate([r["non_identity"] for r in ok]),
        uniqueness=len({r["output_key"] for r in ok}) / len(ok) if ok else 0.0,
        n=len(ok),
        undecodable=len(rows) - len(ok),
    )
    return metrics, rows, decoded


def histogram_rows(values, label, bins=SIMILARITY_BINS):
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    total = counts.sum()
    width = np.diff(edges)
    return [{"series": label, "bin_lo": float(lo), "bin_hi": float(hi), "count": int(c),
             "density": float(c / (total * w)) if total else 0.0}
            for lo, hi, c, w in zip(edges[:-1], edges[1:], counts, width)]


def _ring_rows(codec, records, label):
    hist = {}
    for rec in records:
        if rec is None:
            continue
        n = count_aromatic_rings(codec.graph(rec.smiles))
        hist[n] = hist.get(n, 0) + 1
    return [{"series": label, "aromatic_rings": k, "count": hist[k]} for k in sorted(hist)]


def eval_structural(model, x_test, y_test, codec, predicate, baseline=None, seed=0):
    """Success rate, non-identity and uniqueness for X -> G(X) and, if y_test is non-empty, Y -> F(Y).

    ``baseline`` is an optional dataset of random molecules; similarities of
    test inputs to random members of it are added to the histogram data.
    """
    g = as_generator(model, "xy")
    xy, rows, gen_x = _transform_set(g, list(x_test), codec, predicate, "Y", "xy")
    yx = None
    gen_y = []
    if y_test is not None and len(y_test):
        f = as_generator(model, "yx")
        yx, more, gen_y = _transform_set(f, list(y_test), codec, predicate, "X", "yx")
        rows += more
    sims = histogram_rows([r["similarity"] for r in rows if r["direction"] == "xy" and r["similarity"] is not None],
                          "x_vs_gx")
    if yx is not None:
        sims += histogram_rows([r["similarity"] for r in rows if r["direction"] == "yx" and r["similarity"] is not None],
                               "y_vs_fy")
    if baseline is not None and len(baseline):
        sims += histogram_rows(similarity_baseline(x_test, baseline, codec, seed), "x_vs_random")
        if y_test is not None and len(y_test):
            sims += histogram_rows(similarity_baseline(y_test, baseline, codec, seed + 1), "y_vs_random")
    rings = []
    if isinstance(codec, EmbeddingTable):
        rings = _ring_rows(codec, list(x_test), "x") + _ring_rows(codec, gen_x, "g_x")
        if yx is not None:
            rings += _ring_rows(codec, list(y_test), "y") + _ring_rows(codec, gen_y, "f_y")
    return StructuralReport(xy, yx, codec.surrogate_decode, rows, sims, rings)


def similarity_baseline(x_set, dataset, codec, seed=0):
    """Similarity of each x to one uniformly drawn member of ``dataset``."""
    pool = list(dataset)
    if not pool:
        raise ConfigError("baseline dataset is empty")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(pool), size=len(x_set))
    return np.array([codec.similarity(x, pool[j]) for x, j in zip(x_set, picks)], dtype=np.float64)


# --- constrained optimisation ----------------------------------------------

def path_fractions(k_points, include_endpoint=True):
    """Interpolation fractions t_k for k = 1..K.

    With the endpoint, t_k = k/K so the last point is G(x); without it the
    K points sit strictly between x and G(x) at k/(K+1).
    """
    if k_points < 1:
        raise ConfigError(f"K must be at least 1, got {k_points}")
    denom = k_points if include_endpoint else k_points + 1
    return np.arange(1, k_points + 1, dtype=np.float64) / denom


def optimization_path(x, gx, k_points=DEFAULT_K, include_endpoint=True):
    """(K, dim) array of points (1 - t) x + t G(x); the t = 1 point equals G(x) bitwise."""
    t = path_fractions(k_points, include_endpoint)[:, None]
    return (1.0 - t) * np.asarray(x)[None, :] + t * np.asarray(gx)[None, :]


@dataclass
class DecodedPath:
    start: object
    latent_start: np.ndarray
    latent_end: np.ndarray
    fractions: np.ndarray
    decoded: list


@dataclass
class OptimizationOutcome:
    start: object
    delta: float
    path: DecodedPath
    best: object = None
    best_step: int | None = None
    improvement: float | None = None
    similarity: float | None = None
    success: bool = False
    n_candidates: int = 0

    def to_json(self, codec, property_name):
        best = self.best
        return {
            "start_id": self.start.id,
            "start_key": codec.key(self.start),
            "start_property": codec.property(self.start, property_name),
            "delta": self.delta,
            "success": self.success,
            "best_id": None if best is None else best.id,
            "best_key": None if best is None else codec.key(best),
            "best_property": None if best is None else codec.property(best, property_name),
            "best_step": self.best_step,
            "improvement": self.improvement,
            "similarity": self.similarity,
            "n_candidates": self.n_candidates,
            "latent_start": [float(v) for v in self.path.latent_start],
            "latent_end": [float(v) for v in self.path.latent_end],
            "path_t": [float(v) for v in self.path.fractions],
            "path_ids": [None if r is None else r.id for r in self.path.decoded],
        }


def decode_paths(model, x_test, codec, k_points=DEFAULT_K, include_endpoint=True):
    """Compute G(x) for every start and decode the K interpolated points."""
    g = as_generator(model, "xy")
    starts = list(x_test)
    if not starts:
        return []
    z = codec.latents(starts)
    gz = _apply(g, z)
    t = path_fractions(k_points, include_endpoint)
    paths = []
    for rec, x, gx in zip(starts, z, gz):
        pts = optimization_path(x, gx, k_points, include_endpoint)
        paths.append(DecodedPath(rec, x.copy(), gx.copy(), t, codec.decode_many(pts)))
    return paths


def select_best(path, codec, property_name, delta, require_positive_improvement=False):
    """Pick the best distinct, similar-enough molecule on one decoded path."""
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must lie in [0, 1], got {delta}")
    start_key = codec.key(path.start)
    start_value = codec.property(path.start, property_name)
    seen = set()
    best = best_step = best_sim = None
    best_value = -math.inf
    n_candidates = 0
    for step, rec in enumerate(path.decoded, start=1):
        if rec is None:
            continue
        key = codec.key(rec)
        if key == start_key or key in seen:
            continue
        seen.add(key)
        sim = codec.similarity(path.start, rec)
        if sim < delta:
            continue
        n_candidates += 1
        value = codec.property(rec, property_name)
        if value > best_value:
            best, best_step, best_sim, best_value = rec, step, sim, value
    out = OptimizationOutcome(path.start, float(delta), path, n_candidates=n_candidates)
    if best is None:
        return out
    improvement = best_value - start_value
    if require_positive_improvement and not improvement > 0:
        return out
    out.best, out.best_step, out.similarity = best, best_step, best_sim
    out.improvement = improvement
    out.success = True
    return out


def constrained_optimize(model, x_test, codec, property_name, delta, k_points=DEFAULT_K,
                         include_endpoint=True, require_positive_improvement=False):
    """One OptimizationOutcome per start molecule for a single similarity threshold."""
    paths = decode_paths(model, x_test, codec, k_points, include_endpoint)
    return [select_best(p, codec, property_name, delta, require_positive_improvement) for p in paths]


def constrained_sweep(model, x_test, codec, property_name, deltas=DEFAULT_DELTAS, k_points=DEFAULT_K,
                      include_endpoint=True, require_positive_improvement=False):
    """Outcomes for every delta, decoding each path only once."""
    paths = decode_paths(model, x_test, codec, k_points, include_endpoint)
    return {float(d): [select_best(p, codec, property_name, d, require_positive_improvement) for p in paths]
            for d in deltas}


def _mean_std(values):
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def eval_constrained(outcomes_by_delta):
    """Summary rows (one per delta): success rate over all starts, mean/std over successes.

    Standard deviations are population (ddof = 0) values.
    """
    rows = []
    for delta in sorted(outcomes_by_delta):
        outs = outcomes_by_delta[delta]
        wins = [o for o in outs if o.success]
        imp_mean, imp_std = _mean_std([o.improvement for o in wins])
        sim_mean, sim_std = _mean_std([o.similarity for o in wins])
        rows.append({"delta": float(delta), "n_starts": len(outs), "n_success": len(wins),
                     "success_rate": len(wins) / len(outs) if outs else 0.0,
                     "improvement_mean": imp_mean, "improvement_std": imp_std,
                     "similarity_mean": sim_mean, "similarity_std": sim_std})
    return rows


# --- unconstrained iteration -------------------------------------------------

@dataclass
class IterationStats:
    iteration: int
    properties: np.ndarray
    similarities: np.ndarray
    records: list
    undecodable: int = 0

    @property
    def summary(self):
        p = self.properties
        best = int(np.argmax(p)) if len(p) else None
        decoded = [r for r in self.records if r is not None]
        return {
            "iteration": self.iteration,
            "n": int(len(p)),
            "undecodable": self.undecodable,
            "mean": float(p.mean()) if len(p) else None,
            "p75": float(np.percentile(p, 75)) if len(p) else None,
            "p90": float(np.percentile(p, 90)) if len(p) else None,
            "max": float(p.max()) if len(p) else None,
            "similarity_mean": float(self.similarities.mean()) if len(self.similarities) else None,
            "best_id": decoded[best].id if best is not None else None,
        }


@dataclass
class IterationTrace:
    iterations: list
    aborted_at: int | None = None
    error: str | None = None

    def means(self):
        return np.array([it.summary["mean"] for it in self.iterations], dtype=np.float64)


def _iteration_stats(i, starts, decoded, codec, property_name):
    pairs = [(s, r) for s, r in zip(starts, decoded) if r is not None]
    props = np.array([codec.property(r, property_name) for _, r in pairs], dtype=np.float64)
    sims = np.array([codec.similarity(s, r) for s, r in pairs], dtype=np.float64)
    return IterationStats(i, props, sims, list(decoded), len(decoded) - len(pairs))


def unconstrained_iterate(model, x_start, codec, property_name, iterations):
    """Apply G repeatedly, z^(i+1) = G(z^(i)), decoding and scoring every iteration.

    Iteration 0 is the starting set itself. A non-finite latent point stops
    the run; the trace up to that point is returned with ``aborted_at`` set.
    """
    if iterations < 0:
        raise ConfigError(f"iterations must be non-negative, got {iterations}")
    g = as_generator(model, "xy")
    starts = list(x_start)
    trace = IterationTrace([_iteration_stats(0, starts, starts, codec, property_name)])
    z = codec.latents(starts)
    for i in range(1, iterations + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                z = _apply(g, z)
        except NumericError as exc:
            trace.aborted_at, trace.error = i, str(exc)
            break
        if not np.all(np.isfinite(z)):
            trace.aborted_at, trace.error = i, "non-finite latent coordinates"
            break
        trace.iterations.append(_iteration_stats(i, starts, codec.decode_many(z), codec, property_name))
    return trace


# --- report files ------------------------------------------------------------

def report_meta(codec, config_hash=None, **extra):
    meta = {"surrogate_decode": bool(codec.surrogate_decode), "config_hash": config_hash}
    meta.update(extra)
    return meta


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, rows, columns, meta):
    """CSV preceded by one '# key=value' comment line per metadata entry."""
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={_fmt(meta[key])}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def read_csv(path):
    """(meta, rows) from a file written by ``write_csv``; cells stay strings."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# ") and not body:
            key, _, value = line[2:].partition("=")
            meta[key] = value
        else:
            body.append(line)
    reader = csv.DictReader(body)
    return meta, list(reader)


def write_jsonl(path, rows, meta):
    """JSONL whose first line is ``{"meta": {...}}``."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"meta": meta}, sort_keys=True, allow_nan=False) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, allow_nan=False) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    meta = lines[0]["meta"] if lines and "meta" in lines[0] else {}
    return meta, lines[1:] if meta else lines


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


STRUCTURAL_COLUMNS = ["direction", "success_rate", "non_identity", "uniqueness", "n", "undecodable"]
CONSTRAINED_COLUMNS = ["delta", "n_starts", "n_success", "success_rate", "improvement_mean", "improvement_std",
                       "similarity_mean", "similarity_std"]
ITERATION_COLUMNS = ["iteration", "n", "undecodable", "mean", "p75", "p90", "max", "similarity_mean", "best_id"]


def write_structural(out_dir, report, meta):
    os.makedirs(out_dir, exist_ok=True)
    summary = [dict(direction="xy", **report.xy.as_dict())]
    if report.yx is not None:
        summary.append(dict(direction="yx", **report.yx.as_dict()))
    write_csv(os.path.join(out_dir, "structural_summary.csv"), summary, STRUCTURAL_COLUMNS, meta)
    write_jsonl(os.path.join(out_dir, "structural_raw.jsonl"), report.rows, meta)
    write_csv(os.path.join(out_dir, "structural_similarity_hist.csv"), report.similarity_hist,
              ["series", "bin_lo", "bin_hi", "count", "density"], meta)
    if report.ring_hist:
        write_csv(os.path.join(out_dir, "ring_counts.csv"), report.ring_hist, ["series", "aromatic_rings", "count"], meta)


def write_constrained(out_dir, outcomes_by_delta, codec, property_name, meta):
    os.makedirs(out_dir, exist_ok=True)
    rows = eval_constrained(outcomes_by_delta)
    write_csv(os.path.join(out_dir, "constrained_summary.csv"), rows, CONSTRAINED_COLUMNS, meta)
    raw = [o.to_json(codec, property_name) for d in sorted(outcomes_by_delta) for o in outcomes_by_delta[d]]
    write_jsonl(os.path.join(out_dir, "constrained_raw.jsonl"), raw, meta)
    return rows


def write_trace(out_dir, trace, codec, property_name, meta):
    os.makedirs(out_dir, exist_ok=True)
    summary = [it.summary for it in trace.iterations]
    meta = dict(meta, aborted_at=trace.aborted_at)
    write_csv(os.path.join(out_dir, "unconstrained_summary.csv"), summary, ITERATION_COLUMNS, meta)
    lo = min((float(it.properties.min()) for it in trace.iterations if len(it.properties)), default=0.0)
    hi = max((float(it.properties.max()) for it in trace.iterations if len(it.properties)), default=1.0)
    bins = np.linspace(lo, hi if hi > lo else lo + 1.0, 31)
    prop_rows, sim_rows = [], []
    for it in trace.iterations:
        prop_rows += histogram_rows(it.properties, f"iteration_{it.iteration}", bins)
        sim_rows += histogram_rows(it.similarities, f"iteration_{it.iteration}")
    hist_cols = ["series", "bin_lo", "bin_hi", "count", "density"]
    write_csv(os.path.join(out_dir, "unconstrained_property_hist.csv"), prop_rows, hist_cols, meta)
    write_csv(os.path.join(out_dir, "unconstrained_similarity_hist.csv"), sim_rows, hist_cols, meta)
    raw = []
    for it in trace.iterations:
        for rec, start in zip(it.records, _starts(trace)):
            raw.append({"iteration": it.iteration, "start_id": start.id,
                        "id": None if rec is None else rec.id,
                        "property": None if rec is None else codec.property(rec, property_name),
                        "similarity": None if rec is None else codec.similarity(start, rec)})
    write_jsonl(os.path.join(out_dir, "unconstrained_raw.jsonl"), raw, meta)
    best = [{"iteration": it.iteration, "best_id": it.summary["best_id"],
             "best_smiles": _best_smiles(it), "max": it.summary["max"]} for it in trace.iterations]
    write_csv(os.path.join(out_dir, "best_per_iteration.csv"), best, ["iteration", "best_id", "best_smiles", "max"], meta)
    return summary


def _starts(trace):
    return trace.iterations[0].records


def _best_smiles(it):
    decoded = [r for r in it.records if r is not None]
    if not decoded:
        return None
    return decoded[int(np.argmax(it.properties))].smiles
