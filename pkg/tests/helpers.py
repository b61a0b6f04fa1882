"""Shared builders for test data."""
import json
from pathlib import Path

import numpy as np

from molcyclegan.chem import count_aromatic_rings, has_halogen_moiety, morgan_fingerprint, parse_smiles

FIXTURES = Path(__file__).parent / "fixtures"


def corpus_rows():
    """Rows of the labelled chemistry corpus as dicts with typed values."""
    lines = [l.rstrip("\n") for l in open(FIXTURES / "chem_corpus.tsv") if not l.startswith("#")]
    header = lines[0].split("\t")
    rows = []
    for line in lines[1:]:
        cells = dict(zip(header, line.split("\t")))
        rows.append({k: (v if k == "smiles" else int(v)) for k, v in cells.items()})
    return rows


def corpus_smiles():
    return [l.strip() for l in open(FIXTURES / "molecules.smi") if l.strip() and not l.startswith("#")]


def table_records(n=None, dim=56, seed=7):
    """Molecule records with embeddings from a seeded projection of their fingerprints.

    Molecules sharing fingerprint bits land near each other. The property
    ``score`` is a deterministic structural score standing in for a
    precomputed descriptor.
    """
    smiles = corpus_smiles()[:n]
    rng = np.random.default_rng(seed)
    proj = rng.standard_normal((2048, dim))
    records = []
    for i, smi in enumerate(smiles):
        g = parse_smiles(smi)
        bits = morgan_fingerprint(g).on_bits()
        emb = proj[bits].sum(axis=0) / np.sqrt(max(len(bits), 1))
        hetero = sum(a.element not in ("C", "H") for a in g.atoms)
        score = 0.8 * count_aromatic_rings(g) + 1.5 * has_halogen_moiety(g) - 0.3 * hetero + 0.05 * len(g.atoms)
        records.append({"id": f"mol{i:05d}", "smiles": smi, "embedding": [float(v) for v in emb],
                        "properties": {"score": float(score)}})
    return records


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path


# --- finite-difference gradient oracle ---------------------------------------

def random_network(rng, max_layers=3, max_dim=8):
    """Random small MlpModel with random biases and batch-norm affine params."""
    from molcyclegan import nn

    n_layers = int(rng.integers(1, max_layers + 1))
    dims = [int(rng.integers(1, max_dim + 1))]
    layers = []
    for _ in range(n_layers):
        kind = nn.RESIDUAL if rng.random() < 0.4 else nn.DENSE
        out = dims[-1] if kind == nn.RESIDUAL else int(rng.integers(1, max_dim + 1))
        layers.append(nn.LayerSpec(kind, dims[-1], out, bool(rng.random() < 0.5), bool(rng.random() < 0.7)))
        dims.append(out)
    model = nn.MlpModel(layers, rng)
    for i, bn in enumerate(model.bn):
        model.biases[i] = rng.normal(scale=0.5, size=model.biases[i].shape)
        if bn is not None:
            bn.gamma = rng.uniform(0.5, 1.5, size=bn.gamma.shape)
            bn.beta = rng.normal(scale=0.5, size=bn.beta.shape)
    return model


def _loss(model, x, direction):
    from molcyclegan import nn

    out, _ = nn.forward_cached(model, x, update_stats=False)
    return float((out * direction).sum())


def gradient_check(model, x, direction, h=1e-4, rtol=1e-4, atol=1e-6):
    """Compare analytic gradients with central differences for every parameter and input entry.

    Loss is ``sum(forward(x) * direction)``. Returns a list of
    ``(name, index, analytic, numeric)`` mismatches. An entry failing at
    ``h`` is re-tested at ``h / 100``: a leaky-ReLU kink inside the
    stencil breaks the central difference without the gradient being wrong.
    """
    from molcyclegan import nn

    model.train()
    out, cache = nn.forward_cached(model, x, update_stats=False)
    grads, dx = nn.backward(model, direction, cache)
    targets = dict(model.parameters())
    analytic = dict(grads)
    targets["input"] = x
    analytic["input"] = dx

    def numeric(arr, idx, step):
        old = arr[idx]
        arr[idx] = old + step
        up = _loss(model, x, direction)
        arr[idx] = old - step
        down = _loss(model, x, direction)
        arr[idx] = old
        return (up - down) / (2 * step)

    def ok(a, n):
        return abs(a - n) <= atol or abs(a - n) <= rtol * max(abs(a), abs(n))

    bad = []
    for name, arr in targets.items():
        for idx in np.ndindex(arr.shape):
            a = float(analytic[name][idx])
            n = numeric(arr, idx, h)
            if not ok(a, n):
                n = numeric(arr, idx, h / 100)
                if not ok(a, n):
                    bad.append((name, idx, a, n))
    return bad


def random_gradient_case(seed):
    rng = np.random.default_rng(seed)
    model = random_network(rng)
    m = int(rng.integers(2, 7))
    x = rng.normal(size=(m, model.in_dim))
    direction = rng.normal(size=(m, model.out_dim))
    return model, x, direction
