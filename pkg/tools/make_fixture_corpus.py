"""Regenerate the chemistry fixture corpus (needs RDKit; not a package dependency).

Molecules are assembled at random from drug-like scaffolds and substituents
with RDKit, written as RDKit canonical aromatic SMILES, and labelled with
RDKit's own SMARTS matcher and aromatic ring counter. The labels are the
oracle for the toolkit tests; this script is run once and its output is
committed under tests/fixtures/.

    python tools/make_fixture_corpus.py
"""
import random
from pathlib import Path

import rdkit
from rdkit import Chem, RDLogger
from rdkit.Chem import rdMolDescriptors

RDLogger.DisableLog("rdApp.*")

SCAFFOLDS = [
    "c1ccccc1", "c1ccncc1", "c1ccc2ccccc2c1", "c1ccc2[nH]ccc2c1", "c1ccsc1", "c1ccoc1",
    "c1cncnc1", "c1cn[nH]c1", "c1c[nH]cn1", "c1ccc2ncccc2c1", "c1ccc2c(c1)oc1ccccc12",
    "c1cnc2ccccc2n1", "c1ccc2c(c1)sc1ccccc12", "c1ccc2cc3ccccc3cc2c1", "c1nc2ccccc2s1",
    "C1CCCCC1", "C1CCNCC1", "C1COCCN1", "C1CCNC1", "C1CCC2CCCCC2C1", "O=C1CCCN1", "C1CC1",
    "c1ccc2c(c1)CCN2", "O=c1cc[nH]cc1", "O=c1ccc2ccccc2o1", "c1ccc(cc1)-c1ccccc1",
    "C1=CCCCC1", "c1ccc2c(c1)ccc1ccccc12",
]
SUBSTITUENTS = [
    "F", "Cl", "Br", "I", "C#N", "C", "CC", "OC", "N", "O", "C(=O)O", "C(=O)N", "S(=O)(=O)N",
    "C(F)(F)F", "N(C)C", "C(=O)OC", "[N+](=O)[O-]", "CO", "C(C)C", "OC(F)(F)F", "SC", "C=O",
    "NC(=O)C", "C(=O)[O-]", "[NH3+]", "CCN", "C#C", "CCl", "OCC", "c1ccccc1", "c1ccncc1",
    "C1CCNCC1", "N1CCOCC1", "Cc1ccccc1", "CC(=O)N", "NS(C)(=O)=O",
]
LINKERS = ["", "C", "CC", "O", "N", "C(=O)N", "NC(=O)", "S", "C(=O)", "OC", "CN"]


def attach(mol, frag_smiles, rng):
    """Bond a fragment's first atom to a random H-bearing atom of ``mol``."""
    frag = Chem.MolFromSmiles(frag_smiles)
    if frag is None:
        return None
    sites = [a.GetIdx() for a in mol.GetAtoms() if a.GetTotalNumHs() > 0 and a.GetFormalCharge() == 0]
    fsites = [a.GetIdx() for a in frag.GetAtoms() if a.GetTotalNumHs() > 0 or a.GetIdx() == 0]
    if not sites or not fsites:
        return None
    i = rng.choice(sites)
    j = 0 if frag.GetAtomWithIdx(0).GetTotalNumHs() > 0 else rng.choice(fsites)
    combo = Chem.RWMol(Chem.CombineMols(mol, frag))
    combo.AddBond(i, mol.GetNumAtoms() + j, Chem.BondType.SINGLE)
    for idx in (i, mol.GetNumAtoms() + j):
        atom = combo.GetAtomWithIdx(idx)
        if atom.GetNumExplicitHs():
            atom.SetNumExplicitHs(atom.GetNumExplicitHs() - 1)
    try:
        out = combo.GetMol()
        Chem.SanitizeMol(out)
    except Exception:
        return None
    return out


def random_molecule(rng):
    mol = Chem.MolFromSmiles(rng.choice(SCAFFOLDS))
    if rng.random() < 0.5:
        link = rng.choice(LINKERS)
        second = rng.choice(SCAFFOLDS)
        frag = link + second if link else second
        # a ring-first fragment string starts with a ring atom; fine as an attachment point
        cand = attach(mol, frag, rng)
        mol = cand or mol
    for _ in range(rng.randint(0, 4)):
        cand = attach(mol, rng.choice(SUBSTITUENTS), rng)
        if cand is not None:
            mol = cand
    return mol


HALOGEN_PATTERNS = [Chem.MolFromSmarts(s) for s in ("[!#1]Cl", "[!#1]F", "[!#1]I", "C#N")]


def labels(mol):
    halogen = any(mol.HasSubstructMatch(p) for p in HALOGEN_PATTERNS)
    return int(halogen), rdMolDescriptors.CalcNumAromaticRings(mol)


def main(n_total=1200, n_labelled=500, seed=20190101):
    rng = random.Random(seed)
    seen = set()
    rows = []
    while len(rows) < n_total:
        mol = random_molecule(rng)
        if mol is None or mol.GetNumHeavyAtoms() > 50:
            continue
        smi = Chem.MolToSmiles(mol)
        if smi in seen or "." in smi or "@" in smi:
            continue
        seen.add(smi)
        total_h = sum(a.GetTotalNumHs() for a in mol.GetAtoms())
        rows.append((smi, *labels(mol), mol.GetNumHeavyAtoms(), mol.GetNumBonds(),
                     rdMolDescriptors.CalcNumRings(mol), total_h))
    out = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    header = f"# generated by tools/make_fixture_corpus.py with RDKit {rdkit.__version__}, seed {seed}\n"
    with open(out / "chem_corpus.tsv", "w") as fh:
        fh.write(header)
        fh.write("smiles\thas_halogen_moiety\taromatic_rings\theavy_atoms\tbonds\trings\thydrogens\n")
        for row in rows[:n_labelled]:
            fh.write("\t".join(map(str, row)) + "\n")
    with open(out / "molecules.smi", "w") as fh:
        fh.write(header)
        for row in rows:
            fh.write(row[0] + "\n")
    ring_hist = {}
    for row in rows[:n_labelled]:
        ring_hist[row[2]] = ring_hist.get(row[2], 0) + 1
    print(f"wrote {n_labelled} labelled / {n_total} total; halogen rate "
          f"{sum(r[1] for r in rows[:n_labelled]) / n_labelled:.2f}; aromatic ring histogram {sorted(ring_hist.items())}")


if __name__ == "__main__":
    main()
