"""Small self-contained cheminformatics toolkit (SMILES, rings, fingerprints)."""
from .canon import canonical_ranks, canonical_smiles, random_smiles, write_smiles
from .fingerprint import Fingerprint, morgan_fingerprint, tanimoto, tanimoto_bulk
from .graph import Atom, Bond, MolGraph
from .predicates import count_aromatic_rings, has_halogen_moiety
from .smiles import SmilesError, parse_smiles

__all__ = [
    "Atom", "Bond", "MolGraph", "Fingerprint", "SmilesError",
    "parse_smiles", "canonical_smiles", "canonical_ranks", "random_smiles", "write_smiles",
    "morgan_fingerprint", "tanimoto", "tanimoto_bulk",
    "has_halogen_moiety", "count_aromatic_rings",
]
