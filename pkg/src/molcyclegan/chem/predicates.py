"""The two structural properties used to split molecules into X and Y."""

_HALOGENS = frozenset({"F", "Cl", "I"})


def has_halogen_moiety(graph):
    """True iff the molecule matches any of '[!#1]Cl', '[!#1]F', '[!#1]I', 'C#N'.

    Hand-coded for exactly those four patterns; bromine is deliberately not
    among them.
    """
    for i, atom in enumerate(graph.atoms):
        if atom.element in _HALOGENS and any(graph.atoms[j].element != "H" for j, _ in graph.neighbors[i]):
            return True
    for bond in graph.bonds:
        if bond.order != 3 or bond.aromatic:
            continue
        a, b = graph.atoms[bond.a], graph.atoms[bond.b]
        if {a.element, b.element} == {"C", "N"} and not a.aromatic and not b.aromatic:
            return True
    return False


def count_aromatic_rings(graph):
    """Number of SSSR rings whose bonds are all aromatic."""
    return sum(1 for ring in graph.sssr if all(graph.bonds[k].aromatic for k in ring))
