from dataclasses import dataclass
from functools import cached_property

from .elements import ATOMIC_NUMBER

AROMATIC_ORDER = 4  # bond code used in hashes and invariants; not a real bond order


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    charge: int = 0
    hydrogens: int = 0

    @property
    def atomic_number(self):
        return ATOMIC_NUMBER[self.element]


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: int = 1
    aromatic: bool = False

    @property
    def code(self):
        return AROMATIC_ORDER if self.aromatic else self.order

    def other(self, i):
        return self.b if i == self.a else self.a


class MolGraph:
    """Heavy-atom molecular graph; hydrogens are carried as per-atom counts.

    Atoms and bonds are stored as tuples and never mutated after
    construction, so derived data (adjacency, ring info) is cached.
    """

    def __init__(self, atoms, bonds):
        self.atoms = tuple(atoms)
        self.bonds = tuple(bonds)
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n):
                raise ValueError(f"bond endpoint out of range: {bond}")
            if bond.a == bond.b:
                raise ValueError(f"self bond on atom {bond.a}")
            key = (min(bond.a, bond.b), max(bond.a, bond.b))
            if key in seen:
                raise ValueError(f"duplicate bond {key}")
            seen.add(key)
            if bond.aromatic and not (self.atoms[bond.a].aromatic and self.atoms[bond.b].aromatic):
                raise ValueError(f"aromatic bond {key} between non-aromatic atoms")

    def __len__(self):
        return len(self.atoms)

    def __repr__(self):
        return f"MolGraph({len(self.atoms)} atoms, {len(self.bonds)} bonds)"

    @cached_property
    def neighbors(self):
        """``neighbors[i]`` is a list of ``(j, bond_index)``."""
        adj = [[] for _ in self.atoms]
        for k, bond in enumerate(self.bonds):
            adj[bond.a].append((bond.b, k))
            adj[bond.b].append((bond.a, k))
        return adj

    def degree(self, i):
        return len(self.neighbors[i])

    def bond_between(self, i, j):
        for other, k in self.neighbors[i]:
            if other == j:
                return self.bonds[k]
        return None

    def components(self):
        label = [-1] * len(self.atoms)
        count = 0
        for start in range(len(self.atoms)):
            if label[start] >= 0:
                continue
            stack = [start]
            label[start] = count
            while stack:
                u = stack.pop()
                for v, _ in self.neighbors[u]:
                    if label[v] < 0:
                        label[v] = count
                        stack.append(v)
            count += 1
        return count

    @cached_property
    def ring_bonds(self):
        """Indices of bonds lying on at least one cycle (i.e. non-bridges)."""
        from .rings import ring_bond_indices
        return ring_bond_indices(self)

    @cached_property
    def ring_atoms(self):
        out = set()
        for k in self.ring_bonds:
            out.add(self.bonds[k].a)
            out.add(self.bonds[k].b)
        return frozenset(out)

    @cached_property
    def sssr(self):
        """Smallest set of smallest rings, each ring a tuple of bond indices."""
        from .rings import smallest_set_of_smallest_rings
        return smallest_set_of_smallest_rings(self)

    def permuted(self, order):
        """Copy with atom ``order[i]`` moved to position ``i``."""
        where = {old: new for new, old in enumerate(order)}
        atoms = [self.atoms[old] for old in order]
        bonds = [Bond(where[b.a], where[b.b], b.order, b.aromatic) for b in self.bonds]
        return MolGraph(atoms, bonds)
