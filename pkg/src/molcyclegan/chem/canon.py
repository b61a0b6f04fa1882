"""Canonical atom ranking and SMILES writing.

Ranks come from iterated neighbourhood refinement of atom invariants; any
tie left when refinement stalls is broken by individualising one atom of
the lowest tied class and refining again. The writer walks the graph
depth-first from the lowest-ranked atom, always visiting neighbours in
rank order, so equal ranks give equal strings.
"""
from .elements import ORGANIC_VALENCES, implicit_hydrogens


def _dense_ranks(keys):
    """Map keys to ranks where rank = number of atoms with a strictly smaller key."""
    order = sorted(range(len(keys)), key=keys.__getitem__)
    ranks = [0] * len(keys)
    for pos, i in enumerate(order):
        if pos and keys[i] == keys[order[pos - 1]]:
            ranks[i] = ranks[order[pos - 1]]
        else:
            ranks[i] = pos
    return ranks


def _refine(graph, ranks):
    n_classes = len(set(ranks))
    while True:
        keys = [(ranks[i], tuple(sorted((ranks[j], graph.bonds[k].code) for j, k in graph.neighbors[i])))
                for i in range(len(ranks))]
        new = _dense_ranks(keys)
        n_new = len(set(new))
        ranks = new
        if n_new == n_classes:
            return ranks
        n_classes = n_new


def atom_invariant(graph, i):
    atom = graph.atoms[i]
    return (atom.atomic_number, graph.degree(i), atom.hydrogens, atom.charge,
            int(atom.aromatic), int(i in graph.ring_atoms))


def canonical_ranks(graph):
    """A permutation of ``range(n)`` that depends only on graph structure."""
    ranks = _refine(graph, _dense_ranks([atom_invariant(graph, i) for i in range(len(graph.atoms))]))
    n = len(ranks)
    while len(set(ranks)) < n:
        counts = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        tied = min(r for r, c in counts.items() if c > 1)
        pick = min(i for i in range(n) if ranks[i] == tied)
        ranks = [r + 1 if (r == tied and i != pick) else r for i, r in enumerate(ranks)]
        ranks = _refine(graph, ranks)
    return ranks


# --- writer ---------------------------------------------------------------

def _atom_token(graph, i):
    atom = graph.atoms[i]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    if atom.charge == 0 and atom.element in ORGANIC_VALENCES:
        bond_sum = sum(1 if graph.bonds[k].aromatic else graph.bonds[k].order for _, k in graph.neighbors[i])
        if implicit_hydrogens(atom.element, atom.aromatic, bond_sum) == atom.hydrogens:
            return symbol
    text = "[" + symbol
    if atom.hydrogens:
        text += "H" if atom.hydrogens == 1 else f"H{atom.hydrogens}"
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        text += sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}"
    return text + "]"


def _bond_token(graph, bond):
    if bond.aromatic:
        return ""
    if bond.order == 2:
        return "="
    if bond.order == 3:
        return "#"
    a, b = graph.atoms[bond.a], graph.atoms[bond.b]
    return "-" if a.aromatic and b.aromatic else ""


def _ring_label(n):
    return str(n) if n < 10 else f"%{n:02d}"


def write_smiles(graph, ranks):
    """SMILES for ``graph`` with traversal order fixed by ``ranks`` (lower first)."""
    n = len(graph.atoms)
    if n == 0:
        return ""
    nbrs = [sorted(graph.neighbors[i], key=lambda jk: ranks[jk[0]]) for i in range(n)]
    start = min(range(n), key=ranks.__getitem__)

    # pass 1: spanning tree, ring closures
    visited = [False] * n
    children = [[] for _ in range(n)]
    opens = [[] for _ in range(n)]    # (partner, bond index) closures opening here
    closes = [[] for _ in range(n)]   # bond indices closing here
    used = set()
    stack = [(start, None, 0)]
    visited[start] = True
    order = [start]
    while stack:
        u, via, pos = stack.pop()
        while pos < len(nbrs[u]):
            v, k = nbrs[u][pos]
            pos += 1
            if k == via or k in used:
                continue
            used.add(k)
            if visited[v]:
                opens[v].append((u, k))
                closes[u].append(k)
                continue
            visited[v] = True
            order.append(v)
            children[u].append((v, k))
            stack.append((u, via, pos))
            stack.append((v, k, 0))
            break

    # pass 2: emit
    labels = {}
    free = list(range(1, 100))
    out = []

    def emit(u):
        out.append(_atom_token(graph, u))
        for k in sorted(closes[u], key=lambda k: labels[k]):
            label = labels.pop(k)
            out.append(_ring_label(label))
            free.append(label)
            free.sort()
        for partner, k in sorted(opens[u], key=lambda pk: ranks[pk[0]]):
            label = free.pop(0)
            labels[k] = label
            out.append(_bond_token(graph, graph.bonds[k]) + _ring_label(label))
        kids = children[u]
        for idx, (v, k) in enumerate(kids):
            last = idx == len(kids) - 1
            if not last:
                out.append("(")
            out.append(_bond_token(graph, graph.bonds[k]))
            emit(v)
            if not last:
                out.append(")")

    emit(start)
    return "".join(out)


def canonical_smiles(graph):
    return write_smiles(graph, canonical_ranks(graph))


def random_smiles(graph, rng):
    """A valid, randomly ordered SMILES for the same molecule (test helper)."""
    perm = list(rng.permutation(len(graph.atoms)))
    return write_smiles(graph, perm)
