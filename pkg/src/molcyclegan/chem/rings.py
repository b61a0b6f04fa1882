"""Ring perception: bridge detection and the smallest set of smallest rings.

The SSSR is computed as a minimum cycle basis: Horton candidate cycles
(shortest path r->u, edge u-v, shortest path v->r) sorted by size, then
kept greedily when linearly independent over GF(2). The number of rings is
the cyclomatic number ``bonds - atoms + components``.
"""
from collections import deque


def ring_bond_indices(graph):
    """Bonds that are not bridges, found with an iterative Tarjan low-link pass."""
    n = len(graph.atoms)
    disc = [-1] * n
    low = [0] * n
    bridges = set()
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(graph.neighbors[root]))]
        while stack:
            u, via, it = stack[-1]
            advanced = False
            for v, k in it:
                if k == via:
                    continue
                if disc[v] < 0:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, k, iter(graph.neighbors[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if advanced:
                continue
            stack.pop()
            if stack:
                parent = stack[-1][0]
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    bridges.add(via)
    return frozenset(k for k in range(len(graph.bonds)) if k not in bridges)


def _bfs_tree(adj, root):
    parent = {root: (None, None)}
    dist = {root: 0}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, k in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                parent[v] = (u, k)
                queue.append(v)
    return parent, dist


def _path_to_root(parent, v):
    atoms, bonds = [v], []
    while parent[v][0] is not None:
        u, k = parent[v]
        bonds.append(k)
        atoms.append(u)
        v = u
    return atoms, bonds


def smallest_set_of_smallest_rings(graph):
    """Tuple of rings, each a sorted tuple of bond indices.

    Ties between equal-size candidates are broken by the sorted atom-index
    sequence, so the result is deterministic for a given atom numbering.
    """
    ring_bonds = graph.ring_bonds
    if not ring_bonds:
        return ()
    adj = {}
    for k in ring_bonds:
        b = graph.bonds[k]
        adj.setdefault(b.a, []).append((b.b, k))
        adj.setdefault(b.b, []).append((b.a, k))
    n_atoms = len(adj)
    # components of the ring subgraph
    seen, comps = set(), 0
    for start in adj:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
    needed = len(ring_bonds) - n_atoms + comps

    candidates = {}
    for root in sorted(adj):
        parent, dist = _bfs_tree(adj, root)
        for k in ring_bonds:
            b = graph.bonds[k]
            u, v = b.a, b.b
            if u not in parent:
                continue
            if parent[u][1] == k or parent[v][1] == k:
                continue
            pu_atoms, pu_bonds = _path_to_root(parent, u)
            pv_atoms, pv_bonds = _path_to_root(parent, v)
            if set(pu_atoms) & set(pv_atoms) != {root}:
                continue
            bonds = frozenset(pu_bonds + pv_bonds + [k])
            if bonds not in candidates:
                atoms = tuple(sorted(set(pu_atoms) | set(pv_atoms)))
                candidates[bonds] = atoms
    ordered = sorted(candidates.items(), key=lambda kv: (len(kv[0]), kv[1]))

    basis = {}  # pivot bit -> reduced vector
    rings = []
    for bonds, _ in ordered:
        vec = 0
        for k in bonds:
            vec |= 1 << k
        while vec:
            pivot = vec.bit_length() - 1
            if pivot not in basis:
                basis[pivot] = vec
                rings.append(tuple(sorted(bonds)))
                break
            vec ^= basis[pivot]
        if len(rings) == needed:
            break
    return tuple(rings)
