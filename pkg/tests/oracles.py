"""Independent reference implementations shared by the unit and acceptance tests."""

import itertools

import numpy as np

from lowreg.spectral import phi1
from lowreg.trees import Equation, Kind, Tree, generate_trees, random_tree

NLS, KDV = Equation.NLS, Equation.KDV


def sample_trees(max_nodes=9):
    """Generated trees, their T2 subtrees and random grammar trees up to ``max_nodes``."""
    out = set()
    for eq in (NLS, KDV):
        for r in (0, 1):
            for t in generate_trees(eq, r):
                out.update(s for s in t.subtrees() if not s.is_leaf)
                out.add(t)
    rng = np.random.default_rng(2024)
    for eq in (NLS, KDV):
        for _ in range(200):
            t = random_tree(eq, rng, max_osc=3)
            out.update(s for s in t.subtrees() if s.node_count() <= max_nodes)
    return sorted((t for t in out if t.node_count() <= max_nodes), key=lambda t: t._key)


def _cut(t: Tree, cuts: frozenset, path=()) -> tuple[Tree, list[Tree]]:
    """Remove the subtrees hanging from edges in ``cuts``; return the kept part and the pieces."""
    kept, pieces = [], []
    for i, c in enumerate(t.children):
        sub, more = _cut(c, cuts, path + (i,))
        pieces += more
        if path + (i,) in cuts:
            pieces.append(sub)
        else:
            kept.append(sub)
    return (t.with_children(kept) if t.children else t), pieces


def brute_force_splittings(t: Tree) -> set:
    """Enumerate every subset of integration edges as a cut set."""
    t2_edges = [p for p, s in _paths(t) if s.edge.kind is Kind.T2]
    out = set()
    for r in range(len(t2_edges) + 1):
        for subset in itertools.combinations(t2_edges, r):
            cuts = frozenset(subset)
            root, pieces = _cut(t, cuts)
            if () in cuts:
                pieces.append(root)
                root = None
            out.add((root, tuple(sorted(pieces, key=lambda s: s._key))))
    return out


def _paths(t: Tree, path=()):
    yield path, t
    for i, c in enumerate(t.children):
        yield from _paths(c, path + (i,))



# Fourier-side oracle: literal sums over all triples k = -k1 + k2 + k3 (mod M)

def _triples(g):
    k = g.k.astype(float)
    idx = np.arange(g.M)
    i1, i2, i3 = np.meshgrid(idx, idx, idx, indexing="ij")
    out = (-g.k[i1] + g.k[i2] + g.k[i3]) % g.M
    return k, i1, i2, i3, out


def _scatter(g, out, vals):
    res = np.zeros(g.M, complex)
    np.add.at(res, out.ravel(), vals.ravel())
    return res


def mid1_fourier_rhs(c, v, tau, g):
    """Right-hand side of the first-order midpoint scheme written as frequency sums."""
    k, i1, i2, i3, out = _triples(g)
    e = np.exp(1j * tau * k**2)  # e^{i tau k^2}
    ko = k[out]
    # first sum: e^{-i tau k^2} tau phi1(2 i tau k1^2) (e^{-i tau k1^2} conj v1 + conj c1)(e^{i tau k2^2} v2 + c2)(...)
    A = np.conj(e * v + c)
    B = e * v + c
    t1 = np.exp(-1j * tau * ko**2) * phi1(2j * tau * k[i1] ** 2) * A[i1] * B[i2] * B[i3]
    # second sum: tau phi1(-2 i tau k1^2) (conj v1 + e^{i tau k1^2} conj c1)(v2 + e^{-i tau k2^2} c2)(...)
    C = np.conj(v) + e * np.conj(c)
    D = v + np.conj(e) * c
    t2 = phi1(-2j * tau * k[i1] ** 2) * C[i1] * D[i2] * D[i3]
    return np.exp(-1j * tau * k**2) * c - 1j * tau / 16 * (_scatter(g, out, t1) + _scatter(g, out, t2))


def os18_fourier(c, tau, g):
    k, i1, i2, i3, out = _triples(g)
    terms = phi1(2j * tau * k[i1] ** 2) * np.conj(c[i1]) * c[i2] * c[i3]
    return np.exp(-1j * tau * k**2) * (c - 1j * tau * _scatter(g, out, terms))


