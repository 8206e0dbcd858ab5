"""Decorated planted trees and their frequency algebra.

A tree is stored from its root edge downwards: the decoration of the edge
leaving the root, the frequency carried by the node at the top of that edge,
and the planted subtrees hanging from that node.  Children are kept sorted
so that trees compare as non-planar objects.

Edge kinds: ``T1`` is a free propagator, ``T2`` is a time integration.
The conjugate bit flips the sign of the associated phase polynomial.
"""

from __future__ import annotations

import enum
import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .freqpoly import FreqPoly, LinearFreq, p_dom


class Kind(enum.IntEnum):
    T1 = 1
    T2 = 2


class Equation(enum.Enum):
    NLS = "nls"
    KDV = "kdv"

    @property
    def degree(self) -> int:
        return 2 if self is Equation.NLS else 3


@dataclass(frozen=True)
class EdgeDeco:
    kind: Kind
    conj: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.conj not in (0, 1):
            raise ValueError("conjugate bit must be 0 or 1")

    @property
    def sign(self) -> int:
        return -1 if self.conj else 1

    def token(self) -> str:
        return f"t{int(self.kind)}{'-' if self.conj else '+'}"

    def sort_key(self):
        # conjugated edges sort first so the usual k1-bar, k2, k3 order is canonical
        return (int(self.kind), 1 - self.conj)


T1 = EdgeDeco(Kind.T1, 0)
T1C = EdgeDeco(Kind.T1, 1)
T2 = EdgeDeco(Kind.T2, 0)
T2C = EdgeDeco(Kind.T2, 1)


class Tree:
    """Planted decorated tree (immutable)."""

    __slots__ = ("edge", "freq", "children", "_key", "_shape")

    def __init__(self, edge: EdgeDeco, freq: LinearFreq, children: Iterable["Tree"] = ()):
        children = tuple(sorted(children, key=lambda c: c._key))
        for c in children:
            if c.freq.nvars != freq.nvars:
                raise ValueError("children live on a different variable set")
        object.__setattr__(self, "edge", edge)
        object.__setattr__(self, "freq", freq)
        object.__setattr__(self, "children", children)
        shape = (edge.sort_key(), tuple(c._shape for c in children))
        fkey = tuple(-c for c in freq.coeffs)
        key = (edge.sort_key(), 1 if children else 0, tuple(c._key for c in children), fkey)
        object.__setattr__(self, "_shape", shape)
        object.__setattr__(self, "_key", key)

    def __setattr__(self, name, value):
        raise AttributeError("Tree is immutable")

    def __eq__(self, other):
        return isinstance(other, Tree) and self._key == other._key

    def __lt__(self, other: "Tree") -> bool:
        return self._key < other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"Tree({to_sexpr(self)!r})"

    @property
    def nvars(self) -> int:
        return self.freq.nvars

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def with_children(self, children: Iterable["Tree"]) -> "Tree":
        return Tree(self.edge, self.freq, children)

    def node_count(self) -> int:
        """Number of non-root nodes, i.e. number of edges."""
        return 1 + sum(c.node_count() for c in self.children)

    def kirchhoff_freq(self) -> LinearFreq:
        """Node frequency implied by the children."""
        acc = LinearFreq.zero(self.nvars)
        for c in self.children:
            acc = acc + c.freq.scaled(c.edge.sign)
        return acc.scaled(self.edge.sign)

    def subtrees(self) -> Iterable["Tree"]:
        yield self
        for c in self.children:
            yield from c.subtrees()

    def leaves(self) -> list["Tree"]:
        return [s for s in self.subtrees() if s.is_leaf]

    def t2_subtrees(self) -> list["Tree"]:
        """The planted trees T^e for every integration edge e."""
        return [s for s in self.subtrees() if s.edge.kind is Kind.T2]


Forest = tuple  # canonical forests are sorted tuples of Tree


def forest(trees: Iterable[Tree]) -> tuple[Tree, ...]:
    return tuple(sorted(trees, key=lambda t: t._key))


def leaf(edge: EdgeDeco, freq: LinearFreq) -> Tree:
    return Tree(edge, freq, ())


def planted(edge: EdgeDeco, children: Sequence[Tree]) -> Tree:
    """Plant ``children`` on a new edge; the node frequency follows Kirchhoff's law."""
    if not children:
        raise ValueError("an inner node needs children; use leaf() for leaves")
    n = children[0].nvars
    acc = LinearFreq.zero(n)
    for c in children:
        acc = acc + c.freq.scaled(c.edge.sign)
    return Tree(edge, acc.scaled(edge.sign), children)


def check_kirchhoff(t: Tree) -> bool:
    return all(s.is_leaf or s.kirchhoff_freq() == s.freq for s in t.subtrees())


# phase polynomials

def phase_poly(edge: EdgeDeco, lin: LinearFreq, eq: Equation) -> FreqPoly:
    """P_{(t,p)}(lin): -lin^m on T1 edges, +lin^m on T2 edges, negated when p=1."""
    sign = (-1 if edge.kind is Kind.T1 else 1) * edge.sign
    return (FreqPoly.linear(lin) ** eq.degree) * sign


def _as_forest(f) -> tuple[Tree, ...]:
    if isinstance(f, Tree):
        return (f,)
    return tuple(f)


def f_dom(f, eq: Equation = Equation.NLS, nvars: int | None = None) -> FreqPoly:
    """Dominant frequency of a tree or forest."""
    trees = _as_forest(f)
    if not trees:
        return FreqPoly.zero(nvars or 0)
    out = FreqPoly.zero(trees[0].nvars)
    for t in trees:
        out = out + _f_dom_tree(t, eq)
    return out


def _f_dom_tree(t: Tree, eq: Equation) -> FreqPoly:
    if t.children and t.kirchhoff_freq() != t.freq:
        raise ValueError(f"Kirchhoff's law fails at {to_sexpr(t)}")
    total = phase_poly(t.edge, t.freq, eq) + f_dom(t.children, eq, t.nvars)
    return p_dom(total) if t.edge.kind is Kind.T2 else total


def f_low(t: Tree, eq: Equation = Equation.NLS) -> FreqPoly:
    if t.edge.kind is not Kind.T2:
        raise ValueError("f_low is defined on trees with an integration root edge")
    total = phase_poly(t.edge, t.freq, eq) + f_dom(t.children, eq, t.nvars)
    return total - p_dom(total)


def leaf_phase_sum(t: Tree, eq: Equation = Equation.NLS) -> FreqPoly:
    out = FreqPoly.zero(t.nvars)
    for lf in t.leaves():
        out = out + phase_poly(lf.edge, lf.freq, eq)
    return out


def lemma_check(t: Tree, eq: Equation = Equation.NLS) -> bool:
    """Dominant part plus all lower parts equals the sum of leaf phases.

    For a tree whose root edge is an integration edge the root phase itself is
    not cancelled by a propagator and is added to the right-hand side.
    """
    lhs = f_dom(t, eq)
    for s in t.t2_subtrees():
        lhs = lhs + f_low(s, eq)
    rhs = leaf_phase_sum(t, eq)
    if t.edge.kind is Kind.T2:
        rhs = rhs + phase_poly(t.edge, t.freq, eq)
    return lhs == rhs


# symmetry factor

def symmetry_factor(t) -> int:
    """S(T): product over groups of identical branches of S(branch)^beta * beta!."""
    trees = _as_forest(t)
    if len(trees) == 1 and isinstance(t, Tree):
        return _forest_factor(t.children)
    return _forest_factor(trees)


def _forest_factor(trees: Sequence[Tree]) -> int:
    out = 1
    groups = Counter(c._shape for c in trees)
    seen = {}
    for c in trees:
        seen.setdefault(c._shape, c)
    for shape, beta in groups.items():
        out *= _forest_factor(seen[shape].children) ** beta * math.factorial(beta)
    return out


# tree generation

def _build(skel, counter: list[int], nvars: int) -> Tree:
    kind, p, kids = skel
    if kind == "leaf":
        i = counter[0]
        counter[0] += 1
        return leaf(EdgeDeco(Kind.T1, p), LinearFreq.var(i, nvars))
    # inner branches first, then leaves of opposite conjugation, then the rest
    order = sorted(kids, key=lambda s: (s[0] == "leaf", s[1] == p))
    built = [_build(s, counter, nvars) for s in order]
    inner = planted(EdgeDeco(Kind.T2, p), built)
    return planted(EdgeDeco(Kind.T1, p), [inner])


def _count_leaves(skel) -> int:
    return 1 if skel[0] == "leaf" else sum(_count_leaves(s) for s in skel[2])


def from_skeleton(skel) -> Tree:
    """Build a tree from nested ``("leaf", p, ())`` / ``("node", p, [...])`` tuples."""
    n = _count_leaves(skel)
    return _build(skel, [0], n)


def _leaf_s(p=0):
    return ("leaf", p, ())


def _nls_node(p, sub=None):
    """T1 edge carrying one integration vertex with the cubic pattern."""
    kids = [_leaf_s(1 - p), _leaf_s(p), _leaf_s(p)]
    if sub is not None:
        # replace one leaf with matching conjugation by the subtree
        kids[2 if sub[1] == p else 0] = sub
    return ("node", p, kids)


def _kdv_node(sub=None):
    kids = [_leaf_s(0), _leaf_s(0)]
    if sub is not None:
        kids[1] = sub
    return ("node", 0, kids)


def generate_trees(eq: Equation, r: int) -> list[Tree]:
    """Tree sets needed for the midpoint schemes of order r+1, r in {0, 1}."""
    if r not in (0, 1):
        raise ValueError("only r in {0, 1} is supported")
    if eq is Equation.NLS:
        skels = [_leaf_s(0), _nls_node(0)]
        if r == 1:
            skels += [_nls_node(0, _nls_node(0)), _nls_node(0, _nls_node(1))]
    else:
        skels = [_leaf_s(0), _kdv_node()]
        if r == 1:
            skels += [_kdv_node(_kdv_node())]
    return [from_skeleton(s) for s in skels]


def random_skeleton(eq: Equation, rng: np.random.Generator, max_osc: int = 3, p: int = 0):
    """Randomly grown grammar skeleton with at most ``max_osc`` integration edges."""
    budget = [int(rng.integers(0, max_osc + 1))]

    def grow(p):
        if budget[0] == 0 or rng.random() < 0.3:
            return _leaf_s(p)
        budget[0] -= 1
        if eq is Equation.NLS:
            pats = [1 - p, p, p]
        else:
            pats = [0, 0]
        return ("node", p, [grow(q) for q in pats])

    if budget[0] == 0:
        return _leaf_s(p)
    budget[0] -= 1
    pats = [1 - p, p, p] if eq is Equation.NLS else [0, 0]
    return ("node", p, [grow(q) for q in pats])


def random_tree(eq: Equation, rng: np.random.Generator, max_osc: int = 3) -> Tree:
    return from_skeleton(random_skeleton(eq, rng, max_osc))


# BCK coproduct and splittings

Term = tuple  # (left tree or None, right forest)


def _delta_tree(t: Tree) -> list[tuple[Tree | None, tuple[Tree, ...]]]:
    out = [(t.with_children(lefts), rights) for lefts, rights in _delta_forest(t.children)]
    if t.edge.kind is Kind.T2:
        out.append((None, (t,)))
    return out


def _delta_forest(trees: Sequence[Tree]) -> list[tuple[tuple[Tree, ...], tuple[Tree, ...]]]:
    acc: list[tuple[tuple[Tree, ...], tuple[Tree, ...]]] = [((), ())]
    for c in trees:
        nxt = []
        for lefts, rights in acc:
            for l, r in _delta_tree(c):
                nxt.append((lefts if l is None else lefts + (l,), rights + r))
        acc = nxt
    return [(forest(l), forest(r)) for l, r in acc]


def bck_coproduct(t: Tree) -> list[tuple[Tree | None, tuple[Tree, ...]]]:
    """All terms left (x) right of the coproduct; ``None`` stands for the empty forest."""
    return _delta_tree(t)


@dataclass(frozen=True)
class Splitting:
    root: Tree | None
    satellites: tuple[Tree, ...]

    def __post_init__(self):
        object.__setattr__(self, "satellites", forest(self.satellites))
        if any(s.edge.kind is not Kind.T2 for s in self.satellites):
            raise ValueError("satellites must be planted on integration edges")

    def sort_key(self):
        return ((0,) if self.root is None else (1, self.root._key),
                tuple(s._key for s in self.satellites))

    def components(self) -> tuple[Tree | None, ...]:
        return (self.root,) + self.satellites

    def reassemble(self) -> Tree:
        return reassemble(self.root, self.satellites)


def _psi_tilde(trees: tuple[Tree, ...], memo: dict) -> Counter:
    if not trees:
        return Counter({(): 1})
    if trees in memo:
        return memo[trees]
    out: Counter = Counter()
    for lefts, rights in _delta_forest(trees):
        if not rights:
            continue
        for f, m in _psi_tilde(lefts, memo).items():
            out[forest(f + rights)] += m
    memo[trees] = out
    return out


def psi(t: Tree) -> Counter:
    """Splitting map with multiplicities: Counter of Splitting."""
    memo: dict = {}
    out: Counter = Counter()
    for left, rights in _delta_tree(t):
        for f, m in _psi_tilde(rights, memo).items():
            out[Splitting(left, f)] += m
    return out


def splittings(t: Tree) -> list[Splitting]:
    """Distinct splittings T0 . T1 ... Tm of ``t``, sorted canonically."""
    return sorted(psi(t), key=Splitting.sort_key)


def _deficit(node: Tree) -> LinearFreq:
    return node.freq.scaled(node.edge.sign) - node.kirchhoff_freq().scaled(node.edge.sign)


def _graft_once(t: Tree, pool: list[Tree]) -> Tree | None:
    """Graft a subset of ``pool`` at the first node with a Kirchhoff deficit."""
    need = _deficit(t)
    if t.is_leaf and t.freq.coeffs.count(0) == t.nvars - 1:
        need = None  # genuine leaf
    elif not t.is_leaf and need == LinearFreq.zero(t.nvars):
        need = None
    if need is not None:
        for size in range(1, len(pool) + 1):
            for idx in itertools.combinations(range(len(pool)), size):
                acc = LinearFreq.zero(t.nvars)
                ok = True
                try:
                    for i in idx:
                        acc = acc + pool[i].freq.scaled(pool[i].edge.sign)
                except ValueError:
                    ok = False
                if ok and acc == need:
                    chosen = [pool[i] for i in idx]
                    for i in sorted(idx, reverse=True):
                        pool.pop(i)
                    return t.with_children(t.children + tuple(chosen))
    for i, c in enumerate(t.children):
        g = _graft_once(c, pool)
        if g is not None:
            kids = list(t.children)
            kids[i] = g
            return t.with_children(kids)
    return None


def reassemble(root: Tree | None, satellites: Sequence[Tree]) -> Tree:
    """Graft satellites back at the marked nodes they were cut from."""
    if root is None:
        for i, cand in enumerate(satellites):
            rest = list(satellites[:i]) + list(satellites[i + 1:])
            try:
                return reassemble(cand, rest)
            except ValueError:
                continue
        raise ValueError("no satellite can serve as the root part")
    pool = list(satellites)
    cur = root
    while pool:
        g = _graft_once(cur, pool)
        if g is None:
            raise ValueError("satellites do not fit the marked leaves")
        cur = g
    return cur


# coefficient symmetry condition

CoefficientFamily = Callable[[tuple[int, ...], tuple[int, ...], Splitting, float, np.ndarray], complex]


def symmetry_condition_violation(b: CoefficientFamily, t: Tree,
                                 samples: Sequence[tuple[float, Sequence[complex]]],
                                 eq: Equation = Equation.NLS) -> float:
    """Worst relative violation of  -prod(e^z) b_{a,chi}(-tau,-z) = b_{1-a,1-chi}(tau,z)."""
    n_a = len(t.t2_subtrees())
    n_chi = len(t.leaves())
    worst = 0.0
    for sp in splittings(t):
        m = len(sp.satellites) + 1
        for a in itertools.product((0, 1), repeat=n_a):
            a_bar = tuple(1 - x for x in a)
            for chi in itertools.product((0, 1), repeat=n_chi):
                chi_bar = tuple(1 - x for x in chi)
                for tau, zs in samples:
                    z = np.asarray(zs, dtype=complex)[:m]
                    if z.size < m:
                        raise ValueError(f"sample needs {m} z-values")
                    lhs = -np.exp(z.sum()) * b(a, chi, sp, -tau, -z)
                    rhs = b(a_bar, chi_bar, sp, tau, z)
                    scale = max(abs(lhs), abs(rhs))
                    if scale > 0:
                        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def symmetry_condition_check(b: CoefficientFamily, t: Tree,
                             samples: Sequence[tuple[float, Sequence[complex]]],
                             eq: Equation = Equation.NLS, rtol: float = 1e-12) -> bool:
    return symmetry_condition_violation(b, t, samples, eq) <= rtol


# text format

def to_sexpr(t: Tree) -> str:
    if t.is_leaf:
        return f"({t.edge.token()} {t.freq})"
    f = "k" if t.kirchhoff_freq() == t.freq else str(t.freq)
    return f"({t.edge.token()} {f} " + " ".join(to_sexpr(c) for c in t.children) + ")"


_TOK = re.compile(r"\(|\)|[^\s()]+")
_EDGE = re.compile(r"t([12])([+-])")


def from_sexpr(text: str, nvars: int | None = None) -> Tree:
    tokens = _TOK.findall(text)
    if nvars is None:
        idx = [int(m) for m in re.findall(r"k(\d+)", text)]
        nvars = max(idx, default=0)
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of tree text")
        tok = tokens[pos]
        pos += 1
        return tok

    def node() -> Tree:
        if take() != "(":
            raise ValueError("expected '('")
        em = _EDGE.fullmatch(take())
        if not em:
            raise ValueError(f"bad edge token in {text!r}")
        edge = EdgeDeco(Kind(int(em.group(1))), 1 if em.group(2) == "-" else 0)
        ftok = take()
        kids = []
        while pos < len(tokens) and tokens[pos] == "(":
            kids.append(node())
        if take() != ")":
            raise ValueError("expected ')'")
        if ftok == "k":
            if not kids:
                raise ValueError("a leaf needs an explicit frequency")
            return planted(edge, kids)
        return Tree(edge, LinearFreq.parse(ftok, nvars), kids)

    t = node()
    if pos != len(tokens):
        raise ValueError("trailing tokens after tree")
    return t
