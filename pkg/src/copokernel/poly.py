"""Sparse multivariate polynomials with exact rational coefficients.

Variables are the pairwise inner products of ``r + 2`` points on the sphere
(``u`` for level 0, ``u, v, t`` for level 1, six labels for level 2).
Permuting the points permutes the variables, and most of the symmetry
reduction used by the bound programs is expressed through that action.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple  # exponent vector, one nonnegative int per variable

_LEVEL_LABELS = {
    0: ("u",),
    1: ("u", "v", "t"),
    2: ("xy", "xz1", "xz2", "yz1", "yz2", "z1z2"),
}


@dataclass(frozen=True)
class VariableSet:
    """Ordered variable labels, optionally tied to point pairs.

    ``pairs[k]`` is the unordered pair of point slots whose inner product the
    k-th variable stands for.  Plain variable sets (e.g. ``x1..xn`` for the
    finite tensor polynomials) have ``pairs=None``.
    """

    labels: tuple[str, ...]
    pairs: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate variable labels: {self.labels}")
        if self.pairs is not None:
            if len(self.pairs) != len(self.labels):
                raise ValueError("pairs and labels differ in length")
            if len(set(self.pairs)) != len(self.pairs):
                raise ValueError("pair-index map is not injective")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_points(self) -> int | None:
        if self.pairs is None:
            return None
        return 1 + max(max(p) for p in self.pairs)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def pair_index(self, i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        return self.pairs.index(key)

    @classmethod
    def for_level(cls, r: int) -> "VariableSet":
        """Inner-product variables of ``r + 2`` points."""
        return _level_vars(r)

    @classmethod
    def plain(cls, n: int, prefix: str = "x") -> "VariableSet":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))


@lru_cache(maxsize=None)
def _level_vars(r: int) -> VariableSet:
    if r < 0:
        raise ValueError("level must be nonnegative")
    pairs = tuple(itertools.combinations(range(r + 2), 2))
    if r in _LEVEL_LABELS:
        labels = _LEVEL_LABELS[r]
    else:
        labels = tuple(f"p{i}{j}" for i, j in pairs)
    assert len(labels) == math.comb(r + 2, 2)
    return VariableSet(labels, pairs)


def _clean(terms: Mapping) -> dict:
    return {m: c for m, c in terms.items() if c != 0}


class Polynomial:
    """Immutable sparse polynomial ``{exponent tuple: coefficient}``.

    Coefficients are normally :class:`fractions.Fraction`; floats are accepted
    (certificate reconstruction works in floating point) and mix freely.
    """

    __slots__ = ("vars", "_terms", "_hash")

    def __init__(self, vars: VariableSet, terms: Mapping | None = None):
        self.vars = vars
        nv = len(vars)
        clean = {}
        for m, c in (terms or {}).items():
            m = tuple(int(e) for e in m)
            if len(m) != nv or any(e < 0 for e in m):
                raise ValueError(f"bad monomial {m} for {nv} variables")
            if c != 0:
                clean[m] = c
        self._terms = clean
        self._hash = None

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, vars: VariableSet, c=1) -> "Polynomial":
        return cls(vars, {(0,) * len(vars): Fraction(c) if isinstance(c, int) else c})

    @classmethod
    def variable(cls, vars: VariableSet, label: str | int) -> "Polynomial":
        k = label if isinstance(label, int) else vars.index(label)
        m = [0] * len(vars)
        m[k] = 1
        return cls(vars, {tuple(m): Fraction(1)})

    @classmethod
    def monomial(cls, vars: VariableSet, exps: Sequence[int], c=1) -> "Polynomial":
        return cls(vars, {tuple(exps): Fraction(c) if isinstance(c, int) else c})

    @classmethod
    def univariate(cls, vars: VariableSet, coeffs: Sequence, label: str | int = 0) -> "Polynomial":
        """``sum_k coeffs[k] * var**k``."""
        k = label if isinstance(label, int) else vars.index(label)
        terms = {}
        for power, c in enumerate(coeffs):
            m = [0] * len(vars)
            m[k] = power
            terms[tuple(m)] = c
        return cls(vars, terms)

    @classmethod
    def _raw(cls, vars: VariableSet, terms: dict) -> "Polynomial":
        p = cls.__new__(cls)
        p.vars = vars
        p._terms = terms
        p._hash = None
        return p

    # -- access -----------------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, m: Sequence[int]):
        return self._terms.get(tuple(m), 0)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def total_degree(self) -> int:
        return max((sum(m) for m in self._terms), default=0)

    def degree_in(self, k: int) -> int:
        return max((m[k] for m in self._terms), default=0)

    def max_degrees(self) -> tuple[int, ...]:
        if not self._terms:
            return (0,) * len(self.vars)
        return tuple(int(x) for x in np.max(np.array(list(self._terms)), axis=0))

    def sorted_terms(self) -> list:
        return sorted(self._terms.items(), key=lambda kv: grlex_key(kv[0]))

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Polynomial"):
        if self.vars != other.vars:
            raise ValueError("variable-set mismatch")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, Fraction)):
            return Polynomial.constant(self.vars, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            s = out.get(m, 0) + c
            if s == 0:
                out.pop(m, None)
            else:
                out[m] = s
        return Polynomial._raw(self.vars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.vars, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, Fraction)):
            if other == 0:
                return Polynomial._raw(self.vars, {})
            return Polynomial._raw(self.vars, {m: c * other for m, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0) + c1 * c2
        return Polynomial._raw(self.vars, _clean(out))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        result = Polynomial.constant(self.vars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def shift(self, exps: Sequence[int]) -> "Polynomial":
        """Multiply by the monomial with exponent vector ``exps``."""
        e = tuple(exps)
        return Polynomial._raw(
            self.vars, {tuple(a + b for a, b in zip(m, e)): c for m, c in self._terms.items()}
        )

    def map_coefficients(self, fn) -> "Polynomial":
        return Polynomial(self.vars, {m: fn(c) for m, c in self._terms.items()})

    def to_float(self) -> "Polynomial":
        return self.map_coefficients(float)

    def permute_variables(self, perm: Sequence[int]) -> "Polynomial":
        """Send variable ``k`` to variable ``perm[k]``."""
        out = {}
        for m, c in self._terms.items():
            new = [0] * len(m)
            for k, e in enumerate(m):
                new[perm[k]] = e
            out[tuple(new)] = c
        return Polynomial._raw(self.vars, out)

    # -- evaluation -------------------------------------------------------
    def __call__(self, *values):
        if len(values) == 1 and np.ndim(values[0]) >= 1 and len(self.vars) > 1:
            return self.evaluate(values[0])
        return self.evaluate(np.stack(np.broadcast_arrays(*values), axis=-1))

    def evaluate(self, points) -> np.ndarray:
        """Evaluate at ``points`` of shape ``(..., nvars)`` in floating point."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != len(self.vars):
            raise ValueError("point dimension does not match variable count")
        if not self._terms:
            return np.zeros(pts.shape[:-1])
        exps = np.array(list(self._terms), dtype=int)
        coefs = np.array([float(c) for c in self._terms.values()])
        maxd = exps.max(axis=0)
        out = np.zeros(pts.shape[:-1])
        # power tables per variable keep this O(terms) per point
        tables = [pts[..., k, None] ** np.arange(maxd[k] + 1) for k in range(len(self.vars))]
        for m, c in zip(exps, coefs):
            term = np.full(pts.shape[:-1], c)
            for k, e in enumerate(m):
                if e:
                    term = term * tables[k][..., e]
            out = out + term
        return out

    def evaluate_exact(self, values: Sequence) -> Fraction:
        total = Fraction(0)
        for m, c in self._terms.items():
            term = Fraction(c)
            for x, e in zip(values, m):
                if e:
                    term *= Fraction(x) ** e
            total += term
        return total

    # -- comparison -------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(self.vars, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.vars == other.vars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.vars, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self):
        if not self._terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            mono = "*".join(
                lab if e == 1 else f"{lab}^{e}" for lab, e in zip(self.vars.labels, m) if e
            )
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)


def grlex_key(m: Sequence[int]):
    return (sum(m), tuple(m))


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


# -- group action ----------------------------------------------------------


@dataclass(frozen=True)
class PairAction:
    """Action on inner-product variables induced by permuting point slots."""

    vars: VariableSet
    point_permutation: tuple[int, ...]
    induced_variable_permutation: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        if self.vars.pairs is None:
            raise ValueError("variable set carries no point-pair structure")
        pi = tuple(self.point_permutation)
        if sorted(pi) != list(range(self.vars.n_points)):
            raise ValueError(f"{pi} is not a permutation of the point slots")
        object.__setattr__(self, "point_permutation", pi)
        induced = tuple(self.vars.pair_index(pi[i], pi[j]) for i, j in self.vars.pairs)
        object.__setattr__(self, "induced_variable_permutation", induced)

    def compose(self, other: "PairAction") -> "PairAction":
        """``self after other``."""
        a, b = self.point_permutation, other.point_permutation
        return PairAction(self.vars, tuple(a[b[i]] for i in range(len(a))))

    def __call__(self, p: Polynomial) -> Polynomial:
        return act(self, p)


def act(a: PairAction, p: Polynomial) -> Polynomial:
    if a.vars != p.vars:
        raise ValueError("variable-set mismatch")
    return p.permute_variables(a.induced_variable_permutation)


@lru_cache(maxsize=None)
def level_actions(r: int) -> tuple[PairAction, ...]:
    """All ``(r+2)!`` actions of the point permutations at level ``r``."""
    vs = VariableSet.for_level(r)
    return tuple(PairAction(vs, pi) for pi in itertools.permutations(range(r + 2)))


@lru_cache(maxsize=None)
def level_variable_permutations(r: int) -> tuple[tuple[int, ...], ...]:
    """Distinct induced variable permutations (a group, possibly a quotient)."""
    seen = dict.fromkeys(a.induced_variable_permutation for a in level_actions(r))
    return tuple(seen)


def symmetrize(p: Polynomial, r: int) -> Polynomial:
    """Average of ``p`` over all point permutations of level ``r``."""
    actions = level_actions(r)
    if p.vars != VariableSet.for_level(r):
        raise ValueError("polynomial is not over the level-r variables")
    out: dict = {}
    for a in actions:
        perm = a.induced_variable_permutation
        for m, c in p.items():
            new = [0] * len(m)
            for k, e in enumerate(m):
                new[perm[k]] = e
            key = tuple(new)
            out[key] = out.get(key, 0) + c
    scale = Fraction(1, len(actions))
    return Polynomial(p.vars, {m: c * scale for m, c in out.items()})


def is_invariant(p: Polynomial, r: int) -> bool:
    return all(p.permute_variables(perm) == p for perm in level_variable_permutations(r))


# -- monomials and orbits --------------------------------------------------


def monomials_within(nvars: int, total_cap: int, per_var_cap: int | Sequence[int] | None = None) -> list:
    """All exponent vectors with total degree <= cap and per-variable caps, grlex order."""
    if total_cap < 0:
        return []
    if per_var_cap is None:
        caps = [total_cap] * nvars
    elif isinstance(per_var_cap, int):
        caps = [per_var_cap] * nvars
    else:
        caps = list(per_var_cap)
    if any(c < 0 for c in caps):
        return []
    out = []
    for d in range(total_cap + 1):
        out.extend(_compositions(d, caps))
    return out


def _compositions(d: int, caps: Sequence[int]) -> list:
    """Exponent vectors of exact degree ``d`` in lexicographic order."""
    if len(caps) == 1:
        return [(d,)] if d <= caps[0] else []
    out = []
    for first in range(min(d, caps[0]) + 1):
        for rest in _compositions(d - first, caps[1:]):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True)
class Orbit:
    representative: tuple
    members: tuple

    def __len__(self):
        return len(self.members)


class OrbitIndex:
    """Maps monomials to their orbit under a set of variable permutations."""

    def __init__(self, perms: Iterable[Sequence[int]]):
        self.perms = [tuple(p) for p in perms]
        self._cache: dict = {}

    def canonical(self, m: tuple) -> tuple:
        rep = self._cache.get(m)
        if rep is None:
            images = []
            for perm in self.perms:
                new = [0] * len(m)
                for k, e in enumerate(m):
                    new[perm[k]] = e
                images.append(tuple(new))
            rep = min(images)
            for im in images:
                self._cache[im] = rep
        return rep

    def members(self, m: tuple) -> tuple:
        imgs = set()
        for perm in self.perms:
            new = [0] * len(m)
            for k, e in enumerate(m):
                new[perm[k]] = e
            imgs.add(tuple(new))
        return tuple(sorted(imgs, key=grlex_key))


def monomial_orbits(vars: VariableSet, r: int, total_cap: int, per_var_cap: int | None = None) -> list[Orbit]:
    """Partition the monomials within the caps into Sym(r+2) orbits.

    Orbits are returned in grlex order of their representatives, which are
    the lexicographically smallest members.
    """
    if vars != VariableSet.for_level(r):
        raise ValueError("variable set does not match level")
    index = OrbitIndex(level_variable_permutations(r))
    groups: dict = {}
    for m in monomials_within(len(vars), total_cap, per_var_cap):
        groups.setdefault(index.canonical(m), []).append(m)
    orbits = [Orbit(rep, tuple(sorted(ms, key=grlex_key))) for rep, ms in groups.items()]
    orbits.sort(key=lambda o: grlex_key(o.representative))
    return orbits


# -- parity substitution ---------------------------------------------------


def parity_compose(coeffs: Sequence, W: Polynomial, R: Polynomial) -> Polynomial:
    """Substitute a same-parity univariate polynomial into ``W`` and ``R``.

    ``coeffs[k]`` is the coefficient of ``s**k`` in ``P(s) = sum_j p_j s**(i-2j)``
    with ``i`` the degree.  Returns ``sum_j p_j W**(i-2j) R**j``, which equals
    ``R**(i/2) P(W / sqrt(R))`` wherever ``R > 0``.
    """
    W._check(R)
    coeffs = list(coeffs)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    i = len(coeffs) - 1
    for k, c in enumerate(coeffs):
        if c != 0 and (i - k) % 2:
            raise ValueError("coefficients mix parities")
    result = Polynomial(W.vars, {})
    w_pows = [Polynomial.constant(W.vars, 1)]
    for _ in range(i):
        w_pows.append(w_pows[-1] * W)
    r_pow = Polynomial.constant(W.vars, 1)
    for j in range(i // 2 + 1):
        c = coeffs[i - 2 * j]
        if c != 0:
            result = result + (w_pows[i - 2 * j] * r_pow) * c
        r_pow = r_pow * R
    return result


# -- tensor Chebyshev basis -------------------------------------------------
#
# A "Chebyshev polynomial" below is an ordinary Polynomial whose coefficient
# on exponent vector e multiplies prod_k T_{e_k}(x_k) instead of prod_k x_k^{e_k}.
# All inner-product variables live in [-1, 1], where this basis is far better
# conditioned than monomials.  Permuting variables acts identically on both.


@lru_cache(maxsize=None)
def chebyshev_coefficients(d: int) -> tuple:
    """Power-basis coefficients of ``T_d``."""
    if d == 0:
        return (Fraction(1),)
    prev, cur = [Fraction(1)], [Fraction(0), Fraction(1)]
    for k in range(2, d + 1):
        nxt = [Fraction(0)] * (k + 1)
        for p, c in enumerate(cur):
            nxt[p + 1] += 2 * c
        for p, c in enumerate(prev):
            nxt[p] -= c
        prev, cur = cur, nxt
    return tuple(cur)


@lru_cache(maxsize=None)
def power_in_chebyshev(k: int) -> tuple:
    """``x**k = sum_j c[j] T_j(x)``; returns ``c`` (length ``k + 1``)."""
    c = [Fraction(0)] * (k + 1)
    scale = Fraction(1, 2 ** (k - 1)) if k else Fraction(1)
    for m in range(k // 2 + 1):
        j = k - 2 * m
        w = math.comb(k, m) * scale
        c[j] += w / 2 if j == 0 and k else w
    return tuple(c)


def _tensor_expand(m, table) -> list:
    """Expand one exponent vector through per-variable univariate tables."""
    out = [((), Fraction(1))]
    for e in m:
        row = table(e)
        out = [(mono + (j,), c * cj) for mono, c in out for j, cj in enumerate(row) if cj]
    return out


def to_chebyshev(p: Polynomial) -> Polynomial:
    """Re-express ``p`` in the tensor Chebyshev basis (exact for rational input)."""
    out: dict = {}
    for m, c in p.items():
        for mm, w in _tensor_expand(m, power_in_chebyshev):
            out[mm] = out.get(mm, 0) + c * w
    return Polynomial(p.vars, out)


def from_chebyshev(p: Polynomial) -> Polynomial:
    out: dict = {}
    for m, c in p.items():
        for mm, w in _tensor_expand(m, chebyshev_coefficients):
            out[mm] = out.get(mm, 0) + c * w
    return Polynomial(p.vars, out)


@lru_cache(maxsize=1 << 16)
def cheb_monomial_product(a: tuple, b: tuple) -> tuple:
    """``T_a * T_b`` as ``((exponents, coefficient), ...)`` via ``T_i T_j = (T_{i+j} + T_{|i-j|})/2``."""
    out = [((), Fraction(1))]
    for x, y in zip(a, b):
        if x and y:
            hi, lo = x + y, abs(x - y)
            out = [(mono + (hi,), c / 2) for mono, c in out] + [(mono + (lo,), c / 2) for mono, c in out]
        else:
            out = [(mono + (x + y,), c) for mono, c in out]
    merged: dict = {}
    for mono, c in out:
        merged[mono] = merged.get(mono, 0) + c
    return tuple(merged.items())


def cheb_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    p._check(q)
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            for m, w in cheb_monomial_product(m1, m2):
                out[m] = out.get(m, 0) + c1 * c2 * w
    return Polynomial(p.vars, out)


def chebyshev_values(points, degrees) -> np.ndarray:
    """``T_d(points)`` stacked on a new trailing axis, ``d = 0..max(degrees)``."""
    x = np.asarray(points, dtype=float)
    dmax = int(max(degrees, default=0)) if not isinstance(degrees, int) else degrees
    out = np.empty(x.shape + (dmax + 1,))
    out[..., 0] = 1.0
    if dmax >= 1:
        out[..., 1] = x
    for k in range(2, dmax + 1):
        out[..., k] = 2 * x * out[..., k - 1] - out[..., k - 2]
    return out


def cheb_evaluate(p: Polynomial, points) -> np.ndarray:
    """Evaluate a Chebyshev-basis polynomial at ``points`` of shape ``(..., nvars)``."""
    pts = np.asarray(points, dtype=float)
    if not len(p):
        return np.zeros(pts.shape[:-1])
    exps = np.array(list(p.terms), dtype=int)
    coefs = np.array([float(c) for c in p.terms.values()])
    tables = [chebyshev_values(pts[..., k], int(exps[:, k].max())) for k in range(len(p.vars))]
    out = np.zeros(pts.shape[:-1])
    for m, c in zip(exps, coefs):
        term = np.full(pts.shape[:-1], c)
        for k, e in enumerate(m):
            if e:
                term = term * tables[k][..., e]
        out = out + term
    return out
