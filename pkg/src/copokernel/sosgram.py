"""Weighted sum-of-squares constraints as Gram-matrix blocks.

A template ``(weights w_j, bases m_j)`` asks for PSD matrices ``G_j`` with

    target = sum_j w_j * m_j^T G_j m_j

coefficient by coefficient.  The target may depend affinely on scalar
decision variables of the surrounding program (an :class:`AffinePolynomial`).
With a symmetry level set, the coefficient equations are summed over each
monomial orbit, so one row is emitted per orbit instead of per monomial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .conic import PSD, Block, ConicSolution, ProgramBuilder
from .poly import (
    OrbitIndex,
    Polynomial,
    VariableSet,
    cheb_monomial_product,
    from_chebyshev,
    grlex_key,
    level_variable_permutations,
    monomials_within,
    to_chebyshev,
)

CONST = None  # key of the constant part in an affine coefficient
MONOMIAL, CHEBYSHEV = "monomial", "chebyshev"
BASES = (MONOMIAL, CHEBYSHEV)


def convert(p: Polynomial, source: str, dest: str) -> Polynomial:
    """Change a polynomial's coefficient basis."""
    if source == dest:
        return p
    return to_chebyshev(p) if dest == CHEBYSHEV else from_chebyshev(p)


def basis_product(a: tuple, b: tuple, basis: str):
    """Product of two basis elements as ``((exponents, coefficient), ...)``."""
    if basis == MONOMIAL:
        return ((tuple(x + y for x, y in zip(a, b)), 1),)
    return cheb_monomial_product(a, b)


class AffinePolynomial:
    """Polynomial with coefficients affine in named scalar unknowns.

    ``terms[m]`` maps an unknown key (any hashable, usually a flat program
    index) or ``None`` (the constant) to an exact coefficient.  ``basis``
    says whether ``m`` denotes a monomial or a product of Chebyshev
    polynomials.
    """

    __slots__ = ("vars", "terms", "basis")

    def __init__(self, vars: VariableSet, terms: Mapping | None = None, basis: str = MONOMIAL):
        if basis not in BASES:
            raise ValueError(f"unknown basis {basis!r}")
        self.vars = vars
        self.basis = basis
        self.terms: dict = {}
        for m, form in (terms or {}).items():
            for k, c in form.items():
                self._acc(tuple(m), k, c)

    @classmethod
    def from_polynomial(cls, p: Polynomial, key=CONST, basis: str = MONOMIAL) -> "AffinePolynomial":
        out = cls(p.vars, basis=basis)
        out.add_polynomial(p, key)
        return out

    def _acc(self, m, k, c):
        if c == 0:
            return
        form = self.terms.setdefault(m, {})
        v = form.get(k, 0) + c
        if v == 0:
            del form[k]
            if not form:
                del self.terms[m]
        else:
            form[k] = v

    def add_polynomial(self, p: Polynomial, key=CONST, scale=1) -> "AffinePolynomial":
        """In place: ``self += scale * key * p`` (``key=None`` adds a constant multiple)."""
        if p.vars != self.vars:
            raise ValueError("variable-set mismatch")
        for m, c in p.items():
            self._acc(m, key, c * scale)
        return self

    def add_affine(self, other: "AffinePolynomial", scale=1) -> "AffinePolynomial":
        if other.vars != self.vars:
            raise ValueError("variable-set mismatch")
        if other.basis != self.basis:
            raise ValueError("basis mismatch")
        for m, form in other.terms.items():
            for k, c in form.items():
                self._acc(m, k, c * scale)
        return self

    def copy(self) -> "AffinePolynomial":
        out = AffinePolynomial(self.vars, basis=self.basis)
        out.terms = {m: dict(f) for m, f in self.terms.items()}
        return out

    def __neg__(self):
        out = AffinePolynomial(self.vars, basis=self.basis)
        return out.add_affine(self, -1)

    def in_basis(self, basis: str) -> "AffinePolynomial":
        if basis == self.basis:
            return self
        out = AffinePolynomial(self.vars, basis=basis)
        for m, form in self.terms.items():
            for mm, w in _single(m, self.basis, basis).items():
                for k, c in form.items():
                    out._acc(mm, k, c * w)
        return out

    def unknowns(self) -> set:
        return {k for f in self.terms.values() for k in f if k is not CONST}

    def total_degree(self) -> int:
        return max((sum(m) for m in self.terms), default=0)

    def max_degrees(self) -> tuple:
        if not self.terms:
            return (0,) * len(self.vars)
        return tuple(int(x) for x in np.max(np.array(list(self.terms)), axis=0))

    def permute_variables(self, perm: Sequence[int]) -> "AffinePolynomial":
        out = AffinePolynomial(self.vars, basis=self.basis)
        for m, form in self.terms.items():
            new = [0] * len(m)
            for k, e in enumerate(m):
                new[perm[k]] = e
            out.terms[tuple(new)] = dict(form)
        return out

    def symmetrize(self, r: int) -> "AffinePolynomial":
        perms = level_variable_permutations(r)
        # level_variable_permutations lists distinct induced permutations;
        # averaging over them equals averaging over all (r+2)! point actions
        # because each induced permutation has the same number of preimages.
        out = AffinePolynomial(self.vars, basis=self.basis)
        scale = Fraction(1, len(perms))
        for perm in perms:
            for m, form in self.terms.items():
                new = [0] * len(m)
                for k, e in enumerate(m):
                    new[perm[k]] = e
                new = tuple(new)
                for key, c in form.items():
                    out._acc(new, key, c * scale)
        return out

    def is_invariant(self, r: int) -> bool:
        return all(self.permute_variables(p) == self for p in level_variable_permutations(r))

    def substitute(self, values: Mapping | Callable) -> Polynomial:
        """Plug numbers in for the unknowns; returns a float polynomial."""
        get = values if callable(values) else values.__getitem__
        out = {}
        for m, form in self.terms.items():
            s = 0.0
            for k, c in form.items():
                s += float(c) * (1.0 if k is CONST else float(get(k)))
            out[m] = s
        return Polynomial(self.vars, out)

    def __eq__(self, other):
        if not isinstance(other, AffinePolynomial):
            return NotImplemented
        return self.vars == other.vars and self.basis == other.basis and self.terms == other.terms

    def __repr__(self):
        return f"AffinePolynomial({len(self.terms)} monomials, {len(self.unknowns())} unknowns)"


def _single(m, source, dest) -> dict:
    return convert(Polynomial(VariableSet.plain(len(m)), {m: Fraction(1)}), source, dest).terms


def _as_affine(target, basis) -> AffinePolynomial:
    if isinstance(target, Polynomial):
        target = AffinePolynomial.from_polynomial(target)
    if not isinstance(target, AffinePolynomial):
        raise TypeError("target must be a Polynomial or AffinePolynomial")
    return target.in_basis(basis)


def monomial_basis(vars: VariableSet, total_cap: int, per_var_cap: int | None = None) -> list:
    """All monomials within both caps, in grlex order."""
    return monomials_within(len(vars), total_cap, per_var_cap)


def admissible_basis(vars: VariableSet, weight: Polynomial, total_cap: int,
                     per_var_cap: int | None = None) -> list:
    """Monomials ``m`` such that every term of ``weight * m^2`` fits the caps."""
    wdeg = weight.total_degree()
    wmax = weight.max_degrees()
    if per_var_cap is None:
        per_var_cap = total_cap
    out = []
    half_total = (total_cap - wdeg) // 2
    caps = [(per_var_cap - d) // 2 for d in wmax]
    if half_total < 0 or min(caps) < 0:
        return out
    return monomials_within(len(vars), half_total, caps)


@dataclass(frozen=True)
class SosTemplate:
    vars: VariableSet
    weights: tuple
    bases: tuple
    symmetry: int | None = None
    name: str = "sos"
    basis: str = MONOMIAL  # how basis elements and matched coefficients are read

    def __post_init__(self):
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if len(self.weights) != len(self.bases):
            raise ValueError("one basis per weight")
        for w in self.weights:
            if w.vars != self.vars:
                raise ValueError("weight over a different variable set")

    @classmethod
    def from_caps(cls, vars, weights, total_cap, per_var_cap=None, symmetry=None, name="sos",
                  basis=MONOMIAL):
        """Weights are given in the monomial basis; bases fill the caps."""
        weights = tuple(weights)
        bases = tuple(tuple(admissible_basis(vars, w, total_cap, per_var_cap)) for w in weights)
        return cls(vars, weights, bases, symmetry, name, basis)

    @property
    def sizes(self) -> tuple:
        return tuple(len(b) for b in self.bases)


def interval_template(vars: VariableSet, a, b, degree: int, label=0, name="interval",
                      basis: str = MONOMIAL) -> SosTemplate:
    """Weights ``{1, (b - s)(s - a)}`` for nonnegativity of a degree-``degree``
    polynomial in variable ``label`` on ``[a, b]``."""
    s = Polynomial.variable(vars, label)
    g = (Polynomial.constant(vars, Fraction(b)) - s) * (s - Fraction(a))
    k = label if isinstance(label, int) else vars.index(label)
    one = Polynomial.constant(vars, 1)

    def elements(cap):
        out = []
        for d in range(max(cap, -1) + 1):
            m = [0] * len(vars)
            m[k] = d
            out.append(tuple(m))
        return tuple(out)

    return SosTemplate(vars, (one, g), (elements(degree // 2), elements((degree - 2) // 2)), None, name, basis)


@dataclass
class SosEncoding:
    template: SosTemplate
    target: AffinePolynomial
    blocks: tuple  # Block or None per weight
    rows: dict  # orbit key -> builder row index
    orbit_key: Callable


def _identity(m):
    return m


def orbit_key_function(vars: VariableSet, symmetry: int | None) -> Callable:
    if symmetry is None:
        return _identity
    return OrbitIndex(level_variable_permutations(symmetry)).canonical


def _madd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def encode(template: SosTemplate, builder: ProgramBuilder, target, check_symmetry: bool = True) -> SosEncoding:
    """Add Gram blocks and coefficient-matching rows for ``template`` to ``builder``.

    Unknown keys of ``target`` must be flat variable indices of ``builder``.
    Weights are converted to the template basis; the target is converted
    too if it comes in the other one.
    """
    target = _as_affine(target, template.basis)
    if target.vars != template.vars:
        raise ValueError("target and template use different variables")
    r = template.symmetry
    if r is not None and check_symmetry and not target.is_invariant(r):
        raise ValueError("target is not invariant under the requested symmetry")
    key = orbit_key_function(template.vars, r)

    lhs: dict = {}
    rhs: dict = {}
    blocks = []
    for j, (w, basis) in enumerate(zip(template.weights, template.bases)):
        if not basis:
            blocks.append(None)
            continue
        blk = builder.add_block(PSD, len(basis), name=f"{template.name}.G{j}")
        blocks.append(blk)
        wterms = [(m, float(c)) for m, c in convert(w, MONOMIAL, template.basis).items()]
        nb = len(basis)
        for p in range(nb):
            bp = basis[p]
            for q in range(p, nb):
                f = 1.0 if p == q else 2.0
                idx = blk.index(p, q)
                for mpq, c1 in basis_product(bp, basis[q], template.basis):
                    for wm, wc in wterms:
                        for mm, c2 in basis_product(mpq, wm, template.basis):
                            k = key(mm)
                            row = lhs.setdefault(k, {})
                            row[idx] = row.get(idx, 0.0) + f * wc * float(c1 * c2)
    for m, form in target.terms.items():
        k = key(m)
        row = lhs.setdefault(k, {})
        for var, c in form.items():
            if var is CONST:
                rhs[k] = rhs.get(k, 0) + c
            else:
                row[var] = row.get(var, 0.0) - float(c)
    rows = {}
    for k in sorted(set(lhs) | set(rhs), key=grlex_key):
        rows[k] = builder.add_equality(lhs.get(k, {}), float(rhs.get(k, 0)))
    return SosEncoding(template, target, tuple(blocks), rows, key)


@dataclass
class GramCertificate:
    vars: VariableSet
    weights: tuple
    bases: tuple
    matrices: tuple  # numpy arrays (empty (0,0) for empty bases)
    target: Polynomial  # float target (in ``basis``) after substituting the unknowns
    symmetry: int | None = None
    basis: str = MONOMIAL
    orbit_residuals: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.orbit_residuals.values(), default=0.0)

    def min_eigenvalue(self) -> float:
        vals = [np.linalg.eigvalsh(G)[0] for G in self.matrices if G.size]
        return float(min(vals, default=0.0))

    def to_dict(self) -> dict:
        return {
            "labels": list(self.vars.labels),
            "weights": [[[list(m), float(c)] for m, c in w.sorted_terms()] for w in self.weights],
            "bases": [[list(m) for m in b] for b in self.bases],
            "matrices": [G.tolist() for G in self.matrices],
            "target": [[list(m), float(c)] for m, c in self.target.sorted_terms()],
            "symmetry": self.symmetry,
            "basis": self.basis,
        }

    @classmethod
    def from_dict(cls, d: dict, vars: VariableSet | None = None) -> "GramCertificate":
        vars = vars or VariableSet(tuple(d["labels"]))

        def poly(items):
            return Polynomial(vars, {tuple(m): c for m, c in items})

        cert = cls(
            vars,
            tuple(poly(w) for w in d["weights"]),
            tuple(tuple(tuple(m) for m in b) for b in d["bases"]),
            tuple(np.array(G, dtype=float).reshape(len(b), len(b)) for G, b in zip(d["matrices"], d["bases"])),
            poly(d["target"]),
            d.get("symmetry"),
            d.get("basis", MONOMIAL),
        )
        cert.orbit_residuals = orbit_residuals(cert)
        return cert


def reconstruct(cert: GramCertificate) -> Polynomial:
    """``sum_j w_j * m_j^T G_j m_j`` with float coefficients, in ``cert.basis``."""
    out: dict = {}
    for w, basis, G in zip(cert.weights, cert.bases, cert.matrices):
        if not len(basis):
            continue
        acc: dict = {}
        nb = len(basis)
        for p in range(nb):
            for q in range(p, nb):
                g = G[p, q] if p == q else 2.0 * G[p, q]
                if g == 0.0:
                    continue
                for m, c in basis_product(basis[p], basis[q], cert.basis):
                    acc[m] = acc.get(m, 0.0) + float(g) * float(c)
        for wm, wc in convert(w, MONOMIAL, cert.basis).items():
            wc = float(wc)
            for m, c in acc.items():
                for mm, c2 in basis_product(m, wm, cert.basis):
                    out[mm] = out.get(mm, 0.0) + wc * c * float(c2)
    return Polynomial(cert.vars, out)


def reconstruct_monomial(cert: GramCertificate) -> Polynomial:
    """Like :func:`reconstruct` but always in the monomial basis."""
    return convert(reconstruct(cert), cert.basis, MONOMIAL)


def orbit_residuals(cert: GramCertificate) -> dict:
    """``|sum over orbit of (reconstruction - target)|`` per orbit key."""
    key = orbit_key_function(cert.vars, cert.symmetry)
    diff: dict = {}
    for m, c in reconstruct(cert).items():
        k = key(m)
        diff[k] = diff.get(k, 0.0) + c
    for m, c in cert.target.items():
        k = key(m)
        diff[k] = diff.get(k, 0.0) - float(c)
    return {k: abs(v) for k, v in diff.items()}


def certificate(enc: SosEncoding, sol: ConicSolution) -> GramCertificate:
    """Extract the Gram matrices of ``enc`` from a solved program."""
    mats = []
    for blk, basis in zip(enc.blocks, enc.template.bases):
        mats.append(sol.block_value(blk) if blk is not None else np.zeros((0, 0)))
    target = enc.target.substitute(lambda k: sol.x[k])
    t = enc.template
    cert = GramCertificate(t.vars, t.weights, t.bases, tuple(mats), target, t.symmetry, t.basis)
    cert.orbit_residuals = orbit_residuals(cert)
    return cert
