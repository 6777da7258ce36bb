"""Finite tensors over ``[n]``, the cones ``C_r`` and ``Q_r``, and graph bounds.

``M`` is in ``C_r`` when ``(e^T x)^r x^T M x`` has nonnegative coefficients
and in ``Q_r`` when that form is a sum of ``x^beta x^T N_beta x`` with
``N_beta >= 0`` entrywise and ``x^beta x^T S_beta x`` with ``S_beta`` PSD,
over all ``|beta| = r``.  Both are inner approximations of the copositive
cone.  For a graph ``G`` the kernel with diagonal ``lambda - 1``, entries
``-1`` on non-edges and free entries on edges gives the upper bounds
``gamma_r`` (kernel in ``C_r``) and ``nu_r`` (kernel in ``Q_r``) on the
stability number.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import conic
from .bounds import DEFAULT_SEED, INFEASIBLE, NUMERICAL_LIMIT, OPTIMAL, UNBOUNDED, BoundReport
from .conic import FREE, NONNEG, PSD, ProgramBuilder
from .poly import OrbitIndex, Polynomial, VariableSet, grlex_key

YES, NO, UNDETERMINED = "yes", "no", "undetermined"

MAX_BRUTEFORCE_N = 25
MAX_SIMPLEX_N = 12
MAX_AUTOMORPHISM_N = 8


# -- tensors ------------------------------------------------------------------


@dataclass
class FiniteTensor:
    """A real function on ``[n]^order`` stored as a dense array.

    Entries are kept as given: a float array, or an object array of
    ``Fraction`` for the exact paths.
    """

    n: int
    order: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries)
        if self.entries.shape != (self.n,) * self.order:
            raise ValueError(f"entries have shape {self.entries.shape}, expected {(self.n,) * self.order}")

    @classmethod
    def from_matrix(cls, M, exact: bool = True) -> "FiniteTensor":
        A = _fraction_array(M) if exact else np.asarray(M, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("a square matrix is required")
        return cls(A.shape[0], 2, A)

    def is_symmetric(self) -> bool:
        return self == symmetrize_tensor(self)

    def __getitem__(self, idx):
        return self.entries[idx]

    def __eq__(self, other):
        if not isinstance(other, FiniteTensor):
            return NotImplemented
        return (self.n, self.order) == (other.n, other.order) and bool(np.all(self.entries == other.entries))


def _fraction_array(M) -> np.ndarray:
    rows = [[Fraction(v) if not isinstance(v, float) else Fraction(v) for v in row] for row in np.asarray(M, dtype=object)]
    out = np.empty((len(rows), len(rows[0]) if rows else 0), dtype=object)
    for i, row in enumerate(rows):
        for j, v in enumerate(row):
            out[i, j] = v
    return out


def stack(T: FiniteTensor, r: int) -> FiniteTensor:
    """Order ``d + r`` tensor equal to ``T`` on the leading ``d`` indices."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return T
    shape = T.entries.shape + (T.n,) * r
    E = np.broadcast_to(T.entries.reshape(T.entries.shape + (1,) * r), shape).copy()
    return FiniteTensor(T.n, T.order + r, E)


def symmetrize_tensor(T: FiniteTensor) -> FiniteTensor:
    """Average of ``T`` over all permutations of its indices."""
    d = T.order
    if d <= 1:
        return T
    total = None
    for perm in itertools.permutations(range(d)):
        P = np.transpose(T.entries, perm)
        total = P.copy() if total is None else total + P
    if T.entries.dtype == object:
        f = Fraction(1, math.factorial(d))
        out = np.empty(total.shape, dtype=object)
        for idx in np.ndindex(total.shape):
            out[idx] = total[idx] * f
        return FiniteTensor(T.n, d, out)
    return FiniteTensor(T.n, d, total / math.factorial(d))


def slice_tensor(T: FiniteTensor, v: Sequence[int]) -> FiniteTensor:
    """Fix the trailing ``len(v)`` indices of ``T`` at ``v``."""
    v = tuple(int(k) for k in v)
    if len(v) > T.order:
        raise ValueError("more indices than the tensor order")
    if any(k < 0 or k >= T.n for k in v):
        raise IndexError(f"index out of range in {v}")
    if not v:
        return T
    return FiniteTensor(T.n, T.order - len(v), np.asarray(T.entries[(Ellipsis,) + v]))


slice = slice_tensor  # noqa: A001  (operator name used throughout the docs)


def tensor_poly(T: FiniteTensor) -> Polynomial:
    """``sum_v T(v) x_{v_1} ... x_{v_d}`` as a polynomial in ``x_1..x_n``."""
    vs = VariableSet.plain(T.n)
    terms: dict = {}
    for idx in np.ndindex(T.entries.shape):
        c = T.entries[idx]
        if c == 0:
            continue
        m = [0] * T.n
        for k in idx:
            m[k] += 1
        m = tuple(m)
        terms[m] = terms.get(m, 0) + (c if isinstance(c, Fraction) else Fraction(c) if isinstance(c, int) else c)
    return Polynomial(vs, terms)


# -- graphs -------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteGraph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        norm = set()
        for e in self.edges:
            i, j = (int(k) for k in e)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge {e} outside [0, {self.n})")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    def adjacent(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=int)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    def complement(self) -> "FiniteGraph":
        return FiniteGraph(self.n, frozenset(p for p in itertools.combinations(range(self.n), 2)
                                             if p not in self.edges))

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        seen, todo = {0}, [0]
        while todo:
            u = todo.pop()
            for v in range(self.n):
                if v not in seen and self.adjacent(u, v):
                    seen.add(v)
                    todo.append(v)
        return len(seen) == self.n

    def automorphisms(self) -> list:
        """All vertex permutations preserving the edge set (identity only above 8 vertices)."""
        if self.n > MAX_AUTOMORPHISM_N:
            return [tuple(range(self.n))]
        A = self.adjacency()
        return _matrix_automorphisms(A)

    @classmethod
    def cycle(cls, n: int) -> "FiniteGraph":
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def complete(cls, n: int) -> "FiniteGraph":
        return cls(n, frozenset(itertools.combinations(range(n), 2)))

    @classmethod
    def empty(cls, n: int) -> "FiniteGraph":
        return cls(n, frozenset())

    @classmethod
    def petersen(cls) -> "FiniteGraph":
        outer = [(i, (i + 1) % 5) for i in range(5)]
        spokes = [(i, i + 5) for i in range(5)]
        inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
        return cls(10, frozenset(outer + spokes + inner))


def all_graphs(n: int):
    """Every labelled graph on ``n`` vertices."""
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        yield FiniteGraph(n, frozenset(p for k, p in enumerate(pairs) if mask >> k & 1))


def read_graph(path) -> FiniteGraph:
    """First line ``n``, then one 1-based ``i j`` edge per line."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    n = int(lines[0])
    edges = []
    for ln in lines[1:]:
        parts = ln.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}: bad edge line {ln!r}")
        edges.append((int(parts[0]) - 1, int(parts[1]) - 1))
    return FiniteGraph(n, frozenset(edges))


def read_matrix_csv(path) -> list:
    """Rows of exact rationals from a plain CSV file."""
    rows = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        rows.append([Fraction(c.strip()) for c in ln.split(",")])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError(f"{path}: matrix must be square")
    return rows


# -- exact helpers ------------------------------------------------------------


def _as_matrix(M) -> list:
    """Square symmetric matrix as nested lists of Fractions."""
    rows = [[Fraction(v) for v in row] for row in (M.tolist() if isinstance(M, np.ndarray) else M)]
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ValueError("matrix must be square")
    for i in range(n):
        for j in range(i + 1, n):
            if rows[i][j] != rows[j][i]:
                raise ValueError("matrix must be symmetric")
    return rows


def _matrix_automorphisms(M) -> list:
    n = len(M)
    M = np.asarray(M, dtype=object)
    out = []
    for p in itertools.permutations(range(n)):
        if all(M[p[i], p[j]] == M[i, j] for i in range(n) for j in range(i, n)):
            out.append(p)
    return out


def compositions(r: int, n: int) -> list:
    """All ``beta`` in ``N^n`` with ``|beta| = r``, in grlex order."""
    if n == 0:
        return [()] if r == 0 else []
    out = []
    for c in itertools.combinations(range(r + n - 1), n - 1):
        prev, parts = -1, []
        for k in c:
            parts.append(k - prev - 1)
            prev = k
        parts.append(r + n - 2 - prev)
        out.append(tuple(parts))
    return sorted(out, key=grlex_key)


def multinomial(beta: Sequence[int]) -> int:
    out = math.factorial(sum(beta))
    for b in beta:
        out //= math.factorial(b)
    return out


def _unit(n: int, *idx) -> tuple:
    m = [0] * n
    for k in idx:
        m[k] += 1
    return tuple(m)


def _madd(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _form_terms(n: int, r: int):
    """``(gamma, beta, i, j, weight)`` for ``(e^T x)^r x^T K x``: the monomial
    ``gamma = beta + e_i + e_j`` gets ``weight * K_ij`` (``i <= j``)."""
    out = []
    for beta in compositions(r, n):
        mb = multinomial(beta)
        for i in range(n):
            for j in range(i, n):
                out.append((_madd(beta, _unit(n, i, j)), beta, i, j, mb * (1 if i == j else 2)))
    return out


def cr_coefficients(M, r: int) -> dict:
    """Exact coefficients of ``(e^T x)^r x^T M x`` keyed by exponent vector."""
    M = _as_matrix(M)
    n = len(M)
    coef: dict = {g: Fraction(0) for g in compositions(r + 2, n)}
    for g, _, i, j, w in _form_terms(n, r):
        coef[g] += w * M[i][j]
    return coef


@dataclass
class MembershipResult:
    member: str
    witness: object = None
    residual: float = 0.0
    message: str = ""

    def __bool__(self):
        return self.member == YES


def in_Cr(M, r: int, method: str = "polynomial") -> MembershipResult:
    """Exact membership in ``C_r``.

    ``method="polynomial"`` expands ``(e^T x)^r x^T M x``; ``"tensor"`` checks
    that ``sym(Stk^r M)`` is entrywise nonnegative, which holds exactly when
    ``sym(Stk^r M) = sym(N)`` for some entrywise nonnegative ``N``.
    """
    if r < 0:
        raise ValueError("r must be nonnegative")
    if method == "polynomial":
        coef = cr_coefficients(M, r)
        witness = sorted(coef.items(), key=lambda t: grlex_key(t[0]))
        worst = min(coef.values(), default=Fraction(0))
        return MembershipResult(YES if worst >= 0 else NO, witness, 0.0,
                                "" if worst >= 0 else f"coefficient {worst} < 0")
    if method == "tensor":
        T = symmetrize_tensor(stack(FiniteTensor.from_matrix(_as_matrix(M)), r))
        worst = min(T.entries.flat, default=Fraction(0))
        return MembershipResult(YES if worst >= 0 else NO, T, 0.0,
                                "" if worst >= 0 else f"symmetrized entry {worst} < 0")
    raise ValueError(f"unknown method {method!r}")


# -- Q_r encoding -------------------------------------------------------------


def _permute_mono(m: tuple, perm: Sequence[int]) -> tuple:
    new = [0] * len(m)
    for k, e in enumerate(m):
        new[perm[k]] = e
    return tuple(new)


@dataclass
class _QrEncoding:
    blocks: dict  # beta representative -> PSD Block
    slacks: dict  # gamma orbit key -> flat index
    rows: list  # gamma orbit keys, one equality each
    reps: dict  # beta -> (representative, perm mapping rep to beta)


def _encode_qr(builder: ProgramBuilder, n: int, r: int, target: dict, group) -> _QrEncoding:
    """Add ``target = sum x^b x^T S_b x + (nonneg coefficients)`` to ``builder``.

    ``target`` maps each degree ``r + 2`` monomial to an affine expression
    ``{flat index or None: coefficient}``; it must be invariant under
    ``group``.  Equations are summed over the monomial orbits of the group
    and one PSD block is kept per orbit of ``beta``; the ``beta`` in the
    same orbit use the permuted matrix.  Slacks are merged into one nonneg
    scalar per monomial orbit (any nonneg-coefficient form is a sum of
    ``x^b x^T N_b x`` terms and vice versa).
    """
    index = OrbitIndex(group)
    reps: dict = {}
    for beta in compositions(r, n):
        for perm in group:
            rep = index.canonical(beta)
            if _permute_mono(rep, perm) == beta:
                reps[beta] = (rep, perm)
                break
    blocks = {}
    for beta, (rep, _) in reps.items():
        if rep not in blocks:
            blocks[rep] = builder.add_block(PSD, n, f"S{''.join(map(str, rep))}")
    gammas = compositions(r + 2, n)
    keys = sorted({index.canonical(g) for g in gammas}, key=grlex_key)
    slack_blk = builder.add_block(NONNEG, len(keys), "N")
    slacks = {k: slack_blk.index(t) for t, k in enumerate(keys)}
    rows: dict = {k: {} for k in keys}
    rhs: dict = {k: Fraction(0) for k in keys}

    def acc(row, idx, c):
        row[idx] = row.get(idx, 0) + c

    for beta, (rep, perm) in reps.items():
        blk = blocks[rep]
        inv = [0] * n
        for a, pa in enumerate(perm):
            inv[pa] = a
        for i in range(n):
            for j in range(i, n):
                g = _madd(beta, _unit(n, i, j))
                a, b = inv[i], inv[j]
                acc(rows[index.canonical(g)], blk.index(min(a, b), max(a, b)), 1 if i == j else 2)
    for k in keys:
        acc(rows[k], slacks[k], 1)
    for g in gammas:
        k = index.canonical(g)
        for var, c in target.get(g, {}).items():
            if var is None:
                rhs[k] += c
            else:
                acc(rows[k], var, -c)
    for k in keys:
        builder.add_equality({i: float(c) for i, c in rows[k].items() if c}, float(rhs[k]))
    return _QrEncoding(blocks, slacks, keys, reps)


def in_Qr(M, r: int, tol: float = 1e-7, symmetry: bool = True, solver_tol: float = conic.DEFAULT_TOL) -> MembershipResult:
    """Membership in ``Q_r`` by a conic feasibility program.

    ``yes`` needs a solved witness with equality residual and PSD floor within
    ``tol``; ``no`` needs a re-checked Farkas ray; anything else is
    ``undetermined``.
    """
    Mq = _as_matrix(M)
    n = len(Mq)
    group = _matrix_automorphisms(Mq) if symmetry and n <= MAX_AUTOMORPHISM_N else [tuple(range(n))]
    target = {g: {None: c} for g, c in cr_coefficients(Mq, r).items() if c}
    b = ProgramBuilder()
    enc = _encode_qr(b, n, r, target, group)
    b.set_objective({})
    prog = b.build()
    sol = conic.solve(prog, tol=solver_tol)
    if sol.status == conic.OPTIMAL:
        res = conic.verify(prog, sol)
        witness = {
            "gram": {rep: sol.block_value(blk) for rep, blk in enc.blocks.items()},
            "slack": {k: float(sol.x[i]) for k, i in enc.slacks.items()},
            "group_order": len(group),
        }
        worst = max(res.equality, -res.psd_floor)
        if worst <= tol:
            return MembershipResult(YES, witness, worst)
        return MembershipResult(UNDETERMINED, witness, worst, "witness fails the residual check")
    if sol.status == conic.PRIMAL_INFEASIBLE and sol.certificate is not None \
            and conic.check_primal_ray(prog, sol.certificate):
        return MembershipResult(NO, {"farkas": sol.certificate}, 0.0, "Farkas ray verified")
    return MembershipResult(UNDETERMINED, None, math.inf, f"solver: {sol.status} ({sol.message})")


# -- oracles ------------------------------------------------------------------


def stability_bruteforce(G: FiniteGraph) -> int:
    """Exact stability number by branching on a vertex (keep it or drop it)."""
    if G.n > MAX_BRUTEFORCE_N:
        raise ValueError(f"brute force limited to {MAX_BRUTEFORCE_N} vertices")
    nbr = [0] * G.n
    for i, j in G.edges:
        nbr[i] |= 1 << j
        nbr[j] |= 1 << i
    cache: dict = {}

    def best(mask: int) -> int:
        if mask == 0:
            return 0
        hit = cache.get(mask)
        if hit is not None:
            return hit
        v = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << v)
        if not nbr[v] & rest:
            val = 1 + best(rest)  # isolated vertices are always taken
        else:
            val = max(best(rest), 1 + best(rest & ~nbr[v]))
        cache[mask] = val
        return val

    return best((1 << G.n) - 1)


def _solve_exact(A: list, b: list):
    """Gaussian elimination over the rationals; ``None`` if singular."""
    n = len(A)
    M = [row[:] + [rhs] for row, rhs in zip(A, b)]
    for col in range(n):
        piv = next((k for k in range(col, n) if M[k][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        for k in range(n):
            if k != col and M[k][col] != 0:
                f = M[k][col] / p
                M[k] = [a - f * c for a, c in zip(M[k], M[col])]
    return [M[k][n] / M[k][k] for k in range(n)]


def simplex_min_quadratic(M) -> Fraction:
    """Exact ``min x^T M x`` over the standard simplex.

    Every face is visited; on its relative interior the minimizer solves
    ``M_SS x_S = (mu/2) 1, 1^T x_S = 1``.  Faces where that system is singular
    can be skipped: the objective is constant along the null direction, so the
    value is attained on a smaller face as well.
    """
    Mq = _as_matrix(M)
    n = len(Mq)
    if n > MAX_SIMPLEX_N:
        raise ValueError(f"face enumeration limited to n <= {MAX_SIMPLEX_N}")
    if n == 0:
        raise ValueError("empty matrix")
    best = None
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            k = len(S)
            A = [[Mq[i][j] for j in S] + [Fraction(-1)] for i in S]
            A.append([Fraction(1)] * k + [Fraction(0)])
            sol = _solve_exact(A, [Fraction(0)] * k + [Fraction(1)])
            if sol is None:
                continue
            x = sol[:k]
            if any(v < 0 for v in x):
                continue
            val = sum(x[a] * Mq[S[a]][S[b]] * x[b] for a in range(k) for b in range(k))
            if best is None or val < best:
                best = val
    return best


def polya_degree(M) -> int:
    """Smallest ``r`` with ``r > L/k - 2`` (``L = max |M_ij|``, ``k`` the simplex minimum)."""
    Mq = _as_matrix(M)
    k = simplex_min_quadratic(Mq)
    if k <= 0:
        raise ValueError(f"simplex minimum {k} <= 0: matrix is not strictly copositive")
    L = max(abs(v) for row in Mq for v in row)
    return max(0, math.floor(L / k - 2) + 1)


# -- graph bounds -------------------------------------------------------------


def _kernel_variables(G: FiniteGraph, builder: ProgramBuilder, symmetry: bool):
    """Free scalar ``lambda`` plus one free scalar per edge orbit.

    Returns ``(lam_index, K)`` where ``K[i][j]`` is an affine expression
    ``{flat index or None: coefficient}``.
    """
    group = G.automorphisms() if symmetry else [tuple(range(G.n))]
    classes: dict = {}
    for e in sorted(G.edges):
        key = min((min(p[e[0]], p[e[1]]), max(p[e[0]], p[e[1]])) for p in group)
        classes.setdefault(key, []).append(e)
    lam_blk = builder.add_block(FREE, 1, "lambda")
    k_blk = builder.add_block(FREE, len(classes), "K_edges") if classes else None
    lam = lam_blk.index(0)
    K = [[None] * G.n for _ in range(G.n)]
    for i in range(G.n):
        K[i][i] = {lam: Fraction(1), None: Fraction(-1)}
        for j in range(i + 1, G.n):
            K[i][j] = K[j][i] = {None: Fraction(-1)}
    for t, (key, es) in enumerate(sorted(classes.items())):
        for i, j in es:
            K[i][j] = K[j][i] = {k_blk.index(t): Fraction(1)}
    return lam, K, group, classes, k_blk


def _kernel_form(n: int, r: int, K) -> dict:
    coef: dict = {}
    for g, _, i, j, w in _form_terms(n, r):
        row = coef.setdefault(g, {})
        for var, c in K[i][j].items():
            row[var] = row.get(var, 0) + w * c
    return coef


def _kernel_values(n: int, K, x) -> np.ndarray:
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = sum(float(c) * (1.0 if v is None else x[v]) for v, c in K[i][j].items())
    return out


def _graph_report(kind, G, r, value, status, res_eq, res_psd, t0, cert, message) -> BoundReport:
    return BoundReport(kind, G.n, r, r, "", value, status, res_eq, res_psd, DEFAULT_SEED,
                       (time.perf_counter() - t0) * 1000.0, cert, message)


def gamma_r(G: FiniteGraph, r: int, symmetry: bool = True, tol: float = conic.DEFAULT_TOL,
            coef_tol: float = 1e-7) -> BoundReport:
    """LP bound: minimize ``lambda`` with the graph kernel in ``C_r``.

    The optimal kernel is re-checked by expanding the form with the kernel
    entries converted exactly to rationals.
    """
    t0 = time.perf_counter()
    b = ProgramBuilder()
    lam, K, group, _, _ = _kernel_variables(G, b, symmetry)
    index = OrbitIndex(group)
    form = _kernel_form(G.n, r, K)
    seen = {}
    for g in compositions(r + 2, G.n):
        seen.setdefault(index.canonical(g), g)
    slack = b.add_block(NONNEG, len(seen), "slack")
    for t, (_, g) in enumerate(sorted(seen.items(), key=lambda kv: grlex_key(kv[0]))):
        row = {v: float(c) for v, c in form[g].items() if v is not None and c}
        row[slack.index(t)] = -1.0
        b.add_equality(row, -float(form[g].get(None, 0)))
    b.set_objective({lam: 1.0})
    prog = b.build()
    sol = conic.solve(prog, tol=tol)
    return _finish_graph("gamma", G, r, prog, sol, K, t0, coef_tol, lp=True)


def nu_r(G: FiniteGraph, r: int, symmetry: bool = True, tol: float = conic.DEFAULT_TOL,
         coef_tol: float = 1e-7) -> BoundReport:
    """SDP bound: minimize ``lambda`` with the graph kernel in ``Q_r``."""
    t0 = time.perf_counter()
    b = ProgramBuilder()
    lam, K, group, _, _ = _kernel_variables(G, b, symmetry)
    _encode_qr(b, G.n, r, _kernel_form(G.n, r, K), group)
    b.set_objective({lam: 1.0})
    prog = b.build()
    sol = conic.solve(prog, tol=tol)
    return _finish_graph("nu", G, r, prog, sol, K, t0, coef_tol, lp=False)


def _finish_graph(kind, G, r, prog, sol, K, t0, coef_tol, lp: bool) -> BoundReport:
    name = f"graph-{kind}"
    if sol.status == conic.OPTIMAL:
        res = conic.verify(prog, sol)
        Kval = _kernel_values(G.n, K, sol.x)
        cert = {"kernel": Kval.tolist()}
        message = sol.message
        status, value = OPTIMAL, float(sol.objective)
        if lp:
            # exact re-check: every coefficient of the form must be >= -coef_tol
            coef = cr_coefficients([[Fraction(v) for v in row] for row in Kval], r)
            worst = float(min(coef.values()))
            cert["min_coefficient"] = worst
            if worst < -coef_tol:
                status, value = "verification-failed", None
                message = f"coefficient {worst:.3e} < 0 after exact expansion"
        if res.equality > 1e-6 or res.psd_floor < -1e-7:
            status, value = "verification-failed", None
            message = f"residuals {res.equality:.2e}, PSD floor {res.psd_floor:.2e}"
        return _graph_report(name, G, r, value, status, res.equality, res.psd_floor, t0, cert, message)
    if sol.status == conic.PRIMAL_INFEASIBLE:
        if sol.certificate is not None and conic.check_primal_ray(prog, sol.certificate):
            return _graph_report(name, G, r, None, INFEASIBLE, None, None, t0,
                                 {"farkas": np.asarray(sol.certificate).tolist()}, "Farkas ray verified")
        return _graph_report(name, G, r, None, NUMERICAL_LIMIT, None, None, t0, None,
                             "Farkas ray failed re-check")
    if sol.status == conic.DUAL_INFEASIBLE:
        return _graph_report(name, G, r, None, UNBOUNDED, None, None, t0, None, sol.message)
    return _graph_report(name, G, r, None, NUMERICAL_LIMIT, None, None, t0, None, sol.message)
