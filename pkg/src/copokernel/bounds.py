"""Upper bounds for spherical codes from the level-0/1/2 kernel programs.

Level 0 is the Delsarte linear programming bound written with an SOS
certificate on ``[-1, cos theta]``.  Levels 1 and 2 add a 2-PSD kernel
``F`` built from Gram blocks ``C_i`` and extended Gegenbauer polynomials of
the inner products of ``r + 2`` points, and ask for

    phi(pairwise inner products) - sigma(F)  to be SOS    (with weights)
    -1 - phi(s)                             >= 0 on [-1, cos theta]

while minimizing ``phi(1) + 1``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from decimal import ROUND_CEILING, Decimal
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import conic
from .conic import FREE, NONNEG, PSD, ConicProgram, ProgramBuilder
from .gegenbauer import extended_gegenbauer, normalized_gegenbauer
from .poly import (
    Polynomial,
    VariableSet,
    chebyshev_values,
    level_variable_permutations,
    monomials_within,
    to_chebyshev,
)
from .sosgram import (
    CHEBYSHEV,
    MONOMIAL,
    AffinePolynomial,
    basis_product,
    convert,
    GramCertificate,
    SosEncoding,
    SosTemplate,
    certificate,
    encode,
    interval_template,
    orbit_residuals,
)

DEFAULT_DEGREES = {0: 24, 1: 12, 2: 4}
MIN_DIMENSION = {0: 3, 1: 3, 2: 4}
DEFAULT_SEED = 20240917
DEFAULT_SAMPLES = 10_000
EQ_TOL = 1e-4
PSD_FLOOR = -1e-8

# report statuses
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_LIMIT = "numerical-limit"
VERIFICATION_FAILED = "verification-failed"


def parse_cos_theta(value) -> Fraction:
    """Exact parse of ``"1/2"``, ``"0.5"``, ints or Fractions (floats are taken exactly)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


@dataclass(frozen=True)
class BoundSpec:
    n: int
    level: int
    N: int | None = None
    cos_theta: Fraction = Fraction(1, 2)

    def __post_init__(self):
        if self.level not in DEFAULT_DEGREES:
            raise ValueError(f"level must be 0, 1 or 2 (got {self.level})")
        if self.n < MIN_DIMENSION[self.level]:
            raise ValueError(f"level {self.level} needs n >= {MIN_DIMENSION[self.level]} (got n = {self.n})")
        if self.N is None:
            object.__setattr__(self, "N", DEFAULT_DEGREES[self.level])
        if self.N < 1:
            raise ValueError("N must be >= 1")
        c = parse_cos_theta(self.cos_theta)
        if not -1 < c < 1:
            raise ValueError("cos theta must lie in (-1, 1)")
        object.__setattr__(self, "cos_theta", c)

    @property
    def alpha(self) -> Fraction:
        """Gegenbauer order ``(n - r)/2 - 1``."""
        return Fraction(self.n - self.level, 2) - 1

    @property
    def problem(self) -> str:
        return "kissing" if self.cos_theta == Fraction(1, 2) else "spherical-code"


# ---------------------------------------------------------------------------
# kernel expansion


@dataclass(frozen=True)
class KernelPart:
    """One Gram block of ``F``: ``weight * E_i * sum_pq C[p,q] left[p] right[q]``."""

    i: int
    tag: str  # "C" (level 1), "C1"/"C2" (level 2)
    weight: Polynomial
    left: tuple
    right: tuple
    expansion: Polynomial  # extended Gegenbauer E_i

    @property
    def size(self) -> int:
        return len(self.left)

    @property
    def name(self) -> str:
        return f"{self.tag}{self.i}"


def _level_wiring(level: int):
    """``(W, R, left-variable indices, right-variable indices, shared index)``."""
    vs = VariableSet.for_level(level)
    P = [Polynomial.variable(vs, k) for k in range(len(vs))]
    one = Polynomial.constant(vs, 1)
    if level == 1:
        u, v, t = P
        return vs, u - v * t, (one - v * v) * (one - t * t)
    u, a1, a2, b1, b2, w = P
    det = one - w * w
    # adj(Z) = [[1, -w], [-w, 1]]
    def form(x1, x2, y1, y2):
        return x1 * y1 - w * x1 * y2 - w * x2 * y1 + x2 * y2

    W = u * det - form(a1, a2, b1, b2)
    A = det - form(a1, a2, a1, a2)
    B = det - form(b1, b2, b1, b2)
    return vs, W, A * B


def _fits(mono, extra_total, extra_per, total_cap, per_cap) -> bool:
    if sum(mono) + extra_total > total_cap:
        return False
    return all(e + x <= per_cap for e, x in zip(mono, extra_per))


@lru_cache(maxsize=None)
def kernel_parts(level: int, alpha: Fraction, N: int) -> tuple:
    """Gram-block shapes of the level-``level`` kernel, truncated by the degree caps.

    A left/right basis pair is kept when its diagonal product
    ``left[p] * right[p] * weight * E_i`` fits both caps; cross products then
    fit automatically.
    """
    if level not in (1, 2):
        raise ValueError("kernel expansion exists for levels 1 and 2")
    vs, W, R = _level_wiring(level)
    nv = len(vs)
    one = Polynomial.constant(vs, 1)
    total_cap, per_cap = (2 * N, N) if level == 1 else (4 * N, 2 * N)
    parts = []
    for i in range(N + 1):
        E = extended_gegenbauer(i, alpha, W, R)
        if level == 1:
            weights = [("C", one)]
            # v^a on the left, t^a on the right
            cands = [((0, a, 0), (0, 0, a)) for a in range(per_cap + 1)]
        else:
            w = Polynomial.variable(vs, 5)
            weights = [("C1", one), ("C2", one - w * w)]
            cands = []
            for e, k1, k2 in monomials_within(3, total_cap):
                cands.append(((0, k1, k2, 0, 0, e), (0, 0, 0, k1, k2, e)))
            cands.sort(key=lambda lr: (sum(lr[0]), lr[0]))
        for tag, wt in weights:
            WE = wt * E
            if WE.is_zero():
                continue
            ext_total = WE.total_degree()
            ext_per = WE.max_degrees()
            left, right = [], []
            for L, Rm in cands:
                diag = tuple(a + b for a, b in zip(L, Rm))
                if _fits(diag, ext_total, ext_per, total_cap, per_cap):
                    left.append(L)
                    right.append(Rm)
            if left:
                parts.append(KernelPart(i, tag, wt, tuple(left), tuple(right), E))
    return tuple(parts)


@dataclass
class KernelExpansion:
    """``F = sum_parts weight * E_i * b(left)^T C b(right)`` with ``b`` the
    monomial or tensor-Chebyshev basis elements named by the exponent tuples."""

    level: int
    alpha: Fraction
    N: int
    parts: tuple
    basis: str = CHEBYSHEV
    blocks: tuple = ()
    sigma_F: AffinePolynomial | None = None

    def evaluate(self, matrices: Sequence[np.ndarray], points: np.ndarray) -> np.ndarray:
        """``F`` (not symmetrized) at ``points`` of shape ``(..., nvars)``."""
        pts = np.asarray(points, dtype=float)
        out = np.zeros(pts.shape[:-1])
        for part, C in zip(self.parts, matrices):
            L = _eval_basis(part.left, pts, self.basis)
            Rv = _eval_basis(part.right, pts, self.basis)
            quad = np.einsum("...p,pq,...q->...", L, C, Rv)
            out += quad * (part.weight * part.expansion).evaluate(pts)
        return out

    def evaluate_sigma(self, matrices, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        perms = level_variable_permutations(self.level)
        acc = np.zeros(pts.shape[:-1])
        for perm in perms:
            acc += self.evaluate(matrices, pts[..., list(perm)])
        return acc / len(perms)


def _eval_basis(monos, pts, basis) -> np.ndarray:
    E = np.array(monos, dtype=int)
    out = np.ones(pts.shape[:-1] + (len(monos),))
    for k in range(pts.shape[-1]):
        col = E[:, k]
        if not np.any(col):
            continue
        if basis == CHEBYSHEV:
            out = out * chebyshev_values(pts[..., k], int(col.max()))[..., col]
        else:
            out = out * pts[..., k, None] ** col
    return out


def _kernel_terms(part: KernelPart, p: int, q: int, WE: Polynomial, basis: str) -> dict:
    """Coefficients of ``b(left_p) b(right_q) * WE`` in ``basis``."""
    out: dict = {}
    for m, c in basis_product(part.left[p], part.right[q], basis):
        for wm, wc in WE.items():
            for mm, c2 in basis_product(m, wm, basis):
                out[mm] = out.get(mm, 0) + c * wc * c2
    return out


def kernel_expansion(level: int, alpha, N: int, builder: ProgramBuilder | None = None,
                     basis: str = CHEBYSHEV) -> KernelExpansion:
    """Shapes of ``F``; with a builder, also add the blocks and assemble ``sigma(F)``."""
    alpha = Fraction(alpha)
    parts = kernel_parts(level, alpha, N)
    kx = KernelExpansion(level, alpha, N, parts, basis)
    if builder is None:
        return kx
    vs = VariableSet.for_level(level)
    F = AffinePolynomial(vs, basis=basis)
    blocks = []
    for part in parts:
        blk = builder.add_block(PSD, part.size, name=part.name)
        blocks.append(blk)
        WE = convert(part.weight * part.expansion, MONOMIAL, basis)
        for p in range(part.size):
            for q in range(p, part.size):
                idx = blk.index(p, q)
                for m, c in _kernel_terms(part, p, q, WE, basis).items():
                    F._acc(m, idx, c)
                if p != q:
                    for m, c in _kernel_terms(part, q, p, WE, basis).items():
                        F._acc(m, idx, c)
    kx.blocks = tuple(blocks)
    kx.sigma_F = F.symmetrize(level)
    return kx


def _madd(a, b):
    return tuple(x + y for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# program assembly


@dataclass
class BuiltBound:
    spec: BoundSpec
    program: ConicProgram
    scalars: conic.Block  # a_k (level 0) or phi coefficients
    interval: SosEncoding
    main: SosEncoding | None = None
    kernel: KernelExpansion | None = None
    build_seconds: float = 0.0
    basis: str = CHEBYSHEV


def _phi_affine(vs: VariableSet, label: int, phi_blk: conic.Block, degree: int, basis: str) -> AffinePolynomial:
    """``phi(x_label) = sum_k phi_k b_k(x_label)`` with ``b_k`` = ``T_k`` or ``x**k``."""
    out = AffinePolynomial(vs, basis=basis)
    for k in range(degree + 1):
        m = [0] * len(vs)
        m[label] = k
        out.terms.setdefault(tuple(m), {})[phi_blk.index(k)] = Fraction(1)
    return out


def _gegenbauer_in(alpha, k: int, vs: VariableSet, basis: str) -> Polynomial:
    return convert(Polynomial.univariate(vs, normalized_gegenbauer(alpha, k).coeffs), MONOMIAL, basis)


def build_q0(spec: BoundSpec, basis: str = CHEBYSHEV) -> BuiltBound:
    if spec.level != 0:
        raise ValueError("build_q0 needs level 0")
    t0 = time.perf_counter()
    N = spec.N
    vs = VariableSet.for_level(0)
    b = ProgramBuilder()
    a = b.add_block(NONNEG, N, name="a")
    target = AffinePolynomial.from_polynomial(Polynomial.constant(vs, -1), basis=basis)
    for k in range(1, N + 1):
        target.add_polynomial(_gegenbauer_in(spec.alpha, k, vs, basis), a.index(k - 1), -1)
    tmpl = interval_template(vs, -1, spec.cos_theta, N, name="interval", basis=basis)
    enc = encode(tmpl, b, target)
    b.set_objective({a.index(k): 1.0 for k in range(N)}, constant=1.0)
    return BuiltBound(spec, b.build(), a, enc, build_seconds=time.perf_counter() - t0, basis=basis)


def _build_kernel_level(spec: BoundSpec, basis: str) -> BuiltBound:
    t0 = time.perf_counter()
    r, N = spec.level, spec.N
    deg_phi = 2 * N if r == 1 else 4 * N
    total_cap, per_cap = (2 * N, N) if r == 1 else (4 * N, 2 * N)
    b = ProgramBuilder()
    phi = b.add_block(FREE, deg_phi + 1, name="phi")

    # (a)  -1 - phi(s) >= 0 on [-1, cos theta]
    v0 = VariableSet.for_level(0)
    ta = AffinePolynomial.from_polynomial(Polynomial.constant(v0, -1), basis=basis)
    ta.add_affine(_phi_affine(v0, 0, phi, deg_phi, basis), -1)
    tmpl_a = interval_template(v0, -1, spec.cos_theta, deg_phi, name="interval", basis=basis)
    enc_a = encode(tmpl_a, b, ta)

    # (b)  sum_pairs phi - sigma(F) is a (weighted) SOS
    vs = VariableSet.for_level(r)
    kx = kernel_expansion(r, spec.alpha, N, b, basis)
    tb = AffinePolynomial(vs, basis=basis)
    for k in range(len(vs)):
        tb.add_affine(_phi_affine(vs, k, phi, deg_phi, basis))
    tb.add_affine(kx.sigma_F, -1)
    one = Polynomial.constant(vs, 1)
    if r == 1:
        v = Polynomial.variable(vs, 1)
        weights = (one, one - v * v)
    else:
        weights = (one,)
    tmpl = SosTemplate.from_caps(vs, weights, total_cap, per_cap, symmetry=r, name="sos", basis=basis)
    enc_b = encode(tmpl, b, tb)

    # phi(1) = sum_k phi_k in both bases (T_k(1) = 1)
    b.set_objective({phi.index(k): 1.0 for k in range(deg_phi + 1)}, constant=1.0)
    return BuiltBound(spec, b.build(), phi, enc_a, enc_b, kx, time.perf_counter() - t0, basis)


def build_q1(spec: BoundSpec, basis: str = CHEBYSHEV) -> BuiltBound:
    if spec.level != 1:
        raise ValueError("build_q1 needs level 1")
    return _build_kernel_level(spec, basis)


def build_q2(spec: BoundSpec, basis: str = CHEBYSHEV) -> BuiltBound:
    if spec.level != 2:
        raise ValueError("build_q2 needs level 2")
    return _build_kernel_level(spec, basis)


def build(spec: BoundSpec, basis: str = CHEBYSHEV) -> BuiltBound:
    return (build_q0, build_q1, build_q2)[spec.level](spec, basis)


# ---------------------------------------------------------------------------
# certificates and reports


@dataclass
class BoundCertificate:
    level: int
    n: int
    N: int
    cos_theta: Fraction
    scalars: list  # a_1..a_N (level 0) or phi_0..phi_deg
    kernel: list  # one matrix per kernel part (levels 1, 2)
    interval: GramCertificate
    main: GramCertificate | None = None
    basis: str = CHEBYSHEV  # of phi, the kernel blocks and the Gram bases

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "level": self.level,
            "n": self.n,
            "N": self.N,
            "cos_theta": str(self.cos_theta),
            "scalars": [float(x) for x in self.scalars],
            "kernel": [np.asarray(C).tolist() for C in self.kernel],
            "interval": self.interval.to_dict(),
            "main": self.main.to_dict() if self.main is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundCertificate":
        return cls(
            d["level"], d["n"], d["N"], Fraction(d["cos_theta"]),
            list(d["scalars"]),
            [np.array(C, dtype=float) for C in d["kernel"]],
            GramCertificate.from_dict(d["interval"]),
            GramCertificate.from_dict(d["main"]) if d.get("main") else None,
            d.get("basis", CHEBYSHEV),
        )


REPORT_FIELDS = ("problem", "n", "level", "N", "cos_theta", "value", "status",
                 "residual_eq", "residual_psd", "seed", "wall_ms")


@dataclass
class BoundReport:
    problem: str
    n: int
    level: int
    N: int
    cos_theta: str
    value: float | None
    status: str
    residual_eq: float | None
    residual_psd: float | None
    seed: int
    wall_ms: float
    certificate: dict | None = None
    message: str = ""

    @property
    def spec(self) -> BoundSpec:
        return BoundSpec(self.n, self.level, self.N, Fraction(self.cos_theta))

    def display_value(self) -> str:
        if self.value is None:
            return self.status
        return f"{round_up(self.value):.2f}"

    def row(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_FIELDS}

    def to_json(self, include_certificate: bool = True) -> str:
        d = asdict(self)
        if not include_certificate:
            d.pop("certificate")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        d = json.loads(text)
        d.setdefault("certificate", None)
        d.setdefault("message", "")
        return cls(**d)


def round_up(x: float, digits: int = 2) -> float:
    """Round up at ``digits`` decimals.

    Relative solver noise (below about 1e-8) is removed first by keeping 8
    significant digits, so that 240.0000011 shows as 240.00 and not 240.01.
    """
    if not math.isfinite(x):
        return x
    d = Decimal(f"{x:.8g}") if abs(x) >= 1 else Decimal(repr(round(x, 8)))
    return float(d.quantize(Decimal(1).scaleb(-digits), rounding=ROUND_CEILING))


def reports_to_csv(reports: Sequence[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: ("" if v is None else v) for k, v in r.row().items()})
    return buf.getvalue()


def reports_from_csv(text: str) -> list:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        def num(x, typ=float):
            return None if x == "" else typ(x)
        out.append(BoundReport(
            row["problem"], int(row["n"]), int(row["level"]), int(row["N"]), row["cos_theta"],
            num(row["value"]), row["status"], num(row["residual_eq"]), num(row["residual_psd"]),
            int(row["seed"]), float(row["wall_ms"]),
        ))
    return out


def extract_certificate(built: BuiltBound, sol: conic.ConicSolution) -> BoundCertificate:
    spec = built.spec
    scalars = sol.block_value(built.scalars).tolist()
    kernel = []
    if built.kernel is not None:
        kernel = [sol.block_value(blk) for blk in built.kernel.blocks]
    return BoundCertificate(
        spec.level, spec.n, spec.N, spec.cos_theta, scalars, kernel,
        certificate(built.interval, sol),
        certificate(built.main, sol) if built.main is not None else None,
        built.basis,
    )


@dataclass
class BoundVerification:
    ok: bool
    residual_eq: float
    residual_psd: float
    samples: int
    seed: int
    worst_interval: float = 0.0  # max of phi(s) + 1 over sampled s <= cos theta
    worst_sos: float = 0.0  # min of (LHS - sigma F) / scale over sampled tuples
    failures: list = field(default_factory=list)


def _sphere_tuples(rng, n: int, k: int, count: int) -> np.ndarray:
    """``count`` tuples of ``k`` unit vectors in R^n.

    Half are uniform on the sphere; the other half lie on random great
    spheres of dimension ``k - 1`` so that inner products spread over
    [-1, 1] even for large n.
    """
    half = count // 2
    X = rng.standard_normal((count, k, n))
    if count - half:
        basis = np.linalg.qr(rng.standard_normal((count - half, n, k)))[0]  # (m, n, k)
        coords = rng.standard_normal((count - half, k, k))
        X[half:] = np.einsum("mij,mkj->mki", basis, coords)
    X /= np.linalg.norm(X, axis=-1, keepdims=True)
    return X


def _pair_values(X: np.ndarray, level: int) -> np.ndarray:
    vs = VariableSet.for_level(level)
    cols = [np.einsum("mi,mi->m", X[:, i], X[:, j]) for i, j in vs.pairs]
    return np.clip(np.stack(cols, axis=-1), -1.0, 1.0)


def _phi_values(cert: "BoundCertificate", s: np.ndarray) -> np.ndarray:
    """The univariate function constrained to be <= -1 on [-1, cos theta]."""
    s = np.asarray(s, dtype=float)
    if cert.level == 0:
        alpha = Fraction(cert.n, 2) - 1
        out = np.zeros_like(s)
        for k, a in enumerate(cert.scalars, start=1):
            out += float(a) * normalized_gegenbauer(alpha, k)(s)
        return out
    c = np.asarray(cert.scalars, dtype=float)
    if cert.basis == CHEBYSHEV:
        return np.polynomial.chebyshev.chebval(s, c)
    return np.polynomial.polynomial.polyval(s, c)


def _float_poly(vs, terms: dict) -> Polynomial:
    return Polynomial(vs, {m: float(c) for m, c in terms.items()})


def expected_targets(cert: BoundCertificate):
    """Rebuild both SOS targets (in the certificate basis) from the certificate data."""
    basis = cert.basis
    v0 = VariableSet.for_level(0)
    if cert.level == 0:
        alpha = Fraction(cert.n, 2) - 1
        ta: dict = {(0,): -1.0}
        for k, a in enumerate(cert.scalars, start=1):
            for m, c in _gegenbauer_in(alpha, k, v0, basis).items():
                ta[m] = ta.get(m, 0.0) - float(a) * float(c)
        return _float_poly(v0, ta), None
    phi = np.asarray(cert.scalars, dtype=float)
    ta = {(k,): -c for k, c in enumerate(phi)}
    ta[(0,)] = ta.get((0,), 0.0) - 1.0
    vs = VariableSet.for_level(cert.level)
    alpha = Fraction(cert.n - cert.level, 2) - 1
    parts = kernel_parts(cert.level, alpha, cert.N)
    F: dict = {}
    for part, C in zip(parts, cert.kernel):
        WE = convert(part.weight * part.expansion, MONOMIAL, basis)
        WE = [(m, float(c)) for m, c in WE.items()]
        for p in range(part.size):
            for q in range(part.size):
                cpq = float(C[p, q])
                if not cpq:
                    continue
                for m, c1 in basis_product(part.left[p], part.right[q], basis):
                    for wm, wc in WE:
                        for mm, c2 in basis_product(m, wm, basis):
                            F[mm] = F.get(mm, 0.0) + cpq * float(c1) * wc * float(c2)
    perms = level_variable_permutations(cert.level)
    tb: dict = {}
    for perm in perms:
        for m, c in F.items():
            new = [0] * len(m)
            for k, e in enumerate(m):
                new[perm[k]] = e
            new = tuple(new)
            tb[new] = tb.get(new, 0.0) - c / len(perms)
    for k in range(len(vs)):
        for d, c in enumerate(phi):
            m = [0] * len(vs)
            m[k] = d
            m = tuple(m)
            tb[m] = tb.get(m, 0.0) + c
    return _float_poly(v0, ta), _float_poly(vs, tb)


def verify_certificate(cert: BoundCertificate, samples: int = DEFAULT_SAMPLES, seed: int = DEFAULT_SEED,
                       eq_tol: float = EQ_TOL, psd_floor: float = PSD_FLOOR) -> BoundVerification:
    """Independent re-check of a bound certificate.

    (a) PSD floors of all Gram and kernel blocks (and ``a_k >= 0`` at level 0);
    (b) orbit residuals of both identities, with targets rebuilt from the
        certificate scalars;
    (c) sampling of point tuples on the sphere.
    """
    failures = []
    mats = [G for G in cert.interval.matrices if G.size]
    if cert.main is not None:
        mats += [G for G in cert.main.matrices if G.size]
    mats += [C for C in cert.kernel if C.size]
    psd = min((float(np.linalg.eigvalsh(0.5 * (G + G.T))[0]) for G in mats), default=0.0)
    if cert.level == 0 and cert.scalars:
        psd = min(psd, float(min(cert.scalars)))
    if psd < psd_floor:
        failures.append(f"PSD floor {psd:.3e} < {psd_floor:.0e}")

    ta, tb = expected_targets(cert)
    ia = cert.interval
    ia = GramCertificate(ia.vars, ia.weights, ia.bases, ia.matrices, ta, None, ia.basis)
    res = max(orbit_residuals(ia).values(), default=0.0)
    if cert.main is not None:
        m = cert.main
        ib = GramCertificate(m.vars, m.weights, m.bases, m.matrices, tb, m.symmetry, m.basis)
        res = max(res, max(orbit_residuals(ib).values(), default=0.0))
    if res > eq_tol:
        failures.append(f"equality residual {res:.3e} > {eq_tol:.0e}")

    rng = np.random.default_rng(seed)
    X = _sphere_tuples(rng, cert.n, cert.level + 2, samples)
    vals = _pair_values(X, cert.level)
    phi_vals = _phi_values(cert, vals)
    mask = vals <= float(cert.cos_theta)
    worst_interval = float(np.max(phi_vals[mask] + 1.0, initial=-np.inf))
    if worst_interval > 1e-6:
        failures.append(f"phi(s) = {worst_interval - 1:.6f} > -1 at a sampled s <= cos theta")
    worst_sos = 0.0
    if cert.level >= 1:
        alpha = Fraction(cert.n - cert.level, 2) - 1
        kx = KernelExpansion(cert.level, alpha, cert.N, kernel_parts(cert.level, alpha, cert.N), cert.basis)
        sig = kx.evaluate_sigma(cert.kernel, vals)
        lhs = phi_vals.sum(axis=-1)
        scale = 1.0 + np.abs(lhs) + np.abs(sig)
        rel = (lhs - sig) / scale
        worst_sos = float(rel.min(initial=np.inf))
        if worst_sos < -1e-6:
            j = int(np.argmin(rel))
            failures.append(f"sum phi - sigma(F) = {lhs[j] - sig[j]:.3e} at inner products {vals[j].round(6).tolist()}")
    return BoundVerification(not failures, float(res), float(psd), samples, seed,
                             worst_interval, worst_sos, failures)


def verify_bound(report: BoundReport, samples: int = DEFAULT_SAMPLES, seed: int | None = None) -> BoundVerification:
    if report.certificate is None:
        raise ValueError("report carries no certificate")
    cert = BoundCertificate.from_dict(report.certificate)
    return verify_certificate(cert, samples, report.seed if seed is None else seed)


def _delsarte_margin(cert: BoundCertificate, grid: int = 200001, slack: float = 1e-7) -> tuple:
    """Rescale a level-0 certificate so that ``phi <= -1`` holds with margin.

    Floating-point equality residuals of order 1e-6 on coefficients of size
    1e4 can leave ``max phi + 1`` slightly positive on the interval.  With
    ``e`` that excess, ``a -> (1 + eps) a`` for ``eps = 2e`` restores
    ``phi <= -1``, keeps ``a >= 0``, and maps the Gram identity to
    ``(1 + eps) * (old identity) + eps``; the constant is absorbed in the
    constant-by-constant entry of the first Gram block.  Returns the new
    certificate and ``eps`` (0 when the excess is at most ``slack``).
    """
    s = np.linspace(-1.0, float(cert.cos_theta), grid)
    excess = float(np.max(_phi_values(cert, s)) + 1.0)
    if excess <= slack:
        return cert, 0.0
    eps = 2.0 * excess
    ia = cert.interval
    mats = [np.asarray(G, dtype=float) * (1.0 + eps) for G in ia.matrices]
    const = (0,) * len(ia.vars)
    basis0 = list(ia.bases[0])
    if const not in basis0:
        return cert, 0.0
    k = basis0.index(const)
    mats[0] = mats[0].copy()
    mats[0][k, k] += eps
    interval = GramCertificate(ia.vars, ia.weights, ia.bases, mats, ia.target, ia.symmetry, ia.basis)
    scalars = [(1.0 + eps) * float(a) for a in cert.scalars]
    return BoundCertificate(cert.level, cert.n, cert.N, cert.cos_theta, scalars, cert.kernel,
                            interval, cert.main, cert.basis), eps


def _psd_trace(prog: conic.ConicProgram, x: np.ndarray) -> float:
    return float(sum(np.trace(conic.unpack_psd(x[b.offset:b.offset + b.size], b.dim))
                     for b in prog.blocks if b.kind == conic.PSD))


def _attempt(spec, built, program, sol, samples, seed, keep_certificate):
    """Turn one solver run into (status, value, res_eq, res_psd, cert_dict, message)."""
    value = res_eq = res_psd = cert_dict = None
    message = sol.message
    if sol.status == conic.OPTIMAL or sol.status == conic.NUMERICAL_LIMIT:
        cert = extract_certificate(built, sol)
        objective = float(sol.objective)
        if spec.level == 0:
            cert, eps = _delsarte_margin(cert)
            if eps:
                objective = 1.0 + float(sum(cert.scalars))
                message += f"; coefficients rescaled by 1 + {eps:.2e} for an interval margin"
        ver = verify_certificate(cert, samples, seed)
        res_eq, res_psd = ver.residual_eq, ver.residual_psd
        cert_dict = cert.to_dict() if keep_certificate else None
        if sol.status == conic.OPTIMAL and ver.ok:
            return OPTIMAL, objective, res_eq, res_psd, cert_dict, message
        if sol.status == conic.OPTIMAL:
            return VERIFICATION_FAILED, None, res_eq, res_psd, cert_dict, "; ".join(ver.failures)
        if ver.ok:
            message += f"; best iterate verifies with value {objective:.6f}"
        return NUMERICAL_LIMIT, None, res_eq, res_psd, cert_dict, message
    if sol.status == conic.PRIMAL_INFEASIBLE:
        ok = sol.certificate is not None and conic.check_primal_ray(program, sol.certificate)
        if ok:
            return INFEASIBLE, None, None, None, None, "Farkas ray verified"
        return NUMERICAL_LIMIT, None, None, None, None, "Farkas ray failed re-check"
    return UNBOUNDED, None, None, None, None, message


# Fallback trace caps, as fractions of the trace the uncapped solve reached.
TRACE_CAP_FRACTIONS = (1 / 30, 1 / 300)


def solve_bound(spec: BoundSpec, tol: float = conic.DEFAULT_TOL, max_iter: int = conic.DEFAULT_MAX_ITER,
                seed: int = DEFAULT_SEED, samples: int = DEFAULT_SAMPLES, export_sdpa=None,
                keep_certificate: bool = True) -> BoundReport:
    """Build, solve and verify one bound.

    When the solver drifts to Gram matrices of very large norm the recovered
    certificate can miss the equality check.  The program is then re-solved
    with a cap on the total PSD trace.  Every capped point is feasible for the
    original program, so a verified capped value is still a valid bound.
    """
    t0 = time.perf_counter()
    built = build(spec)
    if export_sdpa is not None:
        conic.export_sdpa(built.program, export_sdpa)
    sol = conic.solve(built.program, tol=tol, max_iter=max_iter)
    status, value, res_eq, res_psd, cert_dict, message = _attempt(
        spec, built, built.program, sol, samples, seed, keep_certificate)
    if status in (VERIFICATION_FAILED, NUMERICAL_LIMIT) and sol.x is not None and sol.x.size:
        total = _psd_trace(built.program, sol.x)
        for frac in TRACE_CAP_FRACTIONS:
            cap = total * frac
            capped = conic.with_trace_cap(built.program, cap)
            csol = conic.solve(capped, tol=tol, max_iter=max_iter)
            got = _attempt(spec, built, capped, csol, samples, seed, keep_certificate)
            if got[0] == OPTIMAL:
                status, value, res_eq, res_psd, cert_dict, message = got
                message += f"; PSD trace capped at {cap:.4g} after an unverified uncapped solve"
                break
    wall = (time.perf_counter() - t0) * 1000.0
    return BoundReport(spec.problem, spec.n, spec.level, spec.N, str(spec.cos_theta), value, status,
                       res_eq, res_psd, seed, wall, cert_dict, message)


def sweep(n: int, level: int, cos_thetas: Sequence, N: int | None = None, **kwargs) -> list:
    """One bound per angle, in input order; failures are recorded per row."""
    out = []
    for c in cos_thetas:
        try:
            spec = BoundSpec(n, level, N, parse_cos_theta(c))
        except ValueError as exc:
            out.append(BoundReport("spherical-code", n, level, N or DEFAULT_DEGREES.get(level, 0), str(c),
                                   None, "invalid", None, None, kwargs.get("seed", DEFAULT_SEED), 0.0,
                                   None, str(exc)))
            continue
        out.append(solve_bound(spec, **kwargs))
    return out
