"""Block-structured LP/SDP programs and a dense primal-dual interior-point solver.

Primal form::

    minimize    <c, x> + c0
    subject to  A x = b,   x in K = R_+^{n_l} x R^{n_f} x S_+^{n_1} x ...

Entries of a PSD block are addressed by their upper triangle ``(i, j)``,
``i <= j``, and a coefficient ``a`` on ``(i, j)`` contributes ``a * X[i, j]``
(each off-diagonal entry is counted once).

The solver is a Mehrotra predictor-corrector method with Nesterov-Todd
scaling.  Free variables are kept out of the cone and handled through an
augmented KKT system.  Infeasibility is only reported together with a ray
that has been checked independently of the iteration.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

NONNEG, FREE, PSD = "nonneg", "free", "psd"
BLOCK_KINDS = (NONNEG, FREE, PSD)

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal-infeasible"
DUAL_INFEASIBLE = "dual-infeasible"
NUMERICAL_LIMIT = "numerical-limit"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


@dataclass(frozen=True)
class Block:
    kind: str
    dim: int
    offset: int
    name: str = ""

    @property
    def size(self) -> int:
        return self.dim * (self.dim + 1) // 2 if self.kind == PSD else self.dim

    def index(self, i: int, j: int | None = None) -> int:
        """Flat index of entry ``i`` (scalar blocks) or ``(i, j)`` (PSD)."""
        if self.kind != PSD:
            if j is not None:
                raise ValueError("scalar blocks take a single index")
            if not 0 <= i < self.dim:
                raise IndexError(i)
            return self.offset + i
        if j is None:
            raise ValueError("PSD entries need (i, j)")
        if i > j:
            i, j = j, i
        if not (0 <= i and j < self.dim):
            raise IndexError((i, j))
        return self.offset + i * self.dim - i * (i - 1) // 2 + (j - i)

    def triu(self) -> tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.dim)


class ProgramBuilder:
    """Mutable assembly of a :class:`ConicProgram`."""

    def __init__(self):
        self.blocks: list[Block] = []
        self._rows: list[dict] = []
        self._rhs: list[float] = []
        self._obj: dict = {}
        self.objective_constant = 0.0
        self._nvar = 0

    def add_block(self, kind: str, dim: int, name: str = "") -> Block:
        if kind not in BLOCK_KINDS:
            raise ValueError(f"unknown block kind {kind!r}")
        if dim < 0:
            raise ValueError("negative block dimension")
        blk = Block(kind, dim, self._nvar, name)
        self.blocks.append(blk)
        self._nvar += blk.size
        return blk

    @property
    def num_vars(self) -> int:
        return self._nvar

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    def add_equality(self, coefs: Mapping[int, float], rhs: float) -> int:
        row = {}
        for k, v in coefs.items():
            if not 0 <= k < self._nvar:
                raise IndexError(f"variable index {k} out of range")
            v = float(v)
            if v != 0.0:
                row[k] = row.get(k, 0.0) + v
        self._rows.append(row)
        self._rhs.append(float(rhs))
        return len(self._rows) - 1

    def set_objective(self, coefs: Mapping[int, float], constant: float = 0.0):
        self._obj = {int(k): float(v) for k, v in coefs.items() if v != 0}
        self.objective_constant = float(constant)

    def build(self) -> "ConicProgram":
        seen = {}
        rows, cols, vals, rhs = [], [], [], []
        for row, b in zip(self._rows, self._rhs):
            if not row and b == 0.0:
                continue
            key = (tuple(sorted(row.items())), b)
            if key in seen:
                continue
            seen[key] = len(rhs)
            r = len(rhs)
            for k, v in row.items():
                rows.append(r)
                cols.append(k)
                vals.append(v)
            rhs.append(b)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), self._nvar))
        c = np.zeros(self._nvar)
        for k, v in self._obj.items():
            c[k] = v
        return ConicProgram(tuple(self.blocks), A, np.array(rhs, dtype=float), c, self.objective_constant)


@dataclass(frozen=True)
class ConicProgram:
    blocks: tuple[Block, ...]
    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    objective_constant: float = 0.0

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_vars(self) -> int:
        return self.A.shape[1]

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def describe(self) -> str:
        psd = [b.dim for b in self.blocks if b.kind == PSD]
        nl = sum(b.dim for b in self.blocks if b.kind == NONNEG)
        nf = sum(b.dim for b in self.blocks if b.kind == FREE)
        return (f"{self.num_rows} equalities, {nl} nonneg, {nf} free, "
                f"{len(psd)} PSD blocks (max {max(psd, default=0)})")


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray  # flat primal vector (upper-triangle convention)
    y: np.ndarray
    objective: float
    dual_objective: float
    residuals: tuple[float, float, float]  # relative primal, dual, gap
    iterations: int
    wall_time: float = 0.0
    certificate: np.ndarray | None = None
    message: str = ""

    def block_value(self, blk: Block):
        seg = self.x[blk.offset: blk.offset + blk.size]
        if blk.kind != PSD:
            return seg.copy()
        return unpack_psd(seg, blk.dim)


def with_trace_cap(prog: ConicProgram, cap: float, name: str = "trace.slack") -> ConicProgram:
    """Add ``sum of PSD traces + t = cap`` with a fresh slack ``t >= 0``.

    Feasible points of the result are feasible for ``prog``, so any bound read
    off them stays valid.
    """
    nv = prog.num_vars
    row = np.zeros(nv + 1)
    for blk in prog.blocks:
        if blk.kind == PSD:
            for i in range(blk.dim):
                row[blk.index(i, i)] = 1.0
    row[nv] = 1.0
    A = sp.vstack([sp.hstack([prog.A, sp.csr_matrix((prog.num_rows, 1))]), sp.csr_matrix(row)]).tocsr()
    blocks = prog.blocks + (Block(NONNEG, 1, nv, name),)
    return ConicProgram(blocks, A, np.append(prog.b, cap), np.append(prog.c, 0.0), prog.objective_constant)


def unpack_psd(seg: np.ndarray, n: int) -> np.ndarray:
    X = np.zeros((n, n))
    iu = np.triu_indices(n)
    X[iu] = seg
    X[(iu[1], iu[0])] = seg
    return X


def pack_psd(X: np.ndarray) -> np.ndarray:
    return np.asarray(X)[np.triu_indices(X.shape[0])]


# ---------------------------------------------------------------------------
# internal representation


def _column_scale(A: sp.csc_matrix, blocks, rounds: int = 10) -> np.ndarray:
    """Ruiz-type max-norm column scaling, constant on every PSD block."""
    nv = A.shape[1]
    col = np.ones(nv)
    row = np.ones(A.shape[0])
    absA = abs(A).tocsc()
    groups = []
    for blk in blocks:
        if blk.kind == PSD and blk.size:
            groups.append(np.arange(blk.offset, blk.offset + blk.size))
    if not absA.nnz:
        return col
    for _ in range(rounds):
        M = sp.diags(row) @ absA @ sp.diags(col)
        rmax = np.asarray(M.max(axis=1).todense()).ravel()
        rmax[rmax == 0] = 1.0
        row = row / np.sqrt(rmax)
        M = sp.diags(row) @ absA @ sp.diags(col)
        cmax = np.asarray(M.max(axis=0).todense()).ravel()
        for g in groups:
            cmax[g] = cmax[g].max()
        cmax[cmax == 0] = 1.0
        col = col / np.sqrt(cmax)
    return np.clip(col, 1e-6, 1e6)


class _Data:
    """Scaled, block-split problem data used by the iteration."""

    def __init__(self, prog: ConicProgram):
        A = prog.A.tocsc()
        self.m = A.shape[0]
        lp_idx, free_idx = [], []
        self.psd = []
        for blk in prog.blocks:
            idx = np.arange(blk.offset, blk.offset + blk.size)
            if blk.kind == NONNEG:
                lp_idx.append(idx)
            elif blk.kind == FREE:
                free_idx.append(idx)
            elif blk.dim > 0:
                self.psd.append((blk, idx))
        self.lp_idx = np.concatenate(lp_idx) if lp_idx else np.zeros(0, dtype=int)
        self.free_idx = np.concatenate(free_idx) if free_idx else np.zeros(0, dtype=int)

        # column equilibration (one scalar per PSD block so the cone is kept),
        # then row equilibration
        self.col_scale = _column_scale(A, prog.blocks)
        A = (A @ sp.diags(self.col_scale)).tocsc()
        cvec = prog.c * self.col_scale
        full_norm2 = np.zeros(self.m)
        for blk, idx in self.psd:
            Ab = A[:, idx].tocoo()
            iu = np.triu_indices(blk.dim)
            off = (iu[0] != iu[1])[Ab.col]
            w = np.where(off, 0.5, 1.0)
            np.add.at(full_norm2, Ab.row, (Ab.data ** 2) * w)
        for idx in (self.lp_idx, self.free_idx):
            if len(idx):
                Ab = A[:, idx].tocoo()
                np.add.at(full_norm2, Ab.row, Ab.data ** 2)
        rn = np.sqrt(full_norm2)
        rn[rn == 0] = 1.0
        self.row_scale = 1.0 / rn
        Dr = sp.diags(self.row_scale)
        A = (Dr @ A).tocsc()
        b = prog.b * self.row_scale

        self.A_lp = A[:, self.lp_idx].tocsr()
        self.A_free = A[:, self.free_idx].toarray() if len(self.free_idx) else np.zeros((self.m, 0))
        self.c_lp = cvec[self.lp_idx].copy()
        self.c_free = cvec[self.free_idx].copy()
        self.psd_A = []  # (m x n^2) csr, symmetric-full vec
        self.psd_At = []
        self.psd_C = []
        for blk, idx in self.psd:
            n = blk.dim
            T = _triu_to_full(n)
            Af = (A[:, idx] @ T).tocsr()
            self.psd_A.append(Af)
            self.psd_At.append(Af.T.tocsr())
            self.psd_C.append((cvec[idx] @ T).reshape(n, n))

        normA = math.sqrt(max(1.0, float(sp.linalg.norm(A)) ** 2))
        self.b_scale = max(1.0, float(np.linalg.norm(b)))
        c_norm = math.sqrt(
            float(self.c_lp @ self.c_lp + self.c_free @ self.c_free)
            + sum(float(np.sum(C * C)) for C in self.psd_C)
        )
        self.c_scale = max(1.0, c_norm)
        self.b = b / self.b_scale
        self.c_lp = self.c_lp / self.c_scale
        self.c_free = self.c_free / self.c_scale
        self.psd_C = [C / self.c_scale for C in self.psd_C]
        self.c_norm = c_norm / self.c_scale
        self.normA = normA
        self.nu = len(self.lp_idx) + sum(blk.dim for blk, _ in self.psd)

        # row sparsity per PSD block, for the Schur complement
        self.psd_rows = []
        for Af in self.psd_A:
            nz = np.diff(Af.indptr)
            self.psd_rows.append(np.nonzero(nz)[0])

    # linear maps -----------------------------------------------------------
    def A_op(self, x_lp, x_free, Xs):
        out = self.A_lp @ x_lp if len(x_lp) else np.zeros(self.m)
        if x_free.size:
            out = out + self.A_free @ x_free
        for Af, X in zip(self.psd_A, Xs):
            out = out + Af @ X.ravel()
        return out

    def At_op(self, y):
        lp = self.A_lp.T @ y if self.A_lp.shape[1] else np.zeros(0)
        fr = self.A_free.T @ y
        mats = []
        for At, C in zip(self.psd_At, self.psd_C):
            n = C.shape[0]
            Z = (At @ y).reshape(n, n)
            mats.append(0.5 * (Z + Z.T))
        return lp, fr, mats


def _triu_to_full(n: int) -> sp.csr_matrix:
    """Map upper-triangle coordinates to the row-major full symmetric vec."""
    iu, ju = np.triu_indices(n)
    k = np.arange(len(iu))
    diag = iu == ju
    rows = np.concatenate([k[diag], k[~diag], k[~diag]])
    cols = np.concatenate([iu[diag] * n + ju[diag], iu[~diag] * n + ju[~diag], ju[~diag] * n + iu[~diag]])
    vals = np.concatenate([np.ones(diag.sum()), np.full((~diag).sum(), 0.5), np.full((~diag).sum(), 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(iu), n * n))


def _sym(M):
    return 0.5 * (M + M.T)


class _NT:
    """Nesterov-Todd scaling of one PSD block: ``W = G G^T``, ``V = diag(lam)``."""

    __slots__ = ("G", "Ginv", "W", "lam", "LX", "LS")

    def __init__(self, X, S):
        LX = _chol(X)
        LS = _chol(S)
        U, lam, Vt = np.linalg.svd(LS.T @ LX)
        lam = np.maximum(lam, 1e-300)
        rs = 1.0 / np.sqrt(lam)
        self.G = (LX @ Vt.T) * rs
        self.Ginv = (U.T @ LS.T) * rs[:, None]
        self.W = self.G @ self.G.T
        self.lam = lam
        self.LX = LX
        self.LS = LS


def _chol(X):
    try:
        return np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(_sym(X))
        w = np.maximum(w, 1e-14 * max(1.0, w.max()))
        return np.linalg.cholesky((Q * w) @ Q.T)


def _max_step(L, D):
    """Largest alpha with ``L L^T + alpha D`` PSD."""
    Z = sla.solve_triangular(L, D, lower=True)
    Z = sla.solve_triangular(L, Z.T, lower=True)
    lmin = np.linalg.eigvalsh(_sym(Z))[0]
    return math.inf if lmin >= 0 else -1.0 / lmin


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / dx[neg]))


# ---------------------------------------------------------------------------


def solve(prog: ConicProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          verbose: bool = False) -> ConicSolution:
    """Solve ``prog`` with a homogeneous self-dual interior-point method.

    The embedding adds ``tau, kappa >= 0`` so that every iterate is
    well-defined whether or not the program is feasible:

        A x = b tau,   A^T y + s = c tau,   b^T y - c^T x = kappa.

    ``optimal`` requires relative primal/dual infeasibility and relative gap of
    ``(x, y, s) / tau`` all below ``tol``.  ``primal-infeasible`` and
    ``dual-infeasible`` come with a ray (``certificate``) whose cone violation
    is below ``tol``; anything else ends as ``numerical-limit``.
    """
    t0 = time.perf_counter()
    trivial = _presolve_check(prog)
    if trivial is not None:
        trivial.wall_time = time.perf_counter() - t0
        return trivial
    if prog.num_rows == 0:
        return _solve_unconstrained(prog, t0)

    D = _Data(prog)
    m = D.m
    nl, nf = len(D.lp_idx), len(D.free_idx)
    dims = [C.shape[0] for C in D.psd_C]

    x_lp, s_lp = np.ones(nl), np.ones(nl)
    x_free = np.zeros(nf)
    Xs = [np.eye(n) for n in dims]
    Ss = [np.eye(n) for n in dims]
    y = np.zeros(m)
    tau = kappa = 1.0
    b_norm = float(np.linalg.norm(D.b))

    def cdot(a_lp, a_f, a_m):
        return (float(D.c_lp @ a_lp) + float(D.c_free @ a_f)
                + sum(float(np.sum(C * X)) for C, X in zip(D.psd_C, a_m)))

    status, message = NUMERICAL_LIMIT, "iteration limit"
    best = None
    polished = None
    polish_miss = 0
    since_best = 0
    cert = None
    res = (math.inf, math.inf, math.inf)
    it = 0
    for it in range(1, max_iter + 1):
        rp = D.b * tau - D.A_op(x_lp, x_free, Xs)
        aty_lp, aty_f, aty_m = D.At_op(y)
        rd_lp = D.c_lp * tau - aty_lp - s_lp
        rd_f = D.c_free * tau - aty_f
        rd_m = [C * tau - Z - S for C, Z, S in zip(D.psd_C, aty_m, Ss)]
        cx = cdot(x_lp, x_free, Xs)
        by = float(D.b @ y)
        rg = kappa + cx - by
        xs = float(x_lp @ s_lp) + sum(float(np.sum(X * S)) for X, S in zip(Xs, Ss))
        mu = (xs + tau * kappa) / (D.nu + 1)

        rd_norm = math.sqrt(float(rd_lp @ rd_lp + rd_f @ rd_f) + sum(float(np.sum(R * R)) for R in rd_m))
        # residuals of (x, y, s) / tau, normalized by the size of the iterate
        x_norm = math.sqrt(float(x_lp @ x_lp + x_free @ x_free) + sum(float(np.sum(X * X)) for X in Xs)) / tau
        ys_norm = math.sqrt(float(y @ y + s_lp @ s_lp) + sum(float(np.sum(S * S)) for S in Ss)) / tau
        relp = float(np.linalg.norm(rp)) / tau / max(1.0, b_norm + x_norm)
        reld = rd_norm / tau / max(1.0, D.c_norm + ys_norm)
        pobj, dobj = cx / tau, by / tau
        gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        res = (relp, reld, gap)
        merit = max(res)
        if verbose:
            log.info("it %3d  pobj %+.8e  dobj %+.8e  relp %.1e  reld %.1e  gap %.1e  |rp| %.1e  |x| %.1e  "
                     "tau %.1e  kappa %.1e  mu %.1e", it, pobj, dobj, relp, reld, gap,
                     float(np.linalg.norm(rp)) / tau, x_norm, tau, kappa, mu)
        if best is None or merit < best[0]:
            best = (merit, x_lp / tau, x_free / tau, [X / tau for X in Xs], y / tau, res)
            since_best = 0
        else:
            since_best += 1
        if merit <= tol:
            # keep polishing while the absolute residuals still shrink
            strict = max(float(np.linalg.norm(rp)) / tau / (1 + b_norm), rd_norm / tau / (1 + D.c_norm), gap)
            if polished is None or strict < polished[0]:
                polished = (strict, x_lp / tau, x_free / tau, [X / tau for X in Xs], y / tau, res)
                polish_miss = 0
            else:
                polish_miss += 1
            status, message = OPTIMAL, "converged"
            if strict <= tol or polish_miss >= 2 or it == max_iter:
                break
        elif polished is not None:
            polish_miss += 1
            if polish_miss >= 2:
                break
        if by > 0:
            cert = _primal_infeasibility_ray(D, y, tol)
            if cert is not None:
                status, message = PRIMAL_INFEASIBLE, "Farkas ray for the primal"
                break
        if cx < 0:
            cert = _dual_infeasibility_ray(D, x_lp, x_free, Xs, tol)
            if cert is not None:
                status, message = DUAL_INFEASIBLE, "improving primal ray"
                break
        if since_best >= 20 and polished is None:
            message = "stalled"
            break

        try:
            nts = [_NT(X, S) for X, S in zip(Xs, Ss)]
            w_lp = x_lp / s_lp
            g_lp = np.sqrt(w_lp)
            v_lp = np.sqrt(x_lp * s_lp)
            kkt = _KKTSolver(_assemble_kkt(D, nts, w_lp), m)
        except (np.linalg.LinAlgError, sla.LinAlgError, ValueError):
            message = "KKT factorization failed"
            break

        WCW = [nt.W @ C @ nt.W for nt, C in zip(nts, D.psd_C)]
        wc_lp = w_lp * D.c_lp
        q2 = D.b + (D.A_lp @ wc_lp if nl else 0)
        for Af, Z in zip(D.psd_A, WCW):
            q2 = q2 + Af @ Z.ravel()
        dy2, dxf2 = kkt.solve(q2, D.c_free)
        bq = 2 * D.b - q2  # b - A(W c W)
        cwc = float(D.c_lp @ wc_lp) + sum(float(np.sum(C * Z)) for C, Z in zip(D.psd_C, WCW))
        denom = float(bq @ dy2) - float(D.c_free @ dxf2) + cwc + kappa / tau

        def direction(eta, rc_lp, rc_m, rc_tau):
            hx_lp = g_lp * (rc_lp / v_lp)
            hx_m = []
            for nt, rc in zip(nts, rc_m):
                lam = nt.lam
                H = 2.0 * rc / (lam[:, None] + lam[None, :])
                hx_m.append(nt.G @ H @ nt.G.T)
            xb_lp = hx_lp - eta * w_lp * rd_lp
            xb_m = [hx - eta * (nt.W @ R @ nt.W) for hx, nt, R in zip(hx_m, nts, rd_m)]
            r1 = eta * rp - (D.A_lp @ xb_lp if nl else 0)
            for Af, Z in zip(D.psd_A, xb_m):
                r1 = r1 - Af @ Z.ravel()
            dy1, dxf1 = kkt.solve(r1, eta * rd_f)
            num = eta * rg + rc_tau / tau + cdot(xb_lp, np.zeros(nf), xb_m) - float(bq @ dy1) + float(D.c_free @ dxf1)
            dtau = num / denom
            dy = dy1 + dtau * dy2
            dxf = dxf1 + dtau * dxf2
            at_lp, _, at_m = D.At_op(dy)
            ds_lp = eta * rd_lp + D.c_lp * dtau - at_lp
            dx_lp = hx_lp - w_lp * ds_lp
            dS = [_sym(eta * R + C * dtau - Z) for R, C, Z in zip(rd_m, D.psd_C, at_m)]
            dX = [_sym(hx - nt.W @ d @ nt.W) for hx, nt, d in zip(hx_m, nts, dS)]
            dkappa = (rc_tau - kappa * dtau) / tau
            return dx_lp, ds_lp, dxf, dy, dX, dS, dtau, dkappa

        def step_length(dx_lp, ds_lp, dX, dS, dtau, dkappa):
            a = min(_max_step_lp(x_lp, dx_lp), _max_step_lp(s_lp, ds_lp))
            for nt, dx, ds in zip(nts, dX, dS):
                a = min(a, _max_step(nt.LX, dx), _max_step(nt.LS, ds))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        try:
            d_aff = direction(1.0, -x_lp * s_lp, [-np.diag(nt.lam ** 2) for nt in nts], -tau * kappa)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            message = "linear solve failed"
            break
        dx_lp, ds_lp, dxf, dy, dX, dS, dtau, dkappa = d_aff
        a = min(1.0, step_length(dx_lp, ds_lp, dX, dS, dtau, dkappa))
        mu_aff = (float((x_lp + a * dx_lp) @ (s_lp + a * ds_lp))
                  + sum(float(np.sum((X + a * dx) * (S + a * ds))) for X, S, dx, ds in zip(Xs, Ss, dX, dS))
                  + (tau + a * dtau) * (kappa + a * dkappa)) / (D.nu + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3 if mu > 0 else 0.0

        # corrector
        rc_lp = sigma * mu - x_lp * s_lp - dx_lp * ds_lp
        rc_m = []
        for nt, dx, ds in zip(nts, dX, dS):
            dxt = nt.Ginv @ dx @ nt.Ginv.T
            dst = nt.G.T @ ds @ nt.G
            corr = 0.5 * (dxt @ dst + dst @ dxt)
            rc_m.append(sigma * mu * np.eye(len(nt.lam)) - np.diag(nt.lam ** 2) - corr)
        rc_tau = sigma * mu - tau * kappa - dtau * dkappa
        try:
            dx_lp, ds_lp, dxf, dy, dX, dS, dtau, dkappa = direction(1.0 - sigma, rc_lp, rc_m, rc_tau)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            message = "linear solve failed"
            break
        a_max = step_length(dx_lp, ds_lp, dX, dS, dtau, dkappa)
        a = min(1.0, (0.9 + 0.09 * min(1.0, a_max)) * a_max)
        if not math.isfinite(a) or a < 1e-10:
            message = "step length collapsed"
            break

        x_lp = x_lp + a * dx_lp
        s_lp = s_lp + a * ds_lp
        x_free = x_free + a * dxf
        y = y + a * dy
        Xs = [_sym(X + a * d) for X, d in zip(Xs, dX)]
        Ss = [_sym(S + a * d) for S, d in zip(Ss, dS)]
        tau = tau + a * dtau
        kappa = kappa + a * dkappa
        # renormalize the homogeneous iterate to keep magnitudes near 1
        scale = max(tau, 1e-300) if tau > 1e6 or tau < 1e-6 and kappa < 1e-6 else 1.0
        if scale != 1.0:
            x_lp, s_lp, x_free, y = x_lp / scale, s_lp / scale, x_free / scale, y / scale
            Xs = [X / scale for X in Xs]
            Ss = [S / scale for S in Ss]
            tau, kappa = tau / scale, kappa / scale
        if not (np.all(np.isfinite(y)) and all(np.all(np.isfinite(X)) for X in Xs)):
            message = "non-finite iterate"
            break

    if polished is not None:
        status, message = OPTIMAL, "converged"
        _, x_lp, x_free, Xs, y, res = polished
        x_lp, x_free, Xs = _range_projection(D, x_lp, x_free, Xs)
    elif status == NUMERICAL_LIMIT and best is not None:
        _, x_lp, x_free, Xs, y, res = best
    sol = _unscale(prog, D, status, x_lp, x_free, Xs, y, res, it, cert, message)
    sol.wall_time = time.perf_counter() - t0
    return sol


def _range_projection(D: _Data, x_lp, x_free, Xs, rounds: int = 4):
    """Reduce ``A x - b`` with corrections that stay in the range of ``x``.

    With ``S = X^(1/2)`` the correction is ``dX = S V S`` where ``V`` is the
    minimum-norm solution of ``sum_i <S A_i S, V> = r_i`` (scalars use
    ``x_i`` in place of ``S``).  Whenever ``||V|| < 1`` the corrected matrix
    is PSD and keeps the kernel of ``X``; larger corrections are accepted
    only after an explicit eigenvalue check.  The minimum-norm problem is
    solved by a QR factorization of the scaled constraint matrix rather than
    through normal equations, whose conditioning is the square of it.
    """
    b = D.b
    m = D.m
    cols = []
    roots = []
    if len(x_lp):
        cols.append((D.A_lp.multiply(x_lp[None, :])).T.toarray())
    if x_free.size:
        cols.append(D.A_free.T.copy())
    for Af, rows, X in zip(D.psd_A, D.psd_rows, Xs):
        n = X.shape[0]
        w, U = np.linalg.eigh(X)
        S = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T
        roots.append(S)
        iu = np.triu_indices(n)
        f = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
        Bt = np.zeros((len(iu[0]), m))
        for start in range(0, len(rows), 64):
            sel = rows[start:start + 64]
            Ai = Af[sel].toarray().reshape(len(sel), n, n)
            T = S @ Ai @ S
            Bt[:, sel] = (T[:, iu[0], iu[1]] * f).T
        cols.append(Bt)
    if not cols:
        return x_lp, x_free, Xs
    Bt = np.vstack(cols)
    try:
        Q, R = np.linalg.qr(Bt)
    except np.linalg.LinAlgError:
        return x_lp, x_free, Xs
    del Bt
    diag = np.abs(np.diag(R))
    if not len(diag) or diag.min() <= 1e-14 * diag.max():
        return x_lp, x_free, Xs
    r = b - D.A_op(x_lp, x_free, Xs)
    r0 = float(np.abs(r).max(initial=0.0))
    size = 0.0
    for _ in range(rounds):
        if r0 < 1e-15:
            break
        v = Q @ sla.solve_triangular(R, r, trans="T")
        nv = float(np.linalg.norm(v))
        if not math.isfinite(nv):
            break
        k = 0
        n_lp, n_f = x_lp, x_free
        if len(x_lp):
            n_lp = x_lp + x_lp * v[k:k + len(x_lp)]
            k += len(x_lp)
        if x_free.size:
            n_f = x_free + v[k:k + x_free.size]
            k += x_free.size
        n_m = []
        for X, S in zip(Xs, roots):
            n = X.shape[0]
            iu = np.triu_indices(n)
            cnt = len(iu[0])
            V = np.zeros((n, n))
            V[iu] = v[k:k + cnt]
            k += cnt
            off = iu[0] != iu[1]
            V[iu[0][off], iu[1][off]] /= math.sqrt(2.0)
            V = V + np.triu(V, 1).T
            n_m.append(_sym(X + S @ V @ S))
        if size + nv >= 0.5 and not _cone_kept(x_lp, Xs, n_lp, n_m):
            break
        r_new = b - D.A_op(n_lp, n_f, n_m)
        r1 = float(np.abs(r_new).max(initial=0.0))
        if r1 >= r0:
            break
        x_lp, x_free, Xs, r, r0 = n_lp, n_f, n_m, r_new, r1
        size += nv
    return x_lp, x_free, Xs


def _cone_kept(x_lp, Xs, n_lp, n_m) -> bool:
    """Do the corrected blocks stay as far inside the cone as the originals?"""
    if len(x_lp) and float(n_lp.min()) < min(0.0, float(x_lp.min())):
        return False
    for X, Y in zip(Xs, n_m):
        scale = 1e-12 * max(1.0, float(np.abs(X).max()))
        if float(np.linalg.eigvalsh(Y)[0]) < min(0.0, float(np.linalg.eigvalsh(X)[0])) - scale:
            return False
    return True


def _assemble_kkt(D: _Data, nts, w_lp) -> np.ndarray:
    m = D.m
    M = np.zeros((m, m))
    if len(w_lp):
        Al = D.A_lp
        M += (Al.multiply(w_lp[None, :]) @ Al.T).toarray()
    for Af, rows, nt in zip(D.psd_A, D.psd_rows, nts):
        _schur_psd(M, Af, rows, nt.W)
    M = _sym(M)
    nf = D.A_free.shape[1]
    if nf == 0:
        return M
    K = np.zeros((m + nf, m + nf))
    K[:m, :m] = M
    K[:m, m:] = D.A_free
    K[m:, :m] = D.A_free.T
    return K


def _schur_psd(M, Af: sp.csr_matrix, rows, W):
    """Add ``<A_i, W A_j W>`` for all row pairs of one PSD block."""
    n = W.shape[0]
    if n <= 40:
        WW = np.kron(W, W)
        Afr = Af[rows]
        B = Afr @ WW  # row j is vec(W A_j W)
        M[np.ix_(rows, rows)] += Afr @ B.T
        return
    batch = 32
    Afr = Af[rows]
    for start in range(0, len(rows), batch):
        sub = Afr[start:start + batch]
        T = np.empty((sub.shape[0], n * n))
        for k in range(sub.shape[0]):
            lo, hi = sub.indptr[k], sub.indptr[k + 1]
            idx = sub.indices[lo:hi]
            a = sub.data[lo:hi]
            p, q = np.divmod(idx, n)
            if len(idx) < 2 * n:
                T[k] = ((W[:, p] * a) @ W[q, :]).ravel()
            else:
                Aj = np.zeros((n, n))
                Aj[p, q] = a
                T[k] = (W @ Aj @ W).ravel()
        M[np.ix_(rows, rows[start:start + batch])] += (Afr @ T.T)


class _KKTSolver:
    def __init__(self, K, m):
        self.K = K
        self.m = m
        self.n = K.shape[0]
        reg = 1e-14 * max(1.0, float(np.max(np.abs(np.diag(K)[:m]), initial=1.0)))
        if self.n == m:
            Kr = K + reg * np.eye(m)
            try:
                self.cho = sla.cho_factor(Kr, lower=True, check_finite=False)
                self.lu = None
                return
            except np.linalg.LinAlgError:
                pass
            self.cho = None
            self.lu = sla.lu_factor(Kr, check_finite=False)
        else:
            Kr = K.copy()
            Kr[np.arange(m), np.arange(m)] += reg
            Kr[np.arange(m, self.n), np.arange(m, self.n)] -= reg
            self.cho = None
            self.lu = sla.lu_factor(Kr, check_finite=False)

    def _raw(self, rhs):
        if self.cho is not None:
            return sla.cho_solve(self.cho, rhs, check_finite=False)
        return sla.lu_solve(self.lu, rhs, check_finite=False)

    def solve(self, h, rf):
        rhs = np.concatenate([h, rf])
        sol = self._raw(rhs)
        sol = sol + self._raw(rhs - self.K @ sol)  # one step of iterative refinement
        return sol[: self.m], sol[self.m:]


def _cone_violation(D: _Data, z_lp, z_f, z_m) -> float:
    """How far ``(z_lp, z_m)`` is from the dual cone, plus free-part norm."""
    v = 0.0
    if len(z_lp):
        v = max(v, float(max(0.0, -z_lp.min())))
    if len(z_f):
        v = max(v, float(np.abs(z_f).max()))
    for Z in z_m:
        v = max(v, float(max(0.0, -np.linalg.eigvalsh(Z)[0])))
    return v


def _primal_infeasibility_ray(D: _Data, y, tol):
    by = float(D.b @ y)
    if by <= 0:
        return None
    yh = y / by
    lp, fr, mats = D.At_op(yh)
    viol = _cone_violation(D, -lp, fr, [-Z for Z in mats])
    if viol <= tol:
        return yh
    return None


def _dual_infeasibility_ray(D: _Data, x_lp, x_free, Xs, tol):
    cx = float(D.c_lp @ x_lp + D.c_free @ x_free) + sum(float(np.sum(C * X)) for C, X in zip(D.psd_C, Xs))
    if cx >= 0:
        return None
    s = -cx
    r = D.A_op(x_lp / s, x_free / s, [X / s for X in Xs])
    if np.abs(r).max() <= tol:
        return np.concatenate([x_lp / s, x_free / s] + [pack_psd(X / s) for X in Xs])
    return None


def _unscale(prog, D, status, x_lp, x_free, Xs, y, res, it, cert, message):
    x = np.zeros(prog.num_vars)
    x[D.lp_idx] = x_lp * D.b_scale
    x[D.free_idx] = x_free * D.b_scale
    for (blk, idx), X in zip(D.psd, Xs):
        x[idx] = pack_psd(X) * D.b_scale
    x *= D.col_scale
    y_out = y * D.c_scale * D.row_scale
    obj = float(prog.c @ x) + prog.objective_constant
    dobj = float(prog.b @ y_out) + prog.objective_constant
    certificate = None
    if cert is not None:
        if status == PRIMAL_INFEASIBLE:
            certificate = cert * D.row_scale
        else:
            full = np.zeros(prog.num_vars)
            k = 0
            full[D.lp_idx] = cert[:len(D.lp_idx)]
            k = len(D.lp_idx)
            full[D.free_idx] = cert[k:k + len(D.free_idx)]
            k += len(D.free_idx)
            for blk, idx in D.psd:
                full[idx] = cert[k:k + blk.size]
                k += blk.size
            certificate = full * D.col_scale
    return ConicSolution(status, x, y_out, obj, dobj, tuple(float(r) for r in res), it,
                         certificate=certificate, message=message)


def _presolve_check(prog: ConicProgram):
    """Detect rows ``0 = b`` with ``b != 0`` (trivially infeasible)."""
    A = prog.A.tocsr()
    empty = np.diff(A.indptr) == 0
    bad = np.nonzero(empty & (prog.b != 0))[0]
    if len(bad):
        y = np.zeros(prog.num_rows)
        y[bad[0]] = np.sign(prog.b[bad[0]])
        return ConicSolution(PRIMAL_INFEASIBLE, np.zeros(prog.num_vars), np.zeros(prog.num_rows),
                             math.nan, math.nan, (math.inf, math.inf, math.inf), 0,
                             certificate=y, message="empty row with nonzero right-hand side")
    return None


def _solve_unconstrained(prog: ConicProgram, t0):
    # minimize <c, x> over the cone alone: 0 unless c leaves the dual cone
    x = np.zeros(prog.num_vars)
    for blk in prog.blocks:
        seg = prog.c[blk.offset: blk.offset + blk.size]
        ray = None
        if blk.kind == FREE and np.any(seg != 0):
            ray = -seg
        elif blk.kind == NONNEG and np.any(seg < 0):
            ray = np.where(seg < 0, 1.0, 0.0)
        elif blk.kind == PSD and blk.dim:
            w, Q = np.linalg.eigh(unpack_psd(seg, blk.dim) * _offdiag_half(blk.dim))
            if w[0] < 0:
                ray = pack_psd(np.outer(Q[:, 0], Q[:, 0]))
        if ray is not None:
            cert = np.zeros(prog.num_vars)
            cert[blk.offset: blk.offset + blk.size] = ray
            return ConicSolution(DUAL_INFEASIBLE, x, np.zeros(0), -math.inf, math.nan,
                                 (0.0, math.inf, math.inf), 0, time.perf_counter() - t0, cert,
                                 "objective unbounded on the cone")
    obj = prog.objective_constant
    return ConicSolution(OPTIMAL, x, np.zeros(0), obj, obj, (0.0, 0.0, 0.0), 0, time.perf_counter() - t0)


def _offdiag_half(n):
    H = np.full((n, n), 0.5)
    np.fill_diagonal(H, 1.0)
    return H


# ---------------------------------------------------------------------------
# verification


@dataclass
class Residuals:
    equality: float  # max |A x - b|
    equality_relative: float
    min_eigenvalues: dict  # block name/index -> min eigenvalue (PSD) or min entry (nonneg)
    objective: float
    psd_floor: float = field(init=False)

    def __post_init__(self):
        self.psd_floor = min(self.min_eigenvalues.values(), default=0.0)

    def ok(self, tol: float) -> bool:
        return self.equality <= tol and self.psd_floor >= -tol


def verify(prog: ConicProgram, sol: ConicSolution | np.ndarray, tol: float = DEFAULT_TOL) -> Residuals:
    """Recompute residuals from the primal vector alone."""
    x = sol.x if isinstance(sol, ConicSolution) else np.asarray(sol, dtype=float)
    r = prog.A @ x - prog.b
    eq = float(np.abs(r).max(initial=0.0))
    rel = eq / max(1.0, float(np.abs(prog.b).max(initial=0.0)) + float(np.abs(x).max(initial=0.0)))
    mins = {}
    for k, blk in enumerate(prog.blocks):
        key = blk.name or f"block{k}"
        seg = x[blk.offset: blk.offset + blk.size]
        if blk.kind == PSD and blk.dim:
            mins[key] = float(np.linalg.eigvalsh(unpack_psd(seg, blk.dim))[0])
        elif blk.kind == NONNEG and blk.dim:
            mins[key] = float(seg.min())
    obj = float(prog.c @ x) + prog.objective_constant
    return Residuals(eq, rel, mins, obj)


def check_primal_ray(prog: ConicProgram, y: np.ndarray, tol: float = 1e-7) -> bool:
    """Is ``y`` a Farkas certificate: ``b^T y > 0`` and ``-A^T y`` in the dual cone?"""
    by = float(prog.b @ y)
    if by <= 0:
        return False
    z = -(prog.A.T @ (y / by))
    return _cone_distance(prog, z) <= tol * max(1.0, float(np.abs(y / by).max()))


def check_dual_ray(prog: ConicProgram, x: np.ndarray, tol: float = 1e-7) -> bool:
    cx = float(prog.c @ x)
    if cx >= 0:
        return False
    xh = x / -cx
    if float(np.abs(prog.A @ xh).max(initial=0.0)) > tol * max(1.0, float(np.abs(xh).max())):
        return False
    for blk in prog.blocks:
        seg = xh[blk.offset: blk.offset + blk.size]
        if blk.kind == NONNEG and blk.dim and seg.min() < -tol:
            return False
        if blk.kind == PSD and blk.dim and np.linalg.eigvalsh(unpack_psd(seg, blk.dim))[0] < -tol:
            return False
    return True


def _cone_distance(prog: ConicProgram, z: np.ndarray) -> float:
    v = 0.0
    for blk in prog.blocks:
        seg = z[blk.offset: blk.offset + blk.size]
        if not blk.dim:
            continue
        if blk.kind == FREE:
            v = max(v, float(np.abs(seg).max()))
        elif blk.kind == NONNEG:
            v = max(v, float(max(0.0, -seg.min())))
        else:
            # coefficient on (i, j) i<j is <Z, E_ij + E_ji>, so Z_ij = coef / 2
            Z = unpack_psd(seg, blk.dim) * _offdiag_half(blk.dim)
            v = max(v, float(max(0.0, -np.linalg.eigvalsh(Z)[0])))
    return v


# ---------------------------------------------------------------------------
# SDPA sparse format


def export_sdpa(prog: ConicProgram, path) -> Path:
    """Write ``prog`` in SDPA sparse format (``.dat-s``).

    Our minimization maps to the SDPA "dual" form
    ``max tr(F0 Y) s.t. tr(Fi Y) = b_i, Y PSD`` with ``F0 = -C``; nonnegative
    scalars and the two halves of each split free scalar share one diagonal
    block (negative size).  The SDPA optimum is therefore
    ``-(value - objective_constant)``.
    """
    path = Path(path)
    lp_cols, split = [], []
    psd_blocks = []
    for blk in prog.blocks:
        if blk.kind == NONNEG:
            lp_cols.extend((blk.offset + i, 1.0) for i in range(blk.dim))
        elif blk.kind == FREE:
            split.extend(blk.offset + i for i in range(blk.dim))
        elif blk.dim:
            psd_blocks.append(blk)
    diag_entries = list(lp_cols) + [(k, 1.0) for k in split] + [(k, -1.0) for k in split]
    sizes = []
    if diag_entries:
        sizes.append(-len(diag_entries))
    sizes.extend(b.dim for b in psd_blocks)

    # column -> list of (blkno, i, j, factor)
    where: dict[int, list] = {}
    blkno = 1
    if diag_entries:
        for pos, (k, sgn) in enumerate(diag_entries):
            where.setdefault(k, []).append((blkno, pos, pos, sgn))
        blkno += 1
    for blk in psd_blocks:
        iu, ju = np.triu_indices(blk.dim)
        for t, (i, j) in enumerate(zip(iu, ju)):
            where.setdefault(blk.offset + t, []).append((blkno, int(i), int(j), 1.0 if i == j else 0.5))
        blkno += 1

    lines = [f"{prog.num_rows}", f"{len(sizes)}", " ".join(str(s) for s in sizes),
             " ".join(_fmt(v) for v in prog.b)]
    entries = []
    for k in np.nonzero(prog.c)[0]:
        for bno, i, j, f in where[int(k)]:
            entries.append((0, bno, i, j, -prog.c[k] * f))
    A = prog.A.tocsr()
    for r in range(prog.num_rows):
        for k, v in zip(A.indices[A.indptr[r]:A.indptr[r + 1]], A.data[A.indptr[r]:A.indptr[r + 1]]):
            for bno, i, j, f in where[int(k)]:
                entries.append((r + 1, bno, i, j, v * f))
    merged: dict = {}
    for mat, bno, i, j, v in entries:
        key = (mat, bno, i, j)
        merged[key] = merged.get(key, 0.0) + v
    for (mat, bno, i, j), v in sorted(merged.items()):
        if v != 0.0:
            lines.append(f"{mat} {bno} {i + 1} {j + 1} {_fmt(v)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _fmt(v: float) -> str:
    return repr(float(v))


def read_sdpa(path) -> ConicProgram:
    """Parse an SDPA sparse file into the minimization form used here."""
    toks = []
    for line in Path(path).read_text().splitlines():
        line = line.split("*")[0].split('"')[0].strip()
        if line:
            toks.append(line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " "))
    m = int(toks[0].split()[0])
    nb = int(toks[1].split()[0])
    sizes = [int(s) for s in toks[2].split()][:nb]
    rhs_tokens = toks[3].split() if m else []
    body_start = 4 if m else 3
    if m and len(rhs_tokens) < m:
        # rhs may wrap over several lines
        k = 4
        while len(rhs_tokens) < m:
            rhs_tokens.extend(toks[k].split())
            k += 1
        body_start = k
    elif not m and len(toks) > 3 and len(toks[3].split()) != 5:
        body_start = 4
    b = np.array([float(v) for v in rhs_tokens[:m]])
    builder = ProgramBuilder()
    handles = []
    for s in sizes:
        handles.append(builder.add_block(NONNEG, -s) if s < 0 else builder.add_block(PSD, s))
    rows = [dict() for _ in range(m)]
    obj: dict = {}
    for line in toks[body_start:]:
        parts = line.split()
        mat, bno, i, j = (int(p) for p in parts[:4])
        v = float(parts[4])
        blk = handles[bno - 1]
        i, j = i - 1, j - 1
        if blk.kind == NONNEG:
            if i != j:
                raise ValueError("off-diagonal entry in a diagonal block")
            k, coef = blk.index(i), v
        else:
            k, coef = blk.index(i, j), (v if i == j else 2 * v)
        if mat == 0:
            obj[k] = obj.get(k, 0.0) - coef
        else:
            rows[mat - 1][k] = rows[mat - 1].get(k, 0.0) + coef
    for row, rhs in zip(rows, b):
        builder.add_equality(row, rhs)
    builder.set_objective(obj)
    return builder.build()
