"""Dense primal-dual interior-point solver for small Hermitian SDPs.

Problems are stated as::

    maximize    sum_b Re tr(C_b X_b)
    subject to  sum_b Re tr(A_cb X_b)  (=, <=, >=)  rhs_c      for each c
                X_b Hermitian PSD (1x1 blocks are nonnegative scalars)

Internally every inequality gets a nonnegative slack, all 1x1 blocks and
slacks are gathered into one nonnegative-orthant block, and the standard
pair

    (P) min <C, X>  s.t. A(X) = b, X >= 0
    (D) max b'y     s.t. A^T(y) + Z = C, Z >= 0

is solved by an infeasible path-following method with Nesterov-Todd scaling
and Mehrotra's predictor-corrector. Complex Hermitian blocks are handled
natively.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import SolverError

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical-failure"


RELATIONS = ("=", "<=", ">=")


@dataclass(frozen=True)
class Constraint:
    """``sum_b Re tr(coeffs[b] X_b) <relation> rhs``; 1x1 coefficients may be scalars."""

    coeffs: Mapping[int, object]
    relation: str
    rhs: float

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}, got {self.relation!r}")


@dataclass
class SdpProblem:
    block_dims: Sequence[int]
    objective: Mapping[int, object]
    constraints: Sequence[Constraint]

    def __post_init__(self):
        self.block_dims = [int(d) for d in self.block_dims]
        if any(d < 1 for d in self.block_dims):
            raise ValueError("block dimensions must be >= 1")
        for b, C in self.objective.items():
            self._check_coeff(b, C)
        for c in self.constraints:
            for b, A in c.coeffs.items():
                self._check_coeff(b, A)

    def _check_coeff(self, b, M):
        if not 0 <= b < len(self.block_dims):
            raise ValueError(f"block index {b} out of range")
        d = self.block_dims[b]
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        if M.shape != (d, d):
            raise ValueError(f"coefficient for block {b} has shape {M.shape}, expected {(d, d)}")
        scale = max(1.0, np.abs(M).max())
        if np.abs(M - M.conj().T).max() > 1e-12 * scale:
            raise ValueError(f"coefficient for block {b} is not Hermitian")


@dataclass
class SdpSolution:
    status: Status
    blocks: list
    objective: float
    dual_objective: float
    duals: np.ndarray
    residuals: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    margin: float
    point: list | None
    solution: SdpSolution


# ---------------------------------------------------------------------------
# standard form


def _herm(M):
    return (M + M.conj().T) / 2


def _inner(A, X):
    """Re tr(A X) for Hermitian A, X (also batched over leading axes of A)."""
    return np.real(np.sum(A.conj() * X, axis=(-2, -1)))


class _StdForm:
    """min <C,X> s.t. A(X) = b over PSD blocks plus one orthant block."""

    def __init__(self, psd_dims, psd_C, psd_A, lp_c, lp_A, b):
        self.psd_dims = list(psd_dims)
        self.psd_C = psd_C           # list of (d, d)
        self.psd_A = psd_A           # list of (m, d, d)
        self.lp_c = lp_c             # (n_lp,)
        self.lp_A = lp_A             # (m, n_lp)
        self.b = b                   # (m,)

    @property
    def m(self):
        return self.b.size

    @property
    def order(self):
        return sum(self.psd_dims) + self.lp_c.size

    def A_op(self, Xs, x):
        out = self.lp_A @ x if x.size else np.zeros(self.m)
        for A, X in zip(self.psd_A, Xs):
            out = out + _inner(A, X[None])
        return out

    def AT_op(self, y):
        mats = [_herm(np.tensordot(y, A, axes=1)) for A in self.psd_A]
        return mats, self.lp_A.T @ y


def _to_standard(problem: SdpProblem):
    """Returns the standard form plus the maps needed to recover user blocks."""
    dims = problem.block_dims
    m = len(problem.constraints)
    psd_idx = [b for b, d in enumerate(dims) if d > 1]
    lp_idx = [b for b, d in enumerate(dims) if d == 1]
    n_slack = sum(c.relation != "=" for c in problem.constraints)
    n_lp = len(lp_idx) + n_slack
    lp_pos = {b: i for i, b in enumerate(lp_idx)}
    psd_pos = {b: i for i, b in enumerate(psd_idx)}

    psd_A = [np.zeros((m, dims[b], dims[b]), dtype=complex) for b in psd_idx]
    psd_C = [np.zeros((dims[b], dims[b]), dtype=complex) for b in psd_idx]
    lp_A = np.zeros((m, n_lp))
    lp_c = np.zeros(n_lp)
    b = np.zeros(m)

    def put(target_psd, target_lp, row, blk, M, sign):
        M = np.atleast_2d(np.asarray(M, dtype=complex))
        if blk in psd_pos:
            if row is None:
                target_psd[psd_pos[blk]] += sign * _herm(M)
            else:
                target_psd[psd_pos[blk]][row] += _herm(M)
        else:
            if row is None:
                target_lp[lp_pos[blk]] += sign * M[0, 0].real
            else:
                target_lp[row, lp_pos[blk]] += M[0, 0].real

    # maximize C  <=>  minimize -C
    for blk, C in problem.objective.items():
        put(psd_C, lp_c, None, blk, C, -1.0)
    slack = len(lp_idx)
    for i, con in enumerate(problem.constraints):
        for blk, A in con.coeffs.items():
            put(psd_A, lp_A, i, blk, A, 1.0)
        b[i] = con.rhs
        if con.relation == "<=":
            lp_A[i, slack] = 1.0
            slack += 1
        elif con.relation == ">=":
            lp_A[i, slack] = -1.0
            slack += 1
    std = _StdForm([dims[k] for k in psd_idx], psd_C, psd_A, lp_c, lp_A, b)
    return std, psd_idx, lp_idx


def _row_norms(std: _StdForm):
    sq = np.sum(std.lp_A ** 2, axis=1)
    for A in std.psd_A:
        sq = sq + np.sum(np.abs(A) ** 2, axis=(1, 2))
    return np.sqrt(sq)


# ---------------------------------------------------------------------------
# interior point iterations


def _max_step(lam, dS):
    """Largest alpha in (0, inf] with diag(lam) + alpha*dS PSD (scaled space)."""
    if lam.size == 0:
        return np.inf
    s = 1.0 / np.sqrt(lam)
    ev = np.linalg.eigvalsh(_herm(s[:, None] * dS * s[None, :]))[0]
    return np.inf if ev >= 0 else -1.0 / ev


def _solve_std(std: _StdForm, tol: float, max_iter: int):
    m, n = std.m, std.order
    ndims = std.psd_dims
    bnorm = np.linalg.norm(std.b)
    Cnorm = np.sqrt(sum(np.linalg.norm(C) ** 2 for C in std.psd_C) + np.sum(std.lp_c ** 2))
    Anorm = max(1.0, np.max(_row_norms(std)) if m else 1.0)
    # SDPT3-style starting point
    xi0 = max(10.0, np.sqrt(n), np.max((1 + np.abs(std.b)) / (1 + _row_norms(std))) if m else 1.0)
    eta0 = max(10.0, np.sqrt(n), Cnorm, Anorm)
    Xs = [xi0 * np.eye(d, dtype=complex) for d in ndims]
    Zs = [eta0 * np.eye(d, dtype=complex) for d in ndims]
    x = np.full(std.lp_c.size, xi0)
    z = np.full(std.lp_c.size, eta0)
    y = np.zeros(m)

    info = {}
    status = Status.NUMERICAL_FAILURE
    stall = 0
    prev_merit = np.inf
    for it in range(1, max_iter + 1):
        ATy_psd, ATy_lp = std.AT_op(y)
        rp = std.b - std.A_op(Xs, x)
        Rd = [C - Z - T for C, Z, T in zip(std.psd_C, Zs, ATy_psd)]
        rd = std.lp_c - z - ATy_lp
        gap = sum(_inner(X, Z) for X, Z in zip(Xs, Zs)) + float(x @ z)
        mu = gap / n
        pobj = sum(_inner(C, X) for C, X in zip(std.psd_C, Xs)) + float(std.lp_c @ x)
        dobj = float(std.b @ y)
        dres = np.sqrt(sum(np.linalg.norm(R) ** 2 for R in Rd) + np.sum(rd ** 2))
        relp = np.linalg.norm(rp) / (1 + bnorm)
        reld = dres / (1 + Cnorm)
        relgap = max(abs(gap), abs(pobj - dobj)) / (1 + abs(pobj) + abs(dobj))
        info = dict(primal=relp, dual=reld, gap=relgap, pobj=pobj, dobj=dobj, iterations=it - 1)
        log.debug("it %3d  pobj % .10e  dobj % .10e  p %.2e  d %.2e  gap %.2e  mu %.2e",
                  it - 1, pobj, dobj, relp, reld, relgap, mu)
        if relp <= tol and reld <= tol and relgap <= tol:
            status = Status.OPTIMAL
            break
        # certificates: a dual ray (b'y > 0, A^T y + Z ~ 0) proves primal
        # infeasibility; a primal ray (<C,X> < 0, A(X) ~ 0) proves unboundedness
        if dobj > 1e-8:
            ray = np.sqrt(sum(np.linalg.norm(T + Z) ** 2 for T, Z in zip(ATy_psd, Zs))
                          + np.sum((ATy_lp + z) ** 2))
            if ray / dobj < tol and dobj > 1e6:
                status = Status.INFEASIBLE
                break
        if pobj < -1e-8:
            ray = np.linalg.norm(std.A_op(Xs, x))
            if ray / -pobj < tol and -pobj > 1e6:
                status = Status.UNBOUNDED
                break

        # Nesterov-Todd scaling per block
        G, Ginv, lam = [], [], []
        try:
            for X, Z in zip(Xs, Zs):
                L = np.linalg.cholesky(X)
                Rz = np.linalg.cholesky(Z)
                U, s, Vh = np.linalg.svd(Rz.conj().T @ L)
                G.append(np.linalg.solve(Rz.conj().T, U) * np.sqrt(s))
                Ginv.append((U.conj().T @ Rz.conj().T) / np.sqrt(s)[:, None])
                lam.append(s)
        except np.linalg.LinAlgError:
            break
        Ws = [g @ g.conj().T for g in G]
        d_lp = x / z
        lam_lp = np.sqrt(x * z)

        # Schur complement H_ij = <A_i, W A_j W> + A_lp diag(x/z) A_lp^T
        H = (std.lp_A * d_lp) @ std.lp_A.T
        WAW = []
        for A, W in zip(std.psd_A, Ws):
            T = W @ A @ W
            WAW.append(T)
            H += np.real(np.einsum("iab,jab->ij", A.conj(), T))
        H = (H + H.T) / 2
        # Jacobi scaling first: the diagonal of H spans many decades near the
        # optimum, so any regularisation must be relative to each row
        dH = np.sqrt(np.maximum(np.diag(H), 1e-300))
        Hs = H / dH[:, None] / dH[None, :]
        try:
            fac = cho_factor(Hs)
        except LinAlgError:
            try:
                fac = cho_factor(Hs + 1e-13 * np.eye(m))
            except LinAlgError:
                break

        def schur_solve(r):
            return cho_solve(fac, r / dH) / dH

        # G^H Rd G: the dual residual in the scaled space
        sRd = [g.conj().T @ R @ g for g, R in zip(G, Rd)]

        def direction(rt_psd, rt_lp):
            """rt: scaled complementarity rhs, already divided by lambda."""
            # differences are taken in the scaled space, where every block is
            # O(sqrt(mu)); in the original space they cancel catastrophically
            rhs_mats = [g @ (r - sr) @ g.conj().T for g, r, sr in zip(G, rt_psd, sRd)]
            # orthant block: W = x/z, so G = (x/z)^(1/4) and G r G = sqrt(x/z) r
            g_lp = np.sqrt(d_lp)
            rhs = rp - std.A_op(rhs_mats, g_lp * (rt_lp - g_lp * rd))
            dy = schur_solve(rhs)

            def complete(dy):
                ATdy_psd, ATdy_lp = std.AT_op(dy)
                dZ = [R - T for R, T in zip(Rd, ATdy_psd)]
                dz = rd - ATdy_lp
                dX = [_herm(g @ (r - g.conj().T @ d @ g) @ g.conj().T)
                      for g, r, d in zip(G, rt_psd, dZ)]
                return dX, g_lp * (rt_lp - g_lp * dz), dZ, dz

            dX, dx, dZ, dz = complete(dy)
            # iterative refinement: late iterations make H ill-conditioned
            for _ in range(3):
                err = rp - std.A_op(dX, dx)
                if np.linalg.norm(err) <= 1e-3 * tol * (1 + bnorm):
                    break
                dy_new = dy + schur_solve(err)
                cand = complete(dy_new)
                if np.linalg.norm(rp - std.A_op(cand[0], cand[1])) >= np.linalg.norm(err):
                    break
                dy, (dX, dx, dZ, dz) = dy_new, cand
            return dX, dx, dy, dZ, dz

        def scaled(dX, dx, dZ, dz):
            sX = [_herm(gi @ d @ gi.conj().T) for gi, d in zip(Ginv, dX)]
            sZ = [_herm(g.conj().T @ d @ g) for g, d in zip(G, dZ)]
            g_lp = np.sqrt(d_lp)
            return sX, dx / g_lp, sZ, dz * g_lp

        def steps(sX, sx, sZ, sz):
            ap = min([_max_step(l, d) for l, d in zip(lam, sX)] + [np.inf])
            ad = min([_max_step(l, d) for l, d in zip(lam, sZ)] + [np.inf])
            if sx.size:
                neg = sx < 0
                if neg.any():
                    ap = min(ap, np.min(-lam_lp[neg] / sx[neg]))
                neg = sz < 0
                if neg.any():
                    ad = min(ad, np.min(-lam_lp[neg] / sz[neg]))
            return ap, ad

        def lyap_inv(l, Rm):
            return 2 * Rm / (l[:, None] + l[None, :])

        # predictor
        rt_psd = [-np.diag(l).astype(complex) for l in lam]
        rt_lp = -lam_lp
        dX, dx, dy, dZ, dz = direction(rt_psd, rt_lp)
        sX, sx, sZ, sz = scaled(dX, dx, dZ, dz)
        ap, ad = steps(sX, sx, sZ, sz)
        ap, ad = min(1.0, ap), min(1.0, ad)
        gap_a = sum(_inner(X + ap * a, Z + ad * b_) for X, a, Z, b_ in zip(Xs, dX, Zs, dZ)) \
            + float((x + ap * dx) @ (z + ad * dz))
        sigma = min(1.0, max(0.0, gap_a / gap)) ** 3

        # corrector
        rt_psd = []
        for l, a, b_ in zip(lam, sX, sZ):
            rhs = sigma * mu * np.eye(l.size) - np.diag(l ** 2) - (a @ b_ + b_ @ a) / 2
            rt_psd.append(lyap_inv(l, rhs))
        rt_lp = (sigma * mu - lam_lp ** 2 - sx * sz) / lam_lp
        dX, dx, dy, dZ, dz = direction(rt_psd, rt_lp)
        sX, sx, sZ, sz = scaled(dX, dx, dZ, dz)
        ap, ad = steps(sX, sx, sZ, sz)
        ap, ad = min(1.0, 0.98 * ap), min(1.0, 0.98 * ad)

        Xs = [_herm(X + ap * d) for X, d in zip(Xs, dX)]
        x = x + ap * dx
        Zs = [_herm(Z + ad * d) for Z, d in zip(Zs, dZ)]
        z = z + ad * dz
        y = y + ad * dy

        merit = max(relp, reld, relgap)
        stall = stall + 1 if merit > 0.999 * prev_merit and max(ap, ad) < 1e-6 else 0
        prev_merit = min(prev_merit, merit)
        if stall >= 5:
            break
    return status, Xs, x, y, Zs, z, info


def _unscale(problem, std, psd_idx, lp_idx, Xs, x):
    blocks = [None] * len(problem.block_dims)
    for k, b in enumerate(psd_idx):
        blocks[b] = Xs[k]
    for k, b in enumerate(lp_idx):
        blocks[b] = np.array([[x[k]]], dtype=complex)
    return blocks


def solve(problem: SdpProblem, tol: float = 1e-9, max_iter: int = 200) -> SdpSolution:
    """Solve ``problem`` to relative KKT accuracy ``tol``."""
    if not 1e-12 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-12, 1e-4]")
    std, psd_idx, lp_idx = _to_standard(problem)
    # equilibrate rows and the objective; X is left unscaled
    rows = _row_norms(std)
    rows[rows == 0] = 1.0
    cscale = np.sqrt(sum(np.linalg.norm(C) ** 2 for C in std.psd_C) + np.sum(std.lp_c ** 2))
    cscale = cscale if cscale > 0 else 1.0
    scaled = _StdForm(std.psd_dims, [C / cscale for C in std.psd_C],
                      [A / rows[:, None, None] for A in std.psd_A],
                      std.lp_c / cscale, std.lp_A / rows[:, None], std.b / rows)
    status, Xs, x, y, Zs, z, info = _solve_std(scaled, tol, max_iter)
    blocks = _unscale(problem, std, psd_idx, lp_idx, Xs, x)
    # user-facing sign convention: maximisation, duals for the original rows
    duals = -y * cscale / rows
    objective = -info.get("pobj", np.nan) * cscale
    dual_objective = -info.get("dobj", np.nan) * cscale
    residuals = {k: info[k] for k in ("primal", "dual", "gap") if k in info}
    return SdpSolution(status, blocks, objective, dual_objective, duals, residuals,
                       info.get("iterations", 0))


def solve_or_raise(problem: SdpProblem, tol: float = 1e-9, max_iter: int = 200) -> SdpSolution:
    sol = solve(problem, tol, max_iter)
    if sol.status is Status.NUMERICAL_FAILURE:
        raise SolverError(f"interior-point method did not converge: {sol.residuals}", sol)
    return sol


def check_feasible(problem: SdpProblem, tol: float = 1e-8, max_iter: int = 200) -> FeasibilityResult:
    """Phase-I: maximise the margin s with every block (and slack) >= s*I.

    The margin is capped at 1 by writing X = X' + (1 - u) I, u >= 0, and
    minimising u. The problem is feasible iff the optimal margin is >= -tol.
    """
    std, psd_idx, lp_idx = _to_standard(problem)
    m = std.m
    # A(X' + (1-u)I) = b   ->   A(X') - u A(I) = b - A(I)
    AI = np.sum(std.lp_A, axis=1) + sum(np.real(np.trace(A, axis1=1, axis2=2)) for A in std.psd_A)
    lp_A = np.hstack([std.lp_A, -AI[:, None]])
    lp_c = np.zeros(std.lp_c.size + 1)
    lp_c[-1] = 1.0
    phase1 = _StdForm(std.psd_dims, [np.zeros_like(C) for C in std.psd_C], std.psd_A,
                      lp_c, lp_A, std.b - AI)
    rows = _row_norms(phase1)
    rows[rows == 0] = 1.0
    scaled = _StdForm(phase1.psd_dims, phase1.psd_C,
                      [A / rows[:, None, None] for A in phase1.psd_A],
                      phase1.lp_c, phase1.lp_A / rows[:, None], phase1.b / rows)
    status, Xs, x, y, Zs, z, info = _solve_std(scaled, max(tol * 1e-1, 1e-12), max_iter)
    sol = SdpSolution(status, [], np.nan, np.nan, -y / rows,
                      {k: info[k] for k in ("primal", "dual", "gap") if k in info},
                      info.get("iterations", 0))
    if status is Status.INFEASIBLE:
        return FeasibilityResult(False, -np.inf, None, sol)
    if status is not Status.OPTIMAL:
        raise SolverError(f"phase-I did not converge: {sol.residuals}", sol)
    u = x[-1]
    margin = 1.0 - u
    shift = 1.0 - u
    point = _unscale(problem, std, psd_idx, lp_idx,
                     [X + shift * np.eye(X.shape[0]) for X in Xs], x[:-1] + shift)
    sol.blocks = point
    return FeasibilityResult(margin >= -tol, float(margin), point if margin >= -tol else None, sol)


def write_sdpa(problem: SdpProblem, path) -> None:
    """Dump the real-embedded instance in SDPA sparse format (debugging aid).

    Each Hermitian block of size d becomes a real symmetric block of size 2d
    via [[Re, -Im], [Im, Re]]; SDPA minimises, so the objective is negated
    into the F0 / c convention of the dual form.
    """
    std, psd_idx, lp_idx = _to_standard(problem)
    m = std.m
    blocks_out = [2 * d for d in std.psd_dims]
    if std.lp_c.size:
        blocks_out.append(-std.lp_c.size)

    def embed(M):
        return np.block([[M.real, -M.imag], [M.imag, M.real]])

    lines = [f"* secure_isac SDP dump: {m} constraints", str(m), str(len(blocks_out)),
             " ".join(str(b) for b in blocks_out), " ".join(f"{v:.17g}" for v in std.b)]

    def emit(mat_no, blk_no, M):
        Ms = embed(M) / 2.0
        for i in range(Ms.shape[0]):
            for j in range(i, Ms.shape[1]):
                if Ms[i, j] != 0:
                    lines.append(f"{mat_no} {blk_no} {i + 1} {j + 1} {Ms[i, j]:.17g}")

    for k, C in enumerate(std.psd_C):
        emit(0, k + 1, C)
    lp_blk = len(std.psd_dims) + 1
    for j, c in enumerate(std.lp_c):
        if c != 0:
            lines.append(f"0 {lp_blk} {j + 1} {j + 1} {c:.17g}")
    for i in range(m):
        for k, A in enumerate(std.psd_A):
            emit(i + 1, k + 1, A[i])
        for j, a in enumerate(std.lp_A[i]):
            if a != 0:
                lines.append(f"{i + 1} {lp_blk} {j + 1} {j + 1} {a:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
