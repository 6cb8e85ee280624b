"""Secure beamforming under a PCRB constraint.

Three designs are offered:

* ``optimize_optimal``: for each eavesdropper-SINR cap gamma, a linear-fractional
  SDR lifted by the Charnes-Cooper change of variables gives the best user SINR
  f(gamma); a 1-D search over gamma maximises log2((1+f)/(1+gamma)), and the
  SDR solution is reduced to a rank-one information beam.
* ``optimize_suboptimal1``: information beam confined to the null space of all
  candidate eavesdropper steering vectors, AN confined to the null space of h.
* ``optimize_suboptimal2``: information beam matched to h, AN directions
  borrowed from suboptimal I, and a 1-D power split search.

Internally every SDP works on powers normalised by the budget P and on the
user channel normalised by the user noise, which keeps all coefficients O(1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import metrics
from .errors import (ANRankOverflowError, DegenerateInputError, EmptyNullSpaceError,
                     InfeasibleError, SolverError)
from .model import Beamformer, CovariancePair, Scenario
from .pcrb import (SensingMatrices, compute_sensing_matrices, data_information, pcrb_exact,
                   xi_threshold)
from .sdp import Constraint, SdpProblem, Status, check_feasible, solve

log = logging.getLogger(__name__)

T_MIN = 1e-10
AN_RANK_TOL = 1e-7
NULL_SPACE_TOL = 1e-10
EXTEND_MIN_GAIN = 1e-9     # bits; smaller gains are below solver resolution

_E11 = np.array([[1, 0], [0, 0]], dtype=complex)
_E22 = np.array([[0, 0], [0, 1]], dtype=complex)
_E_RE = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
_E_IM = np.array([[0, 0.5j], [-0.5j, 0]], dtype=complex)


@dataclass(frozen=True)
class GammaSearchConfig:
    grid_points: int = 60
    gamma_min: float = 1e-4
    gamma_max: float | None = None     # None: no-AN eavesdropper SINR cap
    refine_xtol: float = 1e-4          # fraction of the bracketing interval
    extend_below: bool = True          # follow a maximum sitting at gamma_min
    gamma_floor: float = 1e-12
    sdp_tol: float = 1e-9
    sdp_max_iter: int = 200


@dataclass
class OptimizationResult:
    method: str
    beams: Beamformer
    covariances: CovariancePair
    worst_secrecy_rate: float
    achieved_pcrb: float
    gamma_star: float = float("nan")
    per_location_rates: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class InnerSolution:
    gamma: float
    f_gamma: float
    W: np.ndarray          # de-normalised covariances
    V: np.ndarray
    t: float
    W_lift: np.ndarray     # lifted variables of the normalised program
    V_lift: np.ndarray
    residuals: dict

    @property
    def objective(self) -> float:
        return math.log2((1 + self.f_gamma) / (1 + self.gamma))


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    xi: float
    margin: float
    witness: np.ndarray | None


# ---------------------------------------------------------------------------
# shared pieces


def _herm(M):
    return (M + M.conj().T) / 2


def _pcrb_kernels(matrices: SensingMatrices):
    """Hermitian matrices whose traces against R give the LMI entries, plus
    congruence weights that bring the diagonal entries to unit scale."""
    M3 = matrices.M3
    kern = {
        "m2": _herm(matrices.M2),
        "m1": _herm(matrices.M1),
        "re": (M3 + M3.conj().T) / 2,
        "im": (M3 - M3.conj().T) / 2j,
    }
    n2 = max(np.linalg.norm(kern["m2"], 2), 1e-300)
    n1 = max(np.linalg.norm(kern["m1"], 2), 1e-300)
    weights = {"m2": 1 / n2, "m1": 1 / n1, "re": 1 / np.sqrt(n1 * n2), "im": 1 / np.sqrt(n1 * n2)}
    return kern, weights


def _lmi_constraints(matrices, terms, s_block, xi_coeffs):
    """Four equalities tying a 2x2 PSD block S to

        [[tr(M2 R) - xi, tr(M3 R)], [tr(M3^H R), tr(M1 R)]]

    after a diagonal congruence. ``terms`` maps block -> callable turning an
    n_tx kernel into that block's coefficient; ``xi_coeffs`` is (block-dict,
    constant) describing the xi term.
    """
    kern, wts = _pcrb_kernels(matrices)
    out = []
    for key, E in (("m2", _E11), ("m1", _E22), ("re", _E_RE), ("im", _E_IM)):
        c = wts[key]
        coeffs = {s_block: E}
        for blk, mapper in terms.items():
            coeffs[blk] = -c * mapper(kern[key])
        rhs = 0.0
        if key == "m2":
            blocks, const = xi_coeffs
            for blk, val in blocks.items():
                coeffs[blk] = coeffs.get(blk, 0) + c * val
            rhs = -c * const
        out.append(Constraint(coeffs, "=", rhs))
    return out


def _identity_map(M):
    return M


def _raise_on_status(sol, what):
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError(f"{what} is infeasible")
    if sol.status is not Status.OPTIMAL:
        raise SolverError(f"{what}: solver returned {sol.status.value} {sol.residuals}", sol)


def gamma_upper(scenario: Scenario) -> float:
    """Eavesdropper SINR with all power on one location and no AN."""
    return scenario.power_budget * scenario.n_tx / scenario.eve_noise_term


# ---------------------------------------------------------------------------
# feasibility


def check_feasibility_p1(scenario: Scenario, matrices: SensingMatrices, gamma_pcrb: float,
                         tol: float = 1e-8) -> FeasibilityVerdict:
    """Is there any R >= 0 with tr(R) <= P meeting the PCRB threshold?"""
    xi = xi_threshold(gamma_pcrb, matrices, scenario)
    n, P = scenario.n_tx, scenario.power_budget
    if xi <= 0:
        return FeasibilityVerdict(True, xi, np.inf, np.zeros((n, n), dtype=complex))
    # blocks: 0 R/P, 1 S
    cons = [Constraint({0: np.eye(n)}, "<=", 1.0)]
    cons += _lmi_constraints(matrices, {0: _identity_map}, 1, ({}, xi / P))
    res = check_feasible(SdpProblem([n, 2], {}, cons), tol=tol)
    witness = P * res.point[0] if res.feasible else None
    return FeasibilityVerdict(res.feasible, xi, res.margin, witness)


# ---------------------------------------------------------------------------
# optimal method


def _eve_congruence(gamma: float, scenario: Scenario) -> np.ndarray:
    """T = P_perp + min(1, sqrt(gamma)) P_A, with P_A the projector onto span{a_k}.

    The eavesdropper caps force the components of W along every a(theta_k)
    down to O(gamma), and the matching dual slack up to O(1/gamma). Solving
    for W_hat with W = T W_hat T brings both back to O(1); for small gamma
    the unscaled problem needs eigenvalues below double precision.
    """
    A = scenario.eve_steering().T
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    Q = U[:, sv > NULL_SPACE_TOL * sv[0]]
    s = min(1.0, math.sqrt(gamma))
    return np.eye(scenario.n_tx) + (s - 1.0) * (Q @ Q.conj().T)


def build_inner_problem(gamma: float, scenario: Scenario, matrices: SensingMatrices,
                        xi: float, precondition: bool = True):
    """Lifted SINR-maximisation at eavesdropper-SINR cap ``gamma``.

    Blocks: 0 W_hat (n_tx), 1 V'' (n_tx), 2 t, 3 S (2x2, only if xi > 0), with
    W'' = T W_hat T, W = P W''/t and V = P V''/t. Returns (problem, T).
    """
    n, P = scenario.n_tx, scenario.power_budget
    T = _eve_congruence(gamma, scenario) if precondition else np.eye(n)
    cong = lambda M: _herm(T @ M @ T)
    h = scenario.user_channel
    Hn = P * np.outer(h, h.conj()) / scenario.noise_user
    eve_coef = gamma * scenario.eve_noise_term / P
    cons = []
    for a in scenario.eve_steering():
        Ak = np.outer(a, a.conj())
        cons.append(Constraint({0: cong(Ak), 1: -gamma * Ak, 2: -eve_coef}, "<=", 0.0))
    cons.append(Constraint({1: Hn, 2: 1.0}, "=", 1.0))
    cons.append(Constraint({0: cong(np.eye(n)), 1: np.eye(n), 2: -1.0}, "<=", 0.0))
    cons.append(Constraint({2: 1.0}, ">=", T_MIN))
    dims = [n, n, 1]
    if xi > 0:
        dims.append(2)
        cons += _lmi_constraints(matrices, {0: cong, 1: _identity_map}, 3, ({2: xi / P}, 0.0))
    return SdpProblem(dims, {0: cong(Hn)}, cons), T


def solve_inner(gamma: float, scenario: Scenario, matrices: SensingMatrices, gamma_pcrb: float,
                search: GammaSearchConfig = GammaSearchConfig()) -> InnerSolution:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    xi = xi_threshold(gamma_pcrb, matrices, scenario)
    prob, T = build_inner_problem(gamma, scenario, matrices, xi)
    sol = solve(prob, tol=search.sdp_tol, max_iter=search.sdp_max_iter)
    _raise_on_status(sol, f"inner problem at gamma={gamma:.4g}")
    Wl, Vl = _herm(T @ sol.blocks[0] @ T), _herm(sol.blocks[1])
    t = float(sol.blocks[2][0, 0].real)
    P = scenario.power_budget
    return InnerSolution(gamma, max(sol.objective, 0.0), P * Wl / t, P * Vl / t, t, Wl, Vl,
                         dict(sol.residuals, iterations=sol.iterations))


def inner_constraint_violation(W_lift, V_lift, t, gamma, scenario, matrices, xi) -> float:
    """Largest violation of the lifted constraints, relative to row scale."""
    prob, _ = build_inner_problem(gamma, scenario, matrices, xi, precondition=False)
    worst = 0.0
    n_plain = len(prob.constraints) - (4 if xi > 0 else 0)
    X = {0: W_lift, 1: V_lift, 2: np.array([[t]])}
    for con in prob.constraints[:n_plain]:
        val, scale = 0.0, abs(con.rhs)
        for blk, A in con.coeffs.items():
            A = np.atleast_2d(np.asarray(A, dtype=complex))
            term = np.real(np.sum(A.T * X[blk]))
            val += term
            scale = max(scale, np.linalg.norm(A) * np.linalg.norm(X[blk]))
        if con.relation == "<=":
            v = max(val - con.rhs, 0.0)
        elif con.relation == ">=":
            v = max(con.rhs - val, 0.0)
        else:
            v = abs(val - con.rhs)
        worst = max(worst, v / max(scale, 1.0))
    for M in (W_lift, V_lift):
        lam = np.linalg.eigvalsh(_herm(M))
        # lifted variables have trace <= t <= 1, so an absolute check is scaled
        worst = max(worst, max(-lam[0], 0.0))
    if xi > 0:
        R = W_lift + V_lift
        g1 = np.real(np.sum(matrices.M1.T * R))
        g2 = np.real(np.sum(matrices.M2.T * R))
        g3 = np.sum(matrices.M3.T * R)
        P = scenario.power_budget
        # Schur form of the LMI: g2 - t xi/P - |g3|^2/g1 >= 0
        lhs = g2 - t * xi / P - (abs(g3) ** 2 / g1 if g1 > 0 else 0.0)
        worst = max(worst, max(-lhs, 0.0) / max(g2, 1.0))
    return float(worst)


def rank_one_reduce(W: np.ndarray, V: np.ndarray, h: np.ndarray):
    """Project W onto its component seen by h; the remainder moves into V."""
    W = _herm(np.asarray(W, dtype=complex))
    V = _herm(np.asarray(V, dtype=complex))
    h = np.asarray(h, dtype=complex)
    Wh = W @ h
    q = float(np.vdot(h, Wh).real)
    if q <= 1e-12 * np.trace(W).real * np.vdot(h, h).real:
        raise DegenerateInputError("h^H W h vanishes; no information beam to extract")
    W_red = np.outer(Wh, Wh.conj()) / q
    return W_red, _herm(V + W - W_red)


def _hermitian_basis(r):
    """Real basis of the r x r Hermitian matrices."""
    basis = []
    for i in range(r):
        E = np.zeros((r, r), dtype=complex)
        E[i, i] = 1
        basis.append(E)
        for j in range(i + 1, r):
            E = np.zeros((r, r), dtype=complex)
            E[i, j] = E[j, i] = 1
            basis.append(E)
            E = np.zeros((r, r), dtype=complex)
            E[i, j], E[j, i] = 1j, -1j
            basis.append(E)
    return basis


def _purify_steps(B, F, rel_tol):
    """Candidate factors after one eigenvalue-zeroing step along +-D, D in ker F."""
    r = B.shape[1]
    basis = _hermitian_basis(r)
    L = np.array([[np.real(np.sum((B.conj().T @ f @ B).T * E)) for E in basis] for f in F])
    _, _, vt = np.linalg.svd(L)
    D = sum(c * E for c, E in zip(vt[-1], basis))
    mu0, Y = np.linalg.eigh(_herm(D))
    out = []
    for mu in (mu0, -mu0):
        if mu.max() <= 0:
            continue
        s = 1.0 / mu.max()
        d = np.clip(1 - s * mu, 0.0, None)
        d[np.argmax(mu)] = 0.0
        Bn = (B @ Y) * np.sqrt(d)
        out.append(Bn[:, d > rel_tol * d.max()] if d.max() > 0 else Bn[:, :0])
    return out


def reduce_rank_preserving(V: np.ndarray, functionals, rel_tol: float = 1e-12,
                           soft=(), accept=None) -> np.ndarray:
    """Lower rank(V) while keeping tr(F V) fixed for every Hermitian F.

    Moves V = B B^H along B (I - s D) B^H where D spans the kernel of the
    functionals restricted to range(V); each step zeroes one eigenvalue.
    ``soft`` functionals only need to be kept when a step that ignores them
    fails ``accept(V_new)``. Stops once no admissible step remains.
    """
    V = _herm(np.asarray(V, dtype=complex))
    lam, U = np.linalg.eigh(V)
    if lam[-1] <= 0:
        return np.zeros_like(V)
    keep = lam > rel_tol * lam[-1]
    B = U[:, keep] * np.sqrt(lam[keep])
    hard = [_herm(np.asarray(f, dtype=complex)) for f in functionals]
    full = hard + [_herm(np.asarray(f, dtype=complex)) for f in soft]
    while B.shape[1] > 0:
        r2 = B.shape[1] ** 2
        step = None
        if soft and r2 > len(hard):
            for Bn in _purify_steps(B, hard, rel_tol):
                if accept is None or accept(_herm(Bn @ Bn.conj().T)):
                    step = Bn
                    break
        if step is None and r2 > len(full):
            cands = _purify_steps(B, full, rel_tol)
            step = cands[0] if cands else None
        if step is None:
            break
        B = step
    return _herm(B @ B.conj().T)


def extract_beams(W_red: np.ndarray, V_red: np.ndarray, n_an: int) -> Beamformer:
    lam, U = np.linalg.eigh(_herm(np.asarray(W_red, dtype=complex)))
    n = lam.size
    if lam[-1] > 0:
        if n > 1 and lam[-2] > AN_RANK_TOL * lam[-1]:
            raise DegenerateInputError(
                f"information covariance is not rank one (lambda2/lambda1={lam[-2] / lam[-1]:.3e})")
        w = U[:, -1] * np.sqrt(lam[-1])
    else:
        w = np.zeros(n, dtype=complex)
    mu, Y = np.linalg.eigh(_herm(np.asarray(V_red, dtype=complex)))
    mu, Y = mu[::-1], Y[:, ::-1]
    if mu[0] > 0:
        rank = int(np.sum(mu > AN_RANK_TOL * mu[0]))
    else:
        rank = 0
    if rank > n_an:
        raise ANRankOverflowError(rank, n_an)
    beams = [Y[:, j] * np.sqrt(mu[j]) for j in range(rank)]
    beams += [np.zeros(n, dtype=complex) for _ in range(n_an - rank)]
    return Beamformer(w, beams)


def _an_functionals(scenario: Scenario, matrices: SensingMatrices):
    """(hard, soft) linear functionals of V that the lifted constraints use."""
    h = scenario.user_channel
    hard = [np.eye(scenario.n_tx), np.outer(h, h.conj())]
    hard += [np.outer(a, a.conj()) for a in scenario.eve_steering()]
    kern, _ = _pcrb_kernels(matrices)
    soft = [kern["m1"], kern["m2"], kern["re"], kern["im"]]
    return hard, soft


def _information_guard(W, V0, matrices, need):
    """accept(V): data information of W + V stays >= min(need, its value at V0)."""
    floor = min(need, data_information(W + V0, matrices))
    return lambda V: data_information(W + V, matrices) >= floor


def _finish(method, beams, scenario, matrices, gamma_pcrb, **extra):
    per, worst = metrics.secrecy_rate(beams, scenario)
    cov = beams.covariances()
    return OptimizationResult(method=method, beams=beams, covariances=cov,
                              worst_secrecy_rate=worst,
                              achieved_pcrb=pcrb_exact(cov.R, matrices, scenario),
                              per_location_rates=per, **extra)


def _golden_in_bracket(fun, lo, mid, hi, xtol):
    """Maximise fun on [lo, hi] by golden section, bracket mapped to [1, 2].

    Returns None when noise at the solver's resolution breaks the bracket.
    """
    span = hi - lo
    to_x = lambda u: lo if u == 1.0 else hi if u == 2.0 else lo + (u - 1.0) * span
    try:
        res = minimize_scalar(lambda u: -fun(to_x(u)), bracket=(1.0, 1.0 + (mid - lo) / span, 2.0),
                              method="golden", options={"xtol": xtol, "maxiter": 200})
    except ValueError:
        return None
    return to_x(res.x)


def gamma_curve(scenario: Scenario, matrices: SensingMatrices, gamma_pcrb: float,
                search: GammaSearchConfig = GammaSearchConfig()):
    """Grid evaluation of the inner problem; returns (gammas, f, g, solutions)."""
    gmax = search.gamma_max if search.gamma_max is not None else gamma_upper(scenario)
    if not gmax > search.gamma_min:
        raise ValueError("gamma_max must exceed gamma_min")
    gammas = np.geomspace(search.gamma_min, gmax, search.grid_points)
    sols = [solve_inner(g, scenario, matrices, gamma_pcrb, search) for g in gammas]
    f = np.array([s.f_gamma for s in sols])
    return gammas, f, np.log2((1 + f) / (1 + gammas)), sols


def _beams_from_inner(sol: InnerSolution, scenario, matrices, xi):
    W_red, V_red = rank_one_reduce(sol.W_lift, sol.V_lift, scenario.user_channel)
    hard, soft = _an_functionals(scenario, matrices)
    if xi > 0:
        # lifted form of the PCRB constraint: information(W'' + V'') >= t xi / P
        guard = _information_guard(W_red, V_red, matrices, sol.t * xi / scenario.power_budget)
        V_red = reduce_rank_preserving(V_red, hard, soft=soft, accept=guard)
    else:
        V_red = reduce_rank_preserving(V_red, hard)
    P = scenario.power_budget
    beams = extract_beams(P * W_red / sol.t, P * V_red / sol.t, scenario.n_an)
    return beams, W_red, V_red


def optimize_at_gamma(scenario: Scenario, matrices: SensingMatrices | None, gamma_pcrb: float,
                      gamma: float,
                      search: GammaSearchConfig = GammaSearchConfig()) -> OptimizationResult:
    """Beams for one fixed eavesdropper-SINR cap, without the outer search."""
    matrices = matrices if matrices is not None else compute_sensing_matrices(scenario)
    sol = solve_inner(gamma, scenario, matrices, gamma_pcrb, search)
    xi = xi_threshold(gamma_pcrb, matrices, scenario)
    beams, W_red, V_red = _beams_from_inner(sol, scenario, matrices, xi)
    return _finish("optimal", beams, scenario, matrices, gamma_pcrb, gamma_star=float(gamma),
                   diagnostics=dict(g_star=sol.objective, f_star=sol.f_gamma, t_star=sol.t,
                                    solver=sol.residuals, reduced=(W_red, V_red)))


def optimize_optimal(scenario: Scenario, matrices: SensingMatrices | None = None,
                     gamma_pcrb: float = np.inf,
                     search: GammaSearchConfig = GammaSearchConfig()) -> OptimizationResult:
    matrices = matrices if matrices is not None else compute_sensing_matrices(scenario)
    verdict = check_feasibility_p1(scenario, matrices, gamma_pcrb)
    if not verdict.feasible:
        raise InfeasibleError(
            f"PCRB threshold {gamma_pcrb:.4g} is unreachable within the power budget "
            f"(phase-I margin {verdict.margin:.3e})")
    gammas, f, g, sols = gamma_curve(scenario, matrices, gamma_pcrb, search)
    cache = {float(s.gamma): s for s in sols}
    skipped = []

    def value(gam):
        # refinement only tries to beat the grid incumbent, so a point the
        # solver cannot certify is skipped rather than aborting the search
        gam = float(gam)
        near = [k for k in cache if abs(k - gam) <= 1e-12 * gam]
        gam = near[0] if near else gam
        if gam not in cache:
            try:
                cache[gam] = solve_inner(gam, scenario, matrices, gamma_pcrb, search)
            except SolverError as exc:
                log.warning("skipping gamma=%.4g during refinement: %s", gam, exc)
                skipped.append(gam)
                return -np.inf
        return cache[gam].objective

    i = int(np.argmax(g))
    extended = []
    if i == 0 and search.extend_below:
        # the supremum may sit at gamma -> 0 (eavesdroppers nulled outright);
        # walk down by decades while the objective still improves measurably
        gam, best_g = gammas[0], g[0]
        while gam / 10 >= search.gamma_floor:
            gam /= 10
            val = value(gam)
            extended.append(gam)
            if val <= best_g + EXTEND_MIN_GAIN:
                break
            best_g = val
    pts = sorted(cache)
    vals = [cache[x].objective for x in pts]
    j = int(np.argmax(vals))
    if 0 < j < len(pts) - 1 and vals[j] > max(vals[j - 1], vals[j + 1]) + EXTEND_MIN_GAIN:
        lg = np.log(pts)
        _golden_in_bracket(lambda u: value(np.exp(u)), lg[j - 1], lg[j], lg[j + 1],
                           search.refine_xtol)
    best = max(cache.values(), key=lambda s: s.objective)
    beams, W_red, V_red = _beams_from_inner(best, scenario, matrices, verdict.xi)
    evaluated = sorted(cache.values(), key=lambda s: s.gamma)
    diag = dict(
        gamma_grid=gammas, f_grid=f, g_grid=g, grid_argmax=i, gamma_extended=np.array(extended),
        gamma_evaluated=np.array([s.gamma for s in evaluated]),
        g_evaluated=np.array([s.objective for s in evaluated]),
        g_star=best.objective, f_star=best.f_gamma, t_star=best.t,
        xi=verdict.xi, gamma_skipped=np.array(skipped), solver=best.residuals,
        lifted=(best.W_lift, best.V_lift, best.t), reduced=(W_red, V_red),
    )
    return _finish("optimal", beams, scenario, matrices, gamma_pcrb,
                   gamma_star=best.gamma, diagnostics=diag)


def secrecy_upper_bound(scenario: Scenario, matrices: SensingMatrices | None = None,
                        search: GammaSearchConfig = GammaSearchConfig()) -> float:
    """Worst-case secrecy rate with the sensing constraint removed."""
    return optimize_optimal(scenario, matrices, np.inf, search).worst_secrecy_rate


# ---------------------------------------------------------------------------
# suboptimal designs


def eavesdropper_null_space(scenario: Scenario) -> np.ndarray:
    """Orthonormal basis of {w : a(theta_k)^H w = 0 for all k}, shape (n_tx, d)."""
    A = scenario.eve_steering().conj()
    _, s, vh = np.linalg.svd(A)
    rank = int(np.sum(s > NULL_SPACE_TOL * s[0]))
    basis = vh[rank:].conj().T
    if basis.shape[1] == 0:
        raise EmptyNullSpaceError(
            f"{scenario.n_locations} candidate locations leave no null space in {scenario.n_tx} antennas")
    return basis


def user_null_space(h: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space of h^H, shape (n_tx, n_tx - 1)."""
    _, _, vh = np.linalg.svd(np.asarray(h, dtype=complex).conj()[None, :])
    return vh[1:].conj().T


def optimize_suboptimal1(scenario: Scenario, matrices: SensingMatrices | None = None,
                         gamma_pcrb: float = np.inf,
                         search: GammaSearchConfig = GammaSearchConfig()) -> OptimizationResult:
    matrices = matrices if matrices is not None else compute_sensing_matrices(scenario)
    h = scenario.user_channel
    J2 = eavesdropper_null_space(scenario)
    proj = J2.conj().T @ h
    gain = float(np.vdot(proj, proj).real)
    if gain <= 1e-24 * np.vdot(h, h).real:
        raise DegenerateInputError("user channel has no component in the eavesdropper null space")
    w_dir = J2 @ proj / np.sqrt(gain)
    Xt = user_null_space(h)
    P = scenario.power_budget
    xi = xi_threshold(gamma_pcrb, matrices, scenario)
    d = Xt.shape[1]
    if xi <= 0:
        p_w, V_small, info = 1.0, np.zeros((d, d), dtype=complex), {}
    else:
        # blocks: 0 P_w/P, 1 AN covariance in null(h^H) coordinates / P, 2 S
        ww = np.outer(w_dir, w_dir.conj())
        terms = {0: lambda M: np.real(np.sum(M.T * ww)),
                 1: lambda M: Xt.conj().T @ M @ Xt}
        cons = [Constraint({0: 1.0, 1: np.eye(d)}, "<=", 1.0)]
        cons += _lmi_constraints(matrices, terms, 2, ({}, xi / P))
        sol = solve(SdpProblem([1, d, 2], {0: 1.0}, cons), tol=search.sdp_tol,
                    max_iter=search.sdp_max_iter)
        _raise_on_status(sol, "suboptimal-I power allocation")
        p_w = float(np.clip(sol.blocks[0][0, 0].real, 0.0, 1.0))
        kern, _ = _pcrb_kernels(matrices)
        soft = [Xt.conj().T @ kern[k] @ Xt for k in ("m1", "m2", "re", "im")]
        lift = lambda Vs: Xt @ Vs @ Xt.conj().T
        full_guard = _information_guard(p_w * ww, lift(sol.blocks[1]), matrices, xi / P)
        V_small = reduce_rank_preserving(sol.blocks[1], [np.eye(d)], soft=soft,
                                         accept=lambda Vs: full_guard(lift(Vs)))
        info = dict(sol.residuals, iterations=sol.iterations)
    an = extract_beams(np.zeros((d, d)), P * V_small, scenario.n_an)
    beams = Beamformer(np.sqrt(P * p_w) * w_dir, [Xt @ v for v in an.an_beams])
    rate_formula = math.log2(1 + P * p_w * gain / scenario.noise_user)
    return _finish("sub1", beams, scenario, matrices, gamma_pcrb,
                   diagnostics=dict(info_power=P * p_w, null_gain=gain, xi=xi,
                                    rate_formula=rate_formula, solver=info))


def _sub2_an_direction(scenario, matrices, sub1):
    """Unit-trace AN covariance: suboptimal I's, or the prior-weighted sensing
    kernel projected off h when suboptimal I carries no AN."""
    if sub1 is not None:
        Va = sub1.beams.an_matrix
        V = Va @ Va.conj().T
        tr = np.trace(V).real
        if tr > 1e-12 * scenario.power_budget:
            return V / tr, "sub1"
    h = scenario.user_channel
    T = np.eye(scenario.n_tx) - np.outer(h, h.conj()) / np.vdot(h, h).real
    V = _herm(T @ matrices.Q_tilde @ T)
    return V / np.trace(V).real, "prior-kernel"


class _SplitModel:
    """Vectorised rate and PCRB of w = sqrt(p) h/|h|, V = (P - p) V_dir."""

    def __init__(self, scenario, matrices, V_dir):
        self.s, self.m, self.P = scenario, matrices, scenario.power_budget
        h = scenario.user_channel
        self.h_unit = h / np.linalg.norm(h)
        self.V_dir = V_dir
        hh = np.outer(self.h_unit, self.h_unit.conj())
        self.user_gain = np.vdot(h, h).real / scenario.noise_user
        A = scenario.eve_steering()
        self.eve_sig = np.abs(A.conj() @ self.h_unit) ** 2
        self.eve_an = np.real(np.einsum("ki,ij,kj->k", A.conj(), V_dir, A))
        tr = lambda M, R: np.sum(M.T * R)
        self.g_w = np.array([tr(matrices.M1, hh), tr(matrices.M2, hh), tr(matrices.M3, hh)])
        self.g_v = np.array([tr(matrices.M1, V_dir), tr(matrices.M2, V_dir), tr(matrices.M3, V_dir)])

    def rate(self, p):
        p = np.asarray(p, dtype=float)
        su = p * self.user_gain
        se = p[..., None] * self.eve_sig / ((self.P - p)[..., None] * self.eve_an
                                             + self.s.eve_noise_term)
        r = np.log2(1 + su)[..., None] - np.log2(1 + se)
        return np.maximum(r, 0.0).min(axis=-1)

    def pcrb(self, p):
        p = np.asarray(p, dtype=float)
        g = p[..., None] * self.g_w + (self.P - p)[..., None] * self.g_v
        g1, g2, g3 = g[..., 0].real, g[..., 1].real, g[..., 2]
        tiny = 1e-15 * np.trace(self.m.M1).real * self.P
        frac = np.where(g1 > tiny, np.abs(g3) ** 2 / np.where(g1 > tiny, g1, 1.0), 0.0)
        info = 1 / self.s.sigma_theta_sq - self.m.epsilon \
            + 2 * self.s.beta_bar_sq / self.s.noise_radar * (g2 - frac)
        return 1 / info


def optimize_suboptimal2(scenario: Scenario, matrices: SensingMatrices | None = None,
                         gamma_pcrb: float = np.inf, sub1: OptimizationResult | None = None,
                         grid_points: int = 512, xtol: float = 1e-10) -> OptimizationResult:
    matrices = matrices if matrices is not None else compute_sensing_matrices(scenario)
    V_dir, source = _sub2_an_direction(scenario, matrices, sub1)
    model = _SplitModel(scenario, matrices, V_dir)
    P = scenario.power_budget
    grid = np.linspace(0.0, P, grid_points)
    rates = model.rate(grid)
    ok = model.pcrb(grid) <= gamma_pcrb
    if not ok.any():
        raise InfeasibleError("no information/AN power split meets the PCRB threshold")
    masked = np.where(ok, rates, -np.inf)
    i = int(np.argmax(masked))
    p_best, r_best = grid[i], rates[i]
    candidates = [(r_best, p_best)]
    margin = lambda p: float(gamma_pcrb - model.pcrb(p))
    for j in (i - 1, i + 1):
        if not 0 <= j < grid_points:
            continue
        if not ok[j]:
            # the constrained optimum may sit on the feasibility boundary
            pb = brentq(margin, grid[i], grid[j], xtol=xtol * P) if grid[j] > grid[i] \
                else brentq(margin, grid[j], grid[i], xtol=xtol * P)
            for q in (pb, pb - xtol * P, pb + xtol * P):
                if 0 <= q <= P and margin(q) >= 0:
                    candidates.append((float(model.rate(q)), q))
    lo, hi = max(i - 1, 0), min(i + 1, grid_points - 1)
    if 0 < i < grid_points - 1 and ok[lo] and ok[hi] and rates[i] > rates[lo] and rates[i] > rates[hi]:
        q = _golden_in_bracket(lambda p: float(model.rate(p)), grid[lo], grid[i], grid[hi],
                               max(xtol, 1e-12))
        if q is not None and margin(q) >= 0:
            candidates.append((float(model.rate(q)), q))
    r_best, p_best = max(candidates, key=lambda c: (c[0], -c[1]))
    Va = np.linalg.eigh(_herm(V_dir))
    mu, Y = Va[0][::-1], Va[1][:, ::-1]
    rank = int(np.sum(mu > AN_RANK_TOL * mu[0]))
    if rank > scenario.n_an:
        raise ANRankOverflowError(rank, scenario.n_an)
    an = [Y[:, j] * np.sqrt((P - p_best) * mu[j]) for j in range(rank)]
    an += [np.zeros(scenario.n_tx, dtype=complex)] * (scenario.n_an - rank)
    beams = Beamformer(np.sqrt(p_best) * model.h_unit, an)
    return _finish("sub2", beams, scenario, matrices, gamma_pcrb,
                   diagnostics=dict(info_power=p_best, grid=grid, grid_rates=rates,
                                    grid_feasible=ok, an_source=source, rate_model=r_best))
