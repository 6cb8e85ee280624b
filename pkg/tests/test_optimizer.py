import numpy as np
import pytest

from secure_isac import metrics
from secure_isac.errors import (ANRankOverflowError, DegenerateInputError, EmptyNullSpaceError,
                                InfeasibleError)
from secure_isac.model import Beamformer, steering_matrix
from secure_isac.optimizer import (GammaSearchConfig, check_feasibility_p1, eavesdropper_null_space,
                                   extract_beams, gamma_curve, gamma_upper,
                                   inner_constraint_violation, optimize_at_gamma, optimize_optimal,
                                   optimize_suboptimal1, optimize_suboptimal2, rank_one_reduce,
                                   reduce_rank_preserving, secrecy_upper_bound, solve_inner,
                                   user_null_space)
from secure_isac.pcrb import compute_sensing_matrices, pcrb_exact, xi_threshold

from conftest import make_scenario, random_psd, small_scenario
from oracles import TwoAntennaModel, grid_oracle

COARSE = GammaSearchConfig(grid_points=24)


@pytest.fixture(scope="module")
def results(scenario, matrices):
    out = {}
    for G in (3e-5, 7e-5):
        opt = optimize_optimal(scenario, matrices, G)
        s1 = optimize_suboptimal1(scenario, matrices, G)
        s2 = optimize_suboptimal2(scenario, matrices, G, s1)
        out[G] = (opt, s1, s2)
    return out


# -- rank-one reduction and beam extraction ---------------------------------

def test_rank_one_reduce_identity_on_rank_one():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    W = np.outer(u, u.conj())
    V = random_psd(rng, 4)
    Wr, Vr = rank_one_reduce(W, V, h)
    np.testing.assert_allclose(Wr, W, atol=1e-12)
    np.testing.assert_allclose(Vr, V, atol=1e-12)


def test_rank_one_reduce_hand_built():
    h = np.array([1.0, 1.0, 0.0], dtype=complex)
    u = np.array([1.0, -1.0, 2.0], dtype=complex)      # u^H h = 0
    r = np.array([0.5, 1.0j, 1.0], dtype=complex)
    W = np.outer(u, u.conj()) + np.outer(r, r.conj())
    V = np.eye(3) * 0.1
    Wr, Vr = rank_one_reduce(W, V, h)
    np.testing.assert_allclose(Wr, np.outer(r, r.conj()), atol=1e-12)
    np.testing.assert_allclose(Vr, V + np.outer(u, u.conj()), atol=1e-12)


def test_rank_one_reduce_properties_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        W, V = random_psd(rng, n), random_psd(rng, n, rank=2)
        h = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        Wr, Vr = rank_one_reduce(W, V, h)
        lam = np.linalg.eigvalsh(Wr)
        assert lam[-2] <= 1e-10 * lam[-1]
        H = np.outer(h, h.conj())
        assert np.trace(H @ Wr).real == pytest.approx(np.trace(H @ W).real, rel=1e-10)
        assert np.linalg.eigvalsh(W - Wr)[0] >= -1e-8 * np.trace(W).real
        np.testing.assert_allclose(Wr + Vr, W + V, atol=1e-12)


def test_rank_one_reduce_degenerate():
    h = np.array([1.0, 0.0])
    with pytest.raises(DegenerateInputError):
        rank_one_reduce(np.diag([0.0, 1.0]), np.zeros((2, 2)), h)


def test_extract_beams_examples():
    P = 100.0
    E = np.zeros((4, 4))
    E[0, 0] = P
    bf = extract_beams(E, np.zeros((4, 4)), 3)
    np.testing.assert_allclose(np.abs(bf.w), [10, 0, 0, 0], atol=1e-12)
    assert all(np.all(v == 0) for v in bf.an_beams) and len(bf.an_beams) == 3
    bf = extract_beams(E, np.diag([2.0, 1.0, 0, 0]), 2)
    np.testing.assert_allclose(np.abs(bf.an_beams[0]), [np.sqrt(2), 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(np.abs(bf.an_beams[1]), [0, 1, 0, 0], atol=1e-12)


def test_extract_beams_reconstruction_and_errors():
    rng = np.random.default_rng(2)
    w = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    V = random_psd(rng, 5, rank=3, trace=7.0)
    bf = extract_beams(np.outer(w, w.conj()), V, 4)
    cov = bf.covariances()
    rec, ref = cov.W + cov.V, np.outer(w, w.conj()) + V
    assert np.linalg.norm(rec - ref) <= 1e-7 * np.linalg.norm(ref)
    with pytest.raises(ANRankOverflowError):
        extract_beams(np.outer(w, w.conj()), V, 2)
    with pytest.raises(DegenerateInputError):
        extract_beams(random_psd(rng, 5), V, 4)


def test_rank_preserving_purification_keeps_functionals():
    rng = np.random.default_rng(3)
    V = random_psd(rng, 6, trace=2.0)
    F = [np.eye(6), random_psd(rng, 6), random_psd(rng, 6, rank=1)]
    Vr = reduce_rank_preserving(V, F)
    assert np.linalg.matrix_rank(Vr, tol=1e-9) ** 2 <= len(F)
    assert np.linalg.eigvalsh(Vr)[0] >= -1e-12
    for f in F:
        assert np.trace(f @ Vr).real == pytest.approx(np.trace(f @ V).real, rel=1e-9)


# -- feasibility ---------------------------------------------------------------

def test_feasibility_cases(scenario, matrices):
    loose = check_feasibility_p1(scenario, matrices, np.inf)
    assert loose.feasible and loose.xi < 0 and not np.any(loose.witness)
    assert not check_feasibility_p1(scenario, matrices, 1e-9).feasible
    ok = check_feasibility_p1(scenario, matrices, 3e-5)
    assert ok.feasible
    R = ok.witness
    assert np.trace(R).real <= scenario.power_budget * (1 + 1e-8)
    assert pcrb_exact(R, matrices, scenario) <= 3e-5 * (1 + 1e-6)
    with pytest.raises(InfeasibleError):
        optimize_optimal(scenario, matrices, 1e-5)


# -- inner problem -------------------------------------------------------------

def test_inner_mrt_when_side_constraints_inactive(scenario, matrices):
    g = 10 * gamma_upper(scenario)
    sol = solve_inner(g, scenario, matrices, np.inf)
    h = scenario.user_channel
    mrt = scenario.power_budget * np.vdot(h, h).real / scenario.noise_user
    assert sol.f_gamma == pytest.approx(mrt, rel=1e-7)
    lam, U = np.linalg.eigh(sol.W)
    assert lam[-2] <= 1e-7 * lam[-1]
    assert abs(np.vdot(U[:, -1], h)) / np.linalg.norm(h) == pytest.approx(1.0, abs=1e-6)


def test_f_nondecreasing_in_gamma(scenario, matrices):
    for G in (3e-5, np.inf):
        _, f, _, _ = gamma_curve(scenario, matrices, G, COARSE)
        assert np.all(np.diff(f) >= -1e-7 * np.abs(f[1:]))


@pytest.mark.parametrize("seed,G", [(s, G) for s in range(3) for G in (3e-5, 7e-5)])
def test_rank_one_tightness(seed, G):
    sc = make_scenario(seed)
    m = compute_sensing_matrices(sc)
    xi = xi_threshold(G, m, sc)
    for gam in (1e-3, 0.1, 3.0):
        sol = solve_inner(gam, sc, m, G)
        Wr, Vr = rank_one_reduce(sol.W_lift, sol.V_lift, sc.user_channel)
        assert inner_constraint_violation(Wr, Vr, sol.t, gam, sc, m, xi) <= 1e-7
        Hn = sc.power_budget * np.outer(sc.user_channel, sc.user_channel.conj()) / sc.noise_user
        f_red = np.real(np.sum(Hn.T * Wr))
        f_sdp = np.real(np.sum(Hn.T * sol.W_lift))
        assert f_red == pytest.approx(f_sdp, rel=1e-10)


# -- optimal method invariants ---------------------------------------------------

def test_optimal_invariants(scenario, matrices, results):
    for G, (opt, _, _) in results.items():
        assert opt.achieved_pcrb <= G * (1 + 1e-6)
        assert opt.beams.satisfies_budget(scenario.power_budget)
        assert opt.worst_secrecy_rate >= 0
        assert opt.worst_secrecy_rate >= opt.diagnostics["g_star"] - 1e-6
        assert opt.covariances.is_psd()


def test_rate_consistency_tight_and_loose(scenario, matrices, results):
    opt = results[3e-5][0]
    gs = opt.gamma_star
    eve = metrics.sinr_eve_all(opt.beams, scenario)
    # interior gamma*: the binding eavesdropper cap is met with equality
    assert eve.max() == pytest.approx(gs, rel=1e-6)
    assert opt.worst_secrecy_rate == pytest.approx(opt.diagnostics["g_star"], abs=1e-6)
    # a cap far above what any eavesdropper sees: metrics rate strictly exceeds g(gamma)
    loose = optimize_at_gamma(scenario, matrices, 3e-5, 10 * gamma_upper(scenario))
    assert metrics.sinr_eve_all(loose.beams, scenario).max() < loose.gamma_star
    assert loose.worst_secrecy_rate > loose.diagnostics["g_star"]


def test_dominance_chain(results, scenario, matrices):
    ub = secrecy_upper_bound(scenario, matrices)
    for G, (opt, s1, s2) in results.items():
        assert opt.worst_secrecy_rate >= s1.worst_secrecy_rate - 1e-6
        assert opt.worst_secrecy_rate >= s2.worst_secrecy_rate - 1e-6
        assert ub >= opt.worst_secrecy_rate - 1e-6
    assert results[7e-5][0].worst_secrecy_rate >= results[3e-5][0].worst_secrecy_rate - 1e-6


def test_dominance_single_eavesdropper_no_sensing():
    sc = make_scenario(4, angles=(0.5,), probs=(1.0,))
    m = compute_sensing_matrices(sc)
    opt = optimize_optimal(sc, m, np.inf)
    s1 = optimize_suboptimal1(sc, m, np.inf)
    s2 = optimize_suboptimal2(sc, m, np.inf, s1)
    assert opt.worst_secrecy_rate >= max(s1.worst_secrecy_rate, s2.worst_secrecy_rate) - 1e-6


@pytest.mark.parametrize("seed", range(2))
def test_upper_bound_small_instance_matches_grid_oracle(seed):
    sc = small_scenario(seed, angles=(0.3 + 0.4 * seed,))
    m = compute_sensing_matrices(sc)
    ub = secrecy_upper_bound(sc, m)
    ref = grid_oracle(TwoAntennaModel(sc, m, np.inf), final_step=1e-3)
    assert ub >= ref - 1e-6
    assert ub == pytest.approx(ref, abs=1e-2)


# -- suboptimal I ----------------------------------------------------------------

def test_sub1_null_space_exact(scenario, results):
    P = scenario.power_budget
    for _, s1, _ in results.values():
        A = scenario.eve_steering()
        assert np.max(np.abs(A.conj() @ s1.beams.w) ** 2) <= 1e-12 * P
        assert np.all(metrics.sinr_eve_all(s1.beams, scenario) <= 1e-12)
        h = scenario.user_channel
        assert np.sum(np.abs(h.conj() @ s1.beams.an_matrix) ** 2) <= 1e-12 * P
        assert s1.worst_secrecy_rate == pytest.approx(s1.diagnostics["rate_formula"], rel=1e-10)
        assert s1.achieved_pcrb <= 3e-5 * (1 + 1e-6) or s1.achieved_pcrb <= 7e-5 * (1 + 1e-6)


def test_sub1_zero_power_means_zero_rate(scenario):
    # no information power means no secrecy, whatever the AN does
    bf = Beamformer(np.zeros(8), [np.ones(8)])
    assert metrics.worst_secrecy_rate(bf, scenario) == 0.0


def test_null_space_helpers(scenario):
    J2 = eavesdropper_null_space(scenario)
    assert J2.shape == (8, 4)
    assert np.abs(scenario.eve_steering().conj() @ J2).max() < 1e-12
    X = user_null_space(scenario.user_channel)
    h = scenario.user_channel
    assert np.abs(h.conj() @ X).max() <= 1e-12 * np.linalg.norm(h)
    np.testing.assert_allclose(X.conj().T @ X, np.eye(7), atol=1e-12)


def test_sub1_empty_null_space():
    angles = tuple(np.linspace(-1.2, 1.2, 8))
    sc = make_scenario(0, angles=angles, probs=(1 / 8,) * 7 + (1 - 7 / 8,))
    with pytest.raises(EmptyNullSpaceError):
        optimize_suboptimal1(sc, None, np.inf)


# -- suboptimal II ---------------------------------------------------------------

def test_sub2_structure_and_grid_oracle(scenario, matrices, results):
    for G, (_, s1, s2) in results.items():
        P = scenario.power_budget
        h = scenario.user_channel
        pw = s2.diagnostics["info_power"]
        assert metrics.sinr_user(s2.beams, scenario) == pytest.approx(
            pw * np.vdot(h, h).real / scenario.noise_user, rel=1e-9)
        assert np.sum(np.abs(h.conj() @ s2.beams.an_matrix) ** 2) <= 1e-12 * P
        assert s2.achieved_pcrb <= G * (1 + 1e-6)
        # dense oracle: same AN direction, 10^4 power splits, exact metrics
        V = s2.beams.an_matrix @ s2.beams.an_matrix.conj().T
        Vdir = V / np.trace(V).real
        lam, U = np.linalg.eigh(Vdir)
        keep = lam > 1e-12
        Bdir = U[:, keep] * np.sqrt(lam[keep])
        grid = np.linspace(0, P, 10_001)
        hu = h / np.linalg.norm(h)
        best, p_best = -1.0, None
        for p in grid:
            bf = Beamformer(np.sqrt(p) * hu, list((np.sqrt(P - p) * Bdir).T))
            if pcrb_exact(bf.covariances().R, matrices, scenario) > G:
                continue
            r = metrics.worst_secrecy_rate(bf, scenario)
            if r > best:
                best, p_best = r, p
        step = grid[1] - grid[0]
        assert abs(pw - p_best) <= step
        assert s2.worst_secrecy_rate >= best - 1e-9


def test_sub2_zero_information_power(scenario, matrices, results):
    s2 = results[3e-5][2]
    from secure_isac.optimizer import _SplitModel, _sub2_an_direction
    V, _ = _sub2_an_direction(scenario, matrices, results[3e-5][1])
    assert _SplitModel(scenario, matrices, V).rate(0.0) == 0.0


def test_sub2_infeasible_threshold(scenario, matrices):
    with pytest.raises(InfeasibleError):
        optimize_suboptimal2(scenario, matrices, 1e-6, None)
