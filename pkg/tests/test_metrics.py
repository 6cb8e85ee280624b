import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from secure_isac.metrics import (DBM_FLOOR, beampattern, beampattern_arrays, default_angle_grid,
                                 secrecy_rate, secrecy_rates_from_sinr, sinr_eve, sinr_eve_all,
                                 sinr_user, write_beampattern_csv)
from secure_isac.model import Beamformer, steering_tx
from secure_isac.optimizer import user_null_space

from conftest import make_scenario


@pytest.fixture(scope="module")
def sc():
    return make_scenario(0)


def random_beams(rng, n=8, J=7, P=100.0):
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    V = rng.standard_normal((n, J)) + 1j * rng.standard_normal((n, J))
    s = np.sqrt(P / (np.vdot(w, w).real + np.sum(np.abs(V) ** 2)))
    return Beamformer(s * w, list((s * V).T))


def test_user_sinr_basic(sc):
    zero = Beamformer(np.zeros(8), [np.ones(8)])
    assert sinr_user(zero, sc) == 0.0
    h = sc.user_channel
    X = user_null_space(h)
    w = np.ones(8, dtype=complex)
    bf = Beamformer(w, [X[:, 0] * 3, X[:, 1]])
    assert sinr_user(bf, sc) == pytest.approx(abs(np.vdot(h, w)) ** 2 / sc.noise_user, rel=1e-12)


def test_user_sinr_high_precision(sc):
    rng = np.random.default_rng(1)
    mpmath.mp.dps = 50
    for _ in range(5):
        bf = random_beams(rng)
        h = [mpmath.mpc(z.real, z.imag) for z in sc.user_channel]
        dot = lambda x: sum(mpmath.conj(a) * mpmath.mpc(b.real, b.imag) for a, b in zip(h, x))
        num = abs(dot(bf.w)) ** 2
        den = sum(abs(dot(v)) ** 2 for v in bf.an_beams) + mpmath.mpf(sc.noise_user)
        assert sinr_user(bf, sc) == pytest.approx(float(num / den), rel=1e-12)


def test_eve_sinr(sc):
    k = 2
    a = steering_tx(sc.angles[k], 8)
    X = user_null_space(a)       # vectors orthogonal to a(theta_k)
    assert sinr_eve(Beamformer(X[:, 0], []), k, sc) == pytest.approx(0.0, abs=1e-20)
    P = sc.power_budget
    mrt = Beamformer(np.sqrt(P / 8) * a, [])
    assert sinr_eve(mrt, k, sc) == pytest.approx(P * 8 / sc.eve_noise_term, rel=1e-12)
    with_an = Beamformer(np.sqrt(P / 8) * a, [0.1 * a])
    assert sinr_eve(with_an, k, sc) < sinr_eve(mrt, k, sc)
    with pytest.raises(IndexError):
        sinr_eve(mrt, 4, sc)
    with pytest.raises(IndexError):
        sinr_eve(mrt, -1, sc)
    np.testing.assert_allclose(sinr_eve_all(mrt, sc)[k], sinr_eve(mrt, k, sc))


def test_secrecy_rate_arithmetic():
    assert secrecy_rates_from_sinr(3.0, [1.0])[0] == pytest.approx(1.0)
    assert secrecy_rates_from_sinr(3.0, [5.0])[0] == 0.0
    per = secrecy_rates_from_sinr(7.0, [1.0, 3.0, 0.0])
    np.testing.assert_allclose(per, [2.0, 1.0, 3.0])


def test_secrecy_rate_clamps_and_minimises(sc):
    a = steering_tx(sc.angles[0], 8)
    bf = Beamformer(np.sqrt(100 / 8) * a, [])
    per, worst = secrecy_rate(bf, sc)
    assert worst == 0.0 and per.min() == 0.0 and np.all(per >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0, 2 * np.pi), st.lists(st.floats(0, 2 * np.pi),
                                                                   min_size=7, max_size=7))
def test_secrecy_rate_phase_invariance(seed, phi_w, phis):
    sc = make_scenario(0)
    bf = random_beams(np.random.default_rng(seed))
    rot = Beamformer(bf.w * np.exp(1j * phi_w),
                     [v * np.exp(1j * p) for v, p in zip(bf.an_beams, phis)])
    per0, w0 = secrecy_rate(bf, sc)
    per1, w1 = secrecy_rate(rot, sc)
    np.testing.assert_allclose(per1, per0, rtol=1e-12, atol=1e-12)


def test_beampattern_zero_beams_floor(sc):
    samples = beampattern(Beamformer(np.zeros(8), [np.zeros(8)]), [-0.1, 0.0, 0.3], 80.0, sc)
    assert all(s.info_power_dbm == DBM_FLOOR and s.an_power_dbm == DBM_FLOOR for s in samples)
    with pytest.raises(ValueError):
        beampattern(Beamformer(np.zeros(8), []), [], 80.0, sc)


def test_beampattern_matched_filter_peak(sc):
    th0, P = 0.37, sc.power_budget
    bf = Beamformer(np.sqrt(P / 8) * steering_tx(th0, 8), [])
    grid = np.concatenate([default_angle_grid(2048), [th0]])
    _, info, _ = beampattern_arrays(bf, grid, 80.0, sc)
    assert grid[np.argmax(info)] == pytest.approx(th0, abs=np.pi / 2048)
    assert info[-1] == pytest.approx(1e-8 * P * 8, rel=1e-12)
    samples = beampattern(bf, [th0], 80.0, sc)
    assert samples[0].info_power_dbm == pytest.approx(10 * np.log10(1e-8 * P * 8))


def test_beampattern_symmetry_for_real_symmetric_beams(sc):
    w = np.array([1, 2, 3, 4, 4, 3, 2, 1], dtype=complex)
    bf = Beamformer(w, [np.array([1, 0, 0, 0, 0, 0, 0, 1], dtype=complex)])
    grid = np.linspace(-1.5, 1.5, 301)
    _, i1, a1 = beampattern_arrays(bf, grid, 80.0, sc)
    _, i2, a2 = beampattern_arrays(bf, -grid, 80.0, sc)
    np.testing.assert_allclose(i1, i2, rtol=1e-10)
    np.testing.assert_allclose(a1, a2, rtol=1e-10)


def test_beampattern_power_scaling(sc):
    bf = random_beams(np.random.default_rng(2))
    grid = default_angle_grid(512)
    _, i1, a1 = beampattern_arrays(bf, grid, 80.0, sc)
    scaled = Beamformer(2 * bf.w, [2 * v for v in bf.an_beams])
    _, i2, a2 = beampattern_arrays(scaled, grid, 80.0, sc)
    assert (i2 + a2).sum() == pytest.approx(4 * (i1 + a1).sum(), rel=1e-12)


def test_beampattern_csv(tmp_path, sc):
    bf = random_beams(np.random.default_rng(3))
    samples = beampattern(bf, default_angle_grid(16), 80.0, sc)
    path = tmp_path / "bp.csv"
    write_beampattern_csv(samples, path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "angle_rad,info_dbm,an_dbm,prior_density"
    assert len(lines) == 17
    first = [float(x) for x in lines[1].split(",")]
    assert first[0] == -np.pi / 2 and first[1] == samples[0].info_power_dbm
    assert default_angle_grid(2048).size == 2048
