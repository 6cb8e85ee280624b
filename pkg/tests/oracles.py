"""Brute-force references for two-antenna, one-location, one-AN-beam instances."""

import itertools

import numpy as np


def _unit(alpha, phi):
    """Unit vectors [cos a, sin a e^{j phi}] for broadcast arrays of a, phi."""
    return np.stack([np.cos(alpha) + 0j, np.sin(alpha) * np.exp(1j * phi)], axis=-1)


class TwoAntennaModel:
    """Worst-case secrecy rate and exact PCRB of (w, v) = (sqrt(pP) u(a1,f1), sqrt((1-p)P) u(a2,f2)).

    Everything is recomputed from the raw quadratic forms, independently of
    the metrics module.
    """

    def __init__(self, scenario, matrices, gamma_pcrb):
        assert scenario.n_tx == 2 and scenario.n_locations == 1
        self.sc, self.m, self.G = scenario, matrices, gamma_pcrb
        self.a = scenario.eve_steering()[0]

    def evaluate(self, x):
        """x[..., :] = (a1, f1, a2, f2, p); returns (rate, pcrb)."""
        sc, m, P = self.sc, self.m, self.sc.power_budget
        u = _unit(x[..., 0], x[..., 1])
        v = _unit(x[..., 2], x[..., 3])
        p = np.clip(x[..., 4], 0.0, 1.0)
        h = sc.user_channel
        quad = lambda M, z: np.einsum("...i,ij,...j->...", z.conj(), M, z)
        hu, hv = np.abs(u @ h.conj()) ** 2, np.abs(v @ h.conj()) ** 2
        au, av = np.abs(u @ self.a.conj()) ** 2, np.abs(v @ self.a.conj()) ** 2
        su = p * P * hu / ((1 - p) * P * hv + sc.noise_user)
        se = p * P * au / ((1 - p) * P * av + sc.eve_noise_term)
        rate = np.maximum(np.log2(1 + su) - np.log2(1 + se), 0.0)
        # tr(M z z^H) = z^H M z
        g = [p * P * quad(M, u) + (1 - p) * P * quad(M, v) for M in (m.M1, m.M2, m.M3)]
        g1, g2, g3 = g[0].real, g[1].real, g[2]
        frac = np.where(g1 > 0, np.abs(g3) ** 2 / np.where(g1 > 0, g1, 1), 0.0)
        info = 1 / sc.sigma_theta_sq - m.epsilon + 2 * sc.beta_bar_sq / sc.noise_radar * (g2 - frac)
        return rate, 1 / info

    def score(self, x):
        rate, pcrb = self.evaluate(x)
        return np.where(pcrb <= self.G, rate, -np.inf)


def grid_oracle(model, coarse=(13, 24, 13, 24, 21), keep=12, final_step=1e-2):
    """Exhaustive coarse grid, then a pattern search down to ``final_step`` resolution.

    Returns the best feasible worst-case secrecy rate found (a lower bound on
    the true optimum that is tight to the final resolution).
    """
    axes = [np.linspace(0, np.pi / 2, coarse[0]), np.linspace(0, 2 * np.pi, coarse[1], endpoint=False),
            np.linspace(0, np.pi / 2, coarse[2]), np.linspace(0, 2 * np.pi, coarse[3], endpoint=False),
            np.linspace(0, 1, coarse[4])]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 5)
    vals = model.score(mesh)
    order = np.argsort(vals)[::-1][:keep]
    starts = mesh[order]
    moves = np.array(list(itertools.product((-1, 0, 1), repeat=5)), dtype=float)
    best = -np.inf
    for x in starts:
        step = np.array([np.pi / 2 / (coarse[0] - 1), 2 * np.pi / coarse[1],
                         np.pi / 2 / (coarse[2] - 1), 2 * np.pi / coarse[3], 1 / (coarse[4] - 1)])
        fx = model.score(x[None])[0]
        while True:
            cand = x + moves * step
            fc = model.score(cand)
            j = int(np.argmax(fc))
            if fc[j] > fx + 1e-13:
                x, fx = cand[j], fc[j]
                continue
            if step.max() <= final_step:
                break
            step = np.maximum(step / 2, np.minimum(step, final_step))
        best = max(best, fx)
    return float(best)
