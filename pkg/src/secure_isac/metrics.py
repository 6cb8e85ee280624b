"""Communication and sensing figures of merit for a given Beamformer."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import Beamformer, Scenario, mixture_pdf, steering_matrix

DBM_FLOOR = -300.0


def _check(beams: Beamformer, scenario: Scenario):
    if beams.w.shape != (scenario.n_tx,):
        raise ValueError(f"beamformer has {beams.w.size} antennas, scenario has {scenario.n_tx}")


def sinr_user(beams: Beamformer, scenario: Scenario) -> float:
    _check(beams, scenario)
    h = scenario.user_channel
    sig = abs(np.vdot(h, beams.w)) ** 2
    an = float(np.sum(np.abs(h.conj() @ beams.an_matrix) ** 2))
    return float(sig / (an + scenario.noise_user))


def sinr_eve_all(beams: Beamformer, scenario: Scenario) -> np.ndarray:
    """SINR at every candidate location, shape (K,)."""
    _check(beams, scenario)
    A = scenario.eve_steering()
    sig = np.abs(A.conj() @ beams.w) ** 2
    an = np.sum(np.abs(A.conj() @ beams.an_matrix) ** 2, axis=1)
    return sig / (an + scenario.eve_noise_term)


def sinr_eve(beams: Beamformer, k: int, scenario: Scenario) -> float:
    if not 0 <= k < scenario.n_locations:
        raise IndexError(f"location index {k} out of range for K={scenario.n_locations}")
    return float(sinr_eve_all(beams, scenario)[k])


def secrecy_rates_from_sinr(sinr_u: float, sinr_e) -> np.ndarray:
    return np.maximum(np.log2(1 + sinr_u) - np.log2(1 + np.asarray(sinr_e, dtype=float)), 0.0)


def secrecy_rate(beams: Beamformer, scenario: Scenario):
    """Per-location rates R_k and the worst case min_k R_k, in bits/s/Hz."""
    per = secrecy_rates_from_sinr(sinr_user(beams, scenario), sinr_eve_all(beams, scenario))
    return per, float(per.min())


def worst_secrecy_rate(beams: Beamformer, scenario: Scenario) -> float:
    return secrecy_rate(beams, scenario)[1]


@dataclass(frozen=True)
class BeampatternSample:
    angle: float
    info_power_dbm: float
    an_power_dbm: float
    prior_density: float


def default_angle_grid(points: int = 2048) -> np.ndarray:
    return -np.pi / 2 + np.pi * np.arange(points) / points


def _to_dbm(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10 * np.log10(p)
    return np.where(p > 0, np.maximum(out, DBM_FLOOR), DBM_FLOOR)


def beampattern_arrays(beams: Beamformer, angle_grid, eval_path_loss_db: float,
                       scenario: Scenario):
    """Linear-power info and AN patterns at the evaluation distance."""
    grid = np.asarray(angle_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("angle grid is empty")
    gain = 10.0 ** (-eval_path_loss_db / 10.0)
    A = steering_matrix(grid, scenario.n_tx).conj()
    info = gain * np.abs(A @ beams.w) ** 2
    an = gain * np.sum(np.abs(A @ beams.an_matrix) ** 2, axis=1)
    return grid, info, an


def beampattern(beams: Beamformer, angle_grid, eval_path_loss_db: float,
                scenario: Scenario) -> list:
    grid, info, an = beampattern_arrays(beams, angle_grid, eval_path_loss_db, scenario)
    dens = np.atleast_1d(mixture_pdf(grid, scenario))
    return [BeampatternSample(float(t), float(i), float(a), float(d))
            for t, i, a, d in zip(grid, _to_dbm(info), _to_dbm(an), dens)]


def write_beampattern_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["angle_rad", "info_dbm", "an_dbm", "prior_density"])
        for s in samples:
            wr.writerow([repr(s.angle), repr(s.info_power_dbm), repr(s.an_power_dbm),
                         repr(s.prior_density)])
