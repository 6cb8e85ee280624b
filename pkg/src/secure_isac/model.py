"""Array geometry, channels and the location prior.

Antenna indices run 1..N in the closed-form expressions and 0..N-1 in
storage. Both arrays are half-wavelength ULAs centred on the array midpoint,
so entry n of a steering vector is ``exp(j*pi*(N+1-2n)*sin(theta)/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .errors import GeometryDomainError, ScenarioError

_HALF_PI = np.pi / 2


def _phase_weights(n: int) -> np.ndarray:
    idx = np.arange(1, n + 1)
    return np.pi * (n + 1 - 2 * idx) / 2


def steering_tx(theta: float, n_tx: int) -> np.ndarray:
    """Transmit steering vector a(theta); ||a||^2 = n_tx."""
    if n_tx < 1:
        raise ValueError("n_tx must be >= 1")
    return np.exp(1j * _phase_weights(n_tx) * np.sin(theta))


def steering_rx(theta: float, n_rx: int) -> np.ndarray:
    """Receive steering vector b(theta).

    b is written as the conjugate transpose of a row listing that carries
    the same phase progression as a^H, so b uses the same sign convention as
    :func:`steering_tx`.
    """
    if n_rx < 1:
        raise ValueError("n_rx must be >= 1")
    return np.exp(1j * _phase_weights(n_rx) * np.sin(theta))


def steering_derivative(theta: float, n: int, kind: str = "tx") -> np.ndarray:
    """d/dtheta of the steering vector of the given array."""
    if kind not in ("tx", "rx"):
        raise ValueError(f"kind must be 'tx' or 'rx', got {kind!r}")
    k = _phase_weights(n)
    return 1j * k * np.cos(theta) * np.exp(1j * k * np.sin(theta))


def steering_matrix(thetas, n: int) -> np.ndarray:
    """Steering vectors for many angles, shape (len(thetas), n)."""
    thetas = np.asarray(thetas, dtype=float)
    return np.exp(1j * np.outer(np.sin(thetas), _phase_weights(n)))


def steering_derivative_matrix(thetas, n: int) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)
    k = _phase_weights(n)
    return 1j * np.outer(np.cos(thetas), k) * np.exp(1j * np.outer(np.sin(thetas), k))


def angle_from_geometry(psi: float, h_bs: float, h_target: float, range_m: float) -> float:
    """AoD/AoA of a target at azimuth psi, given BS and target heights."""
    if range_m <= 0:
        raise GeometryDomainError("range_m must be positive")
    arg = np.sin(psi) * (h_bs - h_target) / range_m
    if abs(arg) > 1.0:
        raise GeometryDomainError(f"arcsin argument {arg:.6g} outside [-1, 1]")
    return float(np.arcsin(arg))


def rayleigh_user_channel(seed: int, sigma_h_sq: float, n_tx: int) -> np.ndarray:
    """i.i.d. CN(0, sigma_h_sq) user channel, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(n_tx) + 1j * rng.standard_normal(n_tx)
    return np.sqrt(sigma_h_sq / 2.0) * g


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Scenario:
    """Complete physical configuration, powers and noises in linear mW."""

    n_tx: int
    n_rx: int
    n_an: int
    angles: tuple
    probs: tuple
    sigma_theta_sq: float
    range_m: float
    beta0: float
    rcs_min_gain: float
    noise_user: float
    noise_eve: float
    noise_radar: float
    power_budget: float
    user_channel: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        h = np.asarray(self.user_channel, dtype=complex).reshape(-1)
        object.__setattr__(self, "user_channel", _frozen(h))
        self._validate()

    def _validate(self):
        if self.n_tx < 1 or self.n_rx < 1 or self.n_an < 1:
            raise ScenarioError("n_tx, n_rx and n_an must be positive")
        if self.n_an > self.n_tx:
            raise ScenarioError(f"n_an={self.n_an} exceeds n_tx={self.n_tx}")
        K = len(self.angles)
        if K < 1 or len(self.probs) != K:
            raise ScenarioError("angles and probs must be nonempty and of equal length")
        p = np.asarray(self.probs)
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-12:
            raise ScenarioError(f"probs must lie in [0, 1] and sum to 1 (sum={p.sum()!r})")
        th = np.asarray(self.angles)
        if np.any(th < -_HALF_PI) or np.any(th >= _HALF_PI):
            raise ScenarioError("angles must lie in [-pi/2, pi/2)")
        if len(np.unique(th)) != K:
            raise ScenarioError("angles must be pairwise distinct")
        if not self.sigma_theta_sq > 0:
            raise ScenarioError("sigma_theta_sq must be positive")
        for name in ("range_m", "beta0", "rcs_min_gain", "noise_user", "noise_eve",
                     "noise_radar", "power_budget"):
            if not getattr(self, name) > 0:
                raise ScenarioError(f"{name} must be positive")
        h = self.user_channel
        if h.shape != (self.n_tx,):
            raise ScenarioError(f"user_channel must have length {self.n_tx}")
        hn = np.linalg.norm(h)
        for k, a in enumerate(steering_matrix(th, self.n_tx)):
            resid = h - a * (np.vdot(a, h) / self.n_tx)
            if not np.linalg.norm(resid) > 1e-9 * hn:
                raise ScenarioError(f"user channel is not linearly independent of a(theta_{k + 1})")

    @property
    def n_locations(self) -> int:
        return len(self.angles)

    @property
    def path_gain(self) -> float:
        """One-way BS-target power gain beta0 / r^2."""
        return self.beta0 / self.range_m ** 2

    @property
    def eve_noise_term(self) -> float:
        """sigma_E^2 r^2 / beta0, the eavesdropper noise seen through a(theta)."""
        return self.noise_eve / self.path_gain

    @property
    def beta_bar_sq(self) -> float:
        return (self.path_gain * self.rcs_min_gain) ** 2

    def eve_steering(self) -> np.ndarray:
        """Rows are a(theta_k), shape (K, n_tx)."""
        return steering_matrix(self.angles, self.n_tx)

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)


def eavesdropper_channel(theta: float, scenario: Scenario) -> np.ndarray:
    """LoS channel (sqrt(beta0)/r) a(theta)."""
    return np.sqrt(scenario.path_gain) * steering_tx(theta, scenario.n_tx)


def mixture_pdf(theta, scenario: Scenario):
    """Gaussian-mixture relaxation of the discrete angle prior."""
    th = np.asarray(theta, dtype=float)
    s2 = scenario.sigma_theta_sq
    mu = np.asarray(scenario.angles)
    p = np.asarray(scenario.probs)
    z = (th[..., None] - mu) ** 2 / (2 * s2)
    out = (p * np.exp(-z)).sum(axis=-1) / np.sqrt(2 * np.pi * s2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Beamformer:
    w: np.ndarray
    an_beams: tuple

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(np.asarray(self.w, dtype=complex)))
        object.__setattr__(self, "an_beams",
                           tuple(_frozen(np.asarray(v, dtype=complex)) for v in self.an_beams))

    @property
    def an_matrix(self) -> np.ndarray:
        """AN beams as columns, shape (n_tx, J)."""
        if not self.an_beams:
            return np.zeros((self.w.size, 0), dtype=complex)
        return np.stack(self.an_beams, axis=1)

    def total_power(self) -> float:
        return float(np.vdot(self.w, self.w).real + sum(np.vdot(v, v).real for v in self.an_beams))

    def covariances(self) -> "CovariancePair":
        Va = self.an_matrix
        return CovariancePair(np.outer(self.w, self.w.conj()), Va @ Va.conj().T)

    def satisfies_budget(self, power: float) -> bool:
        return self.total_power() <= power * (1 + 1e-9)


@dataclass(frozen=True)
class CovariancePair:
    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _frozen(np.asarray(self.W, dtype=complex)))
        object.__setattr__(self, "V", _frozen(np.asarray(self.V, dtype=complex)))

    @property
    def R(self) -> np.ndarray:
        return self.W + self.V

    def is_psd(self) -> bool:
        for M in (self.W, self.V):
            tr = max(np.trace(M).real, 0.0)
            if np.linalg.eigvalsh((M + M.conj().T) / 2)[0] < -1e-9 * max(tr, 1e-300):
                return False
        return True


def isotropic_covariance(scenario: Scenario) -> np.ndarray:
    return np.eye(scenario.n_tx, dtype=complex) * (scenario.power_budget / scenario.n_tx)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x)
