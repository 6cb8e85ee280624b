"""JSON experiment configuration.

Powers are given in dBm and gains in dB on the way in, and converted to
linear milliwatts here, so nothing downstream ever sees a logarithmic unit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .model import Scenario, db_to_linear, rayleigh_user_channel
from .optimizer import GammaSearchConfig
from .pcrb import QuadratureConfig

METHODS = ("optimal", "sub1", "sub2", "upper_bound")
SWEEP_VARIABLES = ("sigma_theta_sq", "gamma_pcrb", "power_budget", "gamma")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScenarioSpec(_Strict):
    n_tx: int = Field(8, ge=1)
    n_rx: int = Field(10, ge=1)
    n_an: Optional[int] = Field(None, ge=1, description="defaults to n_tx - 1 (at least 1)")
    angles_rad: List[float] = [-1.22, -0.79, -0.44, 0.87]
    probs: List[float] = [0.2, 0.1, 0.4, 0.3]
    sigma_theta_sq: float = Field(1e-4, gt=0)
    target_path_loss_db: float = 40.0
    rcs_min_gain: float = Field(0.32, gt=0)
    noise_user_dbm: float = -80.0
    noise_eve_dbm: float = -80.0
    noise_radar_dbm: float = -80.0
    power_budget_dbm: float = 20.0
    user_channel_gain_db: float = -80.0
    user_channel: Optional[List[List[float]]] = Field(
        None, description="explicit h as [[re, im], ...]; overrides seeded Rayleigh draws")

    @field_validator("angles_rad")
    @classmethod
    def _angles_in_range(cls, v):
        for a in v:
            if not -np.pi / 2 <= a < np.pi / 2:
                raise ValueError(f"angle {a} outside [-pi/2, pi/2)")
        return v

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.angles_rad) != len(self.probs) or not self.angles_rad:
            raise ValueError("angles_rad and probs must be nonempty and of equal length")
        if self.user_channel is not None and len(self.user_channel) != self.n_tx:
            raise ValueError(f"user_channel must list {self.n_tx} entries")
        return self

    @property
    def resolved_n_an(self) -> int:
        return self.n_an if self.n_an is not None else max(self.n_tx - 1, 1)

    def build(self, seed: int = 0, **overrides) -> Scenario:
        """Scenario for one channel realisation; overrides use linear units."""
        if self.user_channel is not None:
            h = np.array([complex(re, im) for re, im in self.user_channel])
        else:
            h = rayleigh_user_channel(seed, db_to_linear(self.user_channel_gain_db), self.n_tx)
        fields = dict(
            n_tx=self.n_tx, n_rx=self.n_rx, n_an=self.resolved_n_an,
            angles=tuple(self.angles_rad), probs=tuple(self.probs),
            sigma_theta_sq=self.sigma_theta_sq,
            # only beta0 / r^2 matters, so r is pinned to 1 m
            range_m=1.0, beta0=db_to_linear(-self.target_path_loss_db),
            rcs_min_gain=self.rcs_min_gain,
            noise_user=db_to_linear(self.noise_user_dbm),
            noise_eve=db_to_linear(self.noise_eve_dbm),
            noise_radar=db_to_linear(self.noise_radar_dbm),
            power_budget=db_to_linear(self.power_budget_dbm),
            user_channel=h,
        )
        fields.update(overrides)
        return Scenario(**fields)


class QuadratureSpec(_Strict):
    nodes_per_component: int = Field(64, ge=4)
    half_width_sigmas: float = Field(8.0, gt=0)
    rel_tol: float = Field(1e-9, gt=0)

    def build(self) -> QuadratureConfig:
        return QuadratureConfig(**self.model_dump())


class GammaSearchSpec(_Strict):
    grid_points: int = Field(60, ge=3)
    gamma_min: float = Field(1e-4, gt=0)
    gamma_max: Optional[float] = Field(None, gt=0)
    refine_xtol: float = Field(1e-4, gt=0)
    extend_below: bool = True
    gamma_floor: float = Field(1e-12, gt=0)
    sdp_tol: float = Field(1e-9, ge=1e-12, le=1e-4)
    sdp_max_iter: int = Field(200, ge=10)

    def build(self) -> GammaSearchConfig:
        return GammaSearchConfig(**self.model_dump())


class SweepSpec(_Strict):
    variable: Literal["sigma_theta_sq", "gamma_pcrb", "power_budget", "gamma"]
    start: Optional[float] = Field(None, gt=0)
    stop: Optional[float] = Field(None, gt=0)
    spacing: Literal["lin", "log"] = "log"
    points: int = Field(4, ge=2)
    values: Optional[List[float]] = None
    unit: Literal["linear", "dBm"] = Field(
        "linear", description="power_budget sweeps may be given in dBm")

    @model_validator(mode="after")
    def _range(self):
        if self.values is not None:
            if len(self.values) < 2:
                raise ValueError("a sweep needs at least 2 values")
            if self.unit == "linear" and any(v <= 0 for v in self.values):
                raise ValueError("sweep values must be positive")
            return self
        if self.start is None or self.stop is None:
            raise ValueError("give either values or start/stop")
        if self.stop <= self.start:
            raise ValueError("stop must exceed start")
        return self

    def grid(self) -> np.ndarray:
        if self.values is not None:
            v = np.array(self.values, dtype=float)
        elif self.spacing == "log":
            v = np.geomspace(self.start, self.stop, self.points)
        else:
            v = np.linspace(self.start, self.stop, self.points)
        if self.unit == "dBm":
            v = 10.0 ** (v / 10.0)
        return v


class ExperimentConfig(_Strict):
    scenario: ScenarioSpec = ScenarioSpec()
    quadrature: QuadratureSpec = QuadratureSpec()
    gamma_search: GammaSearchSpec = GammaSearchSpec()
    sub2_grid_points: int = Field(512, ge=3)
    sweep: Optional[SweepSpec] = None
    methods: List[Literal["optimal", "sub1", "sub2", "upper_bound"]] = \
        ["optimal", "sub1", "sub2", "upper_bound"]
    seeds: Optional[List[int]] = None
    seed_count: int = Field(50, ge=1)
    gamma_pcrb: float = Field(3e-5, gt=0)
    eval_path_loss_db: float = 80.0
    angle_grid_points: int = Field(2048, ge=2)
    record_timing: bool = Field(
        True, description="write wall_ms; disable for byte-identical reruns")
    output: str = "results"

    @field_validator("methods")
    @classmethod
    def _methods_nonempty(cls, v):
        if not v:
            raise ValueError("methods must be nonempty")
        return list(dict.fromkeys(v))

    def seed_list(self) -> List[int]:
        return list(self.seeds) if self.seeds is not None else list(range(self.seed_count))


def builtin_scenario() -> ExperimentConfig:
    """The reference setting: 8 tx / 10 rx antennas, four candidate locations."""
    return ExperimentConfig()


def _format_errors(err: ValidationError, text: str | None) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"field {loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, text)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
