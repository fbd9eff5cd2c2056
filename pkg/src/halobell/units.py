"""Physical constants, the experimental parameter set and unit conversions.

Unit conventions used throughout the package:

* wavenumbers in 1/um
* velocities in mm/s
* times in us
* lengths in um
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

HBAR = 1.054571817e-34  # J s
ATOMIC_MASS = 1.66053906660e-27  # kg
MASS_HE4 = 4.002602 * ATOMIC_MASS


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = HBAR
    mass_he4: float = MASS_HE4
    g_accel: float = 9.81

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass_he4 > 0 and self.g_accel > 0):
            raise ConfigError("physical constants must be strictly positive")

    @property
    def hbar_over_m(self) -> float:
        """hbar/m in um^2/us."""
        return self.hbar / self.mass_he4 * 1e6

    @property
    def g_um_per_us2(self) -> float:
        return self.g_accel * 1e-6


DEFAULT_CONSTANTS = PhysicalConstants()

NOMINAL_PHASES = (1.053, 1.838, 2.624, 3.409, 4.194, 4.980, 5.765, 6.551, 7.336)


@dataclass(frozen=True)
class ExperimentConfig:
    k0: float = 4.102
    t2: float = 240.0
    t3: float = 480.0
    sigma_g: tuple = (26.0, 4.2, 4.1)
    sigma_corr: tuple = (3.0, 15.0, 8.0)
    n_bar: float = 0.15
    bec_number: float = 1.4e5
    theta_tol: float = 20.0
    detection_efficiency: float = 0.08
    dark_rate: float = 0.01
    phases: tuple = NOMINAL_PHASES
    bin_lambda: tuple = (0.6, 0.6, 0.6)
    # correlation height of the twin halos used by model and simulator
    h: float = 1.48
    g_accel: float = 9.81
    # first pulse time; only used by the alternative dephasing variant
    t1: float | None = None
    trap_frequencies: tuple = (49.607, 195.414, 201.21)
    # trap to detector drop (mm), sets the velocity to detector mapping
    fall_distance: float = 850.0
    # radial thickness of the analysed halo shell (1/um)
    shell_width: float = 2.0
    # largest bin size the simulator pads its generation volume for
    guard_lambda: float = 1.0
    include_gravity: bool = True

    def __post_init__(self):
        for name in ("sigma_g", "sigma_corr", "bin_lambda", "trap_frequencies"):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != 3:
                raise ConfigError(f"{name} must have three components")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        if not 0.0 < self.n_bar < 1.0:
            raise ConfigError(f"n_bar must lie in (0, 1), got {self.n_bar}")
        if not 0.0 <= self.detection_efficiency <= 1.0:
            raise ConfigError("detection_efficiency must lie in [0, 1]")
        if not 0.0 < self.theta_tol < 90.0:
            raise ConfigError("theta_tol must lie in (0, 90) degrees")
        if any(lam <= 0 for lam in self.bin_lambda):
            raise ConfigError("bin_lambda components must be positive")
        if any(s < 0 for s in self.sigma_corr) or any(s < 0 for s in self.sigma_g):
            raise ConfigError("widths must be non-negative")
        if self.h < 0:
            raise ConfigError("correlation height h must be non-negative")
        if self.dark_rate < 0:
            raise ConfigError("dark_rate must be non-negative")
        if self.shell_width <= 0 or self.guard_lambda <= 0 or self.fall_distance <= 0:
            raise ConfigError("shell_width, guard_lambda and fall_distance must be positive")
        if not all(math.isfinite(x) for x in (self.k0, self.t2, self.t3)):
            raise ConfigError("k0, t2 and t3 must be finite")

    @property
    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(g_accel=self.g_accel)

    @property
    def sigma_k(self) -> np.ndarray:
        """Correlation widths as wavenumbers (1/um)."""
        return velocity_to_wavenumber(np.asarray(self.sigma_corr), self.constants)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # serialization

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(config.to_json())


# conversions


def _scaled(x, scale):
    if np.ndim(x) == 0:
        return float(x) * scale
    return np.asarray(x, dtype=float) * scale


def wavenumber_to_velocity(k, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """hbar k / m with k in 1/um, returned in mm/s."""
    # um^2/us * 1/um = m/s
    return _scaled(k, constants.hbar_over_m * 1e3)


def velocity_to_wavenumber(v, constants: PhysicalConstants = DEFAULT_CONSTANTS):
    """Inverse of :func:`wavenumber_to_velocity`."""
    return _scaled(v, 1.0 / (constants.hbar_over_m * 1e3))


def separation_time(config: ExperimentConfig) -> float:
    """Time (us) for the colliding clouds to move one rms width apart along z."""
    if config.k0 <= 0:
        raise ConfigError("k0 must be positive to define a separation time")
    return config.sigma_g[2] / (config.constants.hbar_over_m * config.k0)


def recoil_frequency(k0: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Recoil frequency hbar k0^2 / 2m in units of 1e3 rad/s."""
    return constants.hbar_over_m * k0**2 / 2 * 1e3


def recoil_rate(k0: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Recoil frequency in rad/us."""
    return constants.hbar_over_m * k0**2 / 2


def arm_separation(config: ExperimentConfig) -> float:
    """Distance (um) between the arms after travelling for t3 at the 2k0 recoil velocity."""
    return config.constants.hbar_over_m * 2 * config.k0 * config.t3


def fall_time(config: ExperimentConfig) -> float:
    """Drop time (s) from trap to detector."""
    return math.sqrt(2 * config.fall_distance * 1e-3 / config.g_accel)


def dark_density(config: ExperimentConfig) -> float:
    """Dark counts per shot per unit wavenumber volume (um^3).

    Transverse velocities map to detector position through the fall time and
    vertical velocity maps to arrival time through g.
    """
    t_fall = fall_time(config)
    v_per_k = wavenumber_to_velocity(1.0, config.constants)  # mm/s per 1/um
    # counts per (mm/s)^3: rate [1/(mm^2 s)] * (t mm/(mm/s))^2 * (1/g s/(mm/s))
    per_velocity_volume = config.dark_rate * t_fall**2 / (config.g_accel * 1e3)
    return per_velocity_volume * v_per_k**3


def wrap_phase(x):
    """Wrap angles into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if np.ndim(x) == 0 else y
