"""Continuous-momentum correlation model of the two-particle interferometer.

Pair correlations of each halo are Gaussian in the sum momentum k + k'.
Integrating them over cubic bins of half-width 2 sigma_d lambda_d gives
closed forms in terms of the overlap factors alpha and beta. These lead to
the quantum correlator E and the CHSH parameter S.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .special import alpha, beta
from .units import ExperimentConfig, separation_time, wrap_phase


class PortPair(str, Enum):
    PP = "pp'"
    QQ = "qq'"
    PQ = "pq'"
    QP = "p'q"

    @property
    def same_halo(self) -> bool:
        return self in (PortPair.PP, PortPair.QQ)


class Halo(str, Enum):
    UPPER = "upper"
    LOWER = "lower"
    CROSS = "cross"

    @property
    def sign(self) -> int:
        return {"upper": 1, "lower": -1, "cross": 0}[self.value]


@dataclass(frozen=True)
class GaussianHaloParams:
    n0: float
    h: float
    sigma: tuple
    k0: float

    def __post_init__(self):
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        if self.h <= 0 or any(s <= 0 for s in self.sigma):
            raise ConfigError("h and the correlation widths must be positive")

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "GaussianHaloParams":
        sigma = config.sigma_k
        return cls(n0=config.n_bar / mode_volume(sigma), h=config.h, sigma=tuple(sigma), k0=config.k0)


@dataclass(frozen=True)
class BinSpec:
    lam: tuple
    A: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), (3,))
        a = np.broadcast_to(np.asarray(self.A, dtype=float), (3,))
        if np.any(lam <= 0):
            raise ConfigError("bin sizes lambda must be positive")
        object.__setattr__(self, "lam", tuple(lam))
        object.__setattr__(self, "A", tuple(a))

    @classmethod
    def from_config(cls, config: ExperimentConfig, variant: str = "t2", lam=None) -> "BinSpec":
        lam = config.bin_lambda if lam is None else lam
        return cls(lam=lam, A=tuple(dephasing_parameters(config, variant)))


def mode_volume(sigma) -> float:
    """Volume of one Gaussian correlation mode, (2 pi)^(3/2) prod sigma_d."""
    return (2 * np.pi) ** 1.5 * float(np.prod(sigma))


def input_g2(k, k_prime, halo, params: GaussianHaloParams) -> float:
    """Density-normalized pair correlation of the source halos."""
    halo = Halo(halo)
    if halo is Halo.CROSS:
        return 1.0
    s = np.asarray(k, float) + np.asarray(k_prime, float)
    s = s - np.array([0.0, 0.0, 2 * params.k0 * halo.sign])
    return 1.0 + params.h * float(np.exp(-0.5 * np.sum((s / np.asarray(params.sigma)) ** 2)))


def phase_offset(k_z, k_prime_z, port_pair, halo_sign: int, config: ExperimentConfig):
    """Momentum-dependent phase picked up when t3 differs from 2 t2.

    ``halo_sign`` is +1 for pairs from the upper halo and -1 for the lower one.
    """
    port_pair = PortPair(port_pair)
    rate = 2 * config.constants.hbar_over_m * config.k0
    s = np.asarray(k_z, float) + np.asarray(k_prime_z, float)
    if port_pair.same_halo:
        s = s - 2 * config.k0 * halo_sign
    return -rate * s * (config.t3 / 2 - config.t2)


def output_g2(k, k_prime, port_pair, Phi: float, params: GaussianHaloParams, config: ExperimentConfig, halo_sign: int = 1):
    """Pair correlation between two output ports after the interferometer."""
    port_pair = PortPair(port_pair)
    k = np.asarray(k, float)
    k_prime = np.asarray(k_prime, float)
    s = k + k_prime
    if port_pair.same_halo:
        s = s - np.array([0.0, 0.0, 2 * params.k0 * halo_sign])
    gauss = np.exp(-0.5 * np.sum((s / np.asarray(params.sigma)) ** 2))
    phi = phase_offset(k[2], k_prime[2], port_pair, halo_sign, config)
    sign = -1.0 if port_pair.same_halo else 1.0
    return float(1.0 + 0.5 * params.h * (1 + sign * np.cos(Phi + phi)) * gauss)


def _overlap(bins: BinSpec, phase_part: bool = True) -> float:
    lx, ly, lz = bins.lam
    az = bins.A[2]
    bz = beta(lz, az) if phase_part else alpha(lz)
    return float(alpha(lx) * alpha(ly) * bz / (lx * ly * lz) ** 2)


def correlation_amplitude(h: float, bins: BinSpec) -> float:
    """Fringe amplitude a = (h/16) alpha_x alpha_y beta_z / prod lambda^2."""
    return h / 16 * _overlap(bins)


def integrated_correlation(port_pair, Phi, h: float, bins: BinSpec):
    """Bin-integrated correlation normalized by the product of mean bin counts."""
    port_pair = PortPair(port_pair)
    sign = -1.0 if port_pair.same_halo else 1.0
    return 1.0 + correlation_amplitude(h, bins) * (1 + sign * np.cos(Phi))


def quantum_correlator(Phi, h: float, bins: BinSpec):
    """E = (C_pq' + C_p'q - C_pp' - C_qq') / (sum of all four)."""
    p = h * _overlap(bins)
    return p * np.cos(Phi) / (16 + p)


def e_amplitude(h: float, bins: BinSpec) -> float:
    a = correlation_amplitude(h, bins)
    return a / (1 + a)


def correlator_from_ports(Phi, h: float, bins: BinSpec):
    """E assembled from the four port-pair correlations."""
    c = {pp: integrated_correlation(pp, Phi, h, bins) for pp in PortPair}
    num = c[PortPair.PQ] + c[PortPair.QP] - c[PortPair.PP] - c[PortPair.QQ]
    return num / sum(c.values())


def bell_envelope(h: float) -> float:
    """Small-bin limit h/(h+2) of the correlator amplitude."""
    return h / (h + 2)


OPTIMAL_ANGLES = (0.0, np.pi / 2, -np.pi / 4, -3 * np.pi / 4)


def chsh_parameter(e_amplitude: float, angles=OPTIMAL_ANGLES) -> float:
    """CHSH combination for E(phi_L, phi_R) = E0 cos(phi_L + phi_R).

    ``angles`` is (phi_L, phi_L', phi_R, phi_R').
    """
    if abs(e_amplitude) > 1:
        raise ValueError("correlator amplitude must satisfy |E0| <= 1")
    a, a2, b, b2 = angles

    def e(x, y):
        return e_amplitude * np.cos(x + y)

    return float(abs(e(a, b) - e(a, b2) + e(a2, b) + e(a2, b2)))


def gravitational_phase(config: ExperimentConfig) -> dict:
    """Per-arm and global gravitational phase for a symmetric sequence.

    Returns a dict with ``arm`` (k0 g t3^2), ``global`` (twice that) and
    ``global_wrapped`` in (-pi, pi].
    """
    g = config.constants.g_um_per_us2
    arm = config.k0 * g * config.t3**2
    total = 2 * arm
    return {"arm": arm, "global": total, "global_wrapped": wrap_phase(total)}


def dephasing_parameters(config: ExperimentConfig, variant: str = "t2") -> np.ndarray:
    """Dimensionless dephasing A_d = (k0 sigma_d hbar/m)(t3/2 - t_ref).

    ``variant="t2"`` uses t_ref = t2 and vanishes for t3 = 2 t2. The
    ``"t1"`` variant uses the first-pulse time, which defaults to the
    separation time when the config leaves it unset.
    """
    if variant == "t2":
        t_ref = config.t2
    elif variant == "t1":
        t_ref = config.t1 if config.t1 is not None else separation_time(config)
    else:
        raise ConfigError(f"unknown dephasing variant {variant!r}")
    return config.k0 * config.sigma_k * config.constants.hbar_over_m * (config.t3 / 2 - t_ref)
