"""Finite-duration Bragg pulses from the truncated Raman-Nath equations.

Amplitudes C_n of the diffraction orders n = -M..M evolve as

    i dC_n/dt = w_r [(2n + kappa)^2 - kappa^2] C_n
                + (Omega(t)/2) [e^{-i(theta + delta t)} C_{n-1} + e^{i(theta + delta t)} C_{n+1}]

with kappa = k/k0 and w_r = hbar k0^2 / 2m. The kinetic term is written in
the frame of the n = 0 order. Time is in us and the Rabi frequency Omega
in rad/us. The Gaussian envelope has peak ``amplitude_alpha``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.ndimage import label
from scipy.optimize import minimize

from .errors import IntegrationError, SearchError
from .units import ExperimentConfig, recoil_rate

WINDOW = 5.0
RTOL = 1e-10
ATOL = 1e-12


@dataclass(frozen=True)
class BraggPulse:
    amplitude_alpha: float
    sigma_t: float
    t_center: float = 0.0
    theta: float = 0.0
    delta: float = 0.0  # rad/s

    def __post_init__(self):
        if self.sigma_t <= 0:
            raise ValueError("pulse width must be positive")
        if self.amplitude_alpha < 0:
            raise ValueError("pulse amplitude must be non-negative")

    def envelope(self, t):
        return self.amplitude_alpha * np.exp(-0.5 * ((np.asarray(t) - self.t_center) / self.sigma_t) ** 2)

    @property
    def area(self) -> float:
        """Time integral of the Rabi frequency."""
        return float(np.sqrt(2 * np.pi) * self.amplitude_alpha * self.sigma_t)


@dataclass
class DiffractionState:
    coefficients: np.ndarray
    k: float
    M: int

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    def population(self, n: int) -> float:
        return float(self.populations[n + self.M])

    @property
    def norm(self) -> float:
        return float(np.sum(self.populations))


def check_validity(pulse: BraggPulse, M: int, wr: float, limit: float = 0.1) -> float:
    """Ratio of half the peak Rabi frequency to the recoil energy of order 2M."""
    ratio = 0.5 * pulse.amplitude_alpha / ((2 * M) ** 2 * wr)
    if ratio > limit:
        warnings.warn(f"truncation at M={M} questionable: Omega/2 over (2M)^2 w_r = {ratio:.3g}")
    return ratio


def _integrate_batch(alpha, sigma, kappa, M, wr, theta=0.0, delta=0.0, t_center=0.0):
    """Integrate a batch of independent pulses sharing M.

    ``alpha``, ``sigma`` and ``kappa`` broadcast against each other. Time is
    rescaled to tau = (t - t_center)/sigma on [-5, 5] so members with
    different widths share one solver call.
    """
    alpha, sigma, kappa = (np.ravel(x).astype(float) for x in np.broadcast_arrays(alpha, sigma, kappa))
    b = alpha.size
    n = np.arange(-M, M + 1)
    diag = wr * ((2 * n[None, :] + kappa[:, None]) ** 2 - kappa[:, None] ** 2)
    delta_us = delta * 1e-6
    sig = sigma[:, None]
    amp = alpha[:, None]

    def rhs(tau, y):
        y = y.reshape(b, -1)
        half_rabi = 0.5 * amp * np.exp(-0.5 * tau * tau)
        phase = np.exp(-1j * (theta + delta_us * (t_center + sig * tau)))
        coupled = np.zeros_like(y)
        coupled[:, 1:] += phase * y[:, :-1]
        coupled[:, :-1] += np.conj(phase) * y[:, 1:]
        return (-1j * sig * (diag * y + half_rabi * coupled)).ravel()

    y0 = np.zeros((b, 2 * M + 1), complex)
    y0[:, M] = 1.0
    sol = solve_ivp(rhs, (-WINDOW, WINDOW), y0.ravel(), method="DOP853", rtol=RTOL, atol=ATOL)
    if not sol.success:
        raise IntegrationError(f"Raman-Nath integration failed: {sol.message}")
    return sol.y[:, -1].reshape(b, -1)


def _wr(config: ExperimentConfig | None, wr: float | None) -> tuple[float, float]:
    config = config or ExperimentConfig()
    return config.k0, wr if wr is not None else recoil_rate(config.k0, config.constants)


def integrate_raman_nath(pulse: BraggPulse, k: float, M: int = 9, config: ExperimentConfig | None = None, wr=None) -> DiffractionState:
    """Final diffraction amplitudes for an atom entering with quasimomentum k (1/um)."""
    k0, wr = _wr(config, wr)
    check_validity(pulse, M, wr)
    c = _integrate_batch(
        pulse.amplitude_alpha, pulse.sigma_t, k / k0, M, wr, pulse.theta, pulse.delta, pulse.t_center
    )
    return DiffractionState(coefficients=c[0], k=float(k), M=M)


def transfer_spectrum(pulse: BraggPulse, k_grid, M: int = 9, config: ExperimentConfig | None = None, wr=None) -> np.ndarray:
    """Populations of orders (-1, 0, +1) for every quasimomentum in ``k_grid``.

    Returns an array of shape (len(k_grid), 3).
    """
    k0, wr = _wr(config, wr)
    check_validity(pulse, M, wr)
    k_grid = np.atleast_1d(np.asarray(k_grid, float))
    c = _integrate_batch(
        pulse.amplitude_alpha, pulse.sigma_t, k_grid / k0, M, wr, pulse.theta, pulse.delta, pulse.t_center
    )
    return np.abs(c[:, M - 1 : M + 2]) ** 2


def equator_transfer(alpha, sigma, M: int = 9, config: ExperimentConfig | None = None, wr=None):
    """Mirror transfer at the two equators for arrays of (alpha, sigma).

    Returns (up, down): population of order +1 starting at k = -k0 and of
    order -1 starting at k = +k0.
    """
    k0, wr = _wr(config, wr)
    alpha, sigma = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(sigma, float))
    shape = alpha.shape
    c = _integrate_batch(
        np.concatenate([alpha.ravel(), alpha.ravel()]),
        np.concatenate([sigma.ravel(), sigma.ravel()]),
        np.concatenate([-np.ones(alpha.size), np.ones(alpha.size)]),
        M,
        wr,
    )
    up = np.abs(c[: alpha.size, M + 1]) ** 2
    down = np.abs(c[alpha.size :, M - 1]) ** 2
    return up.reshape(shape), down.reshape(shape)


def acceptance_width(pulse: BraggPulse, M: int = 9, config: ExperimentConfig | None = None, n_grid: int = 161) -> float:
    """Full width (1/um) of the region around k = -k0 where transfer exceeds one half."""
    config = config or ExperimentConfig()
    k = np.linspace(-2 * config.k0, 0.0, n_grid)
    up = transfer_spectrum(pulse, k, M, config)[:, 2]
    above = k[up > 0.5]
    if above.size == 0:
        return 0.0
    return float(above.max() - above.min())


@dataclass
class ScanResult:
    sigma: np.ndarray
    alpha: np.ndarray
    transfer_up: np.ndarray  # shape (len(sigma), len(alpha))
    transfer_down: np.ndarray

    def contour_points(self, target: float, tol: float = 0.02) -> np.ndarray:
        """Grid points (sigma, alpha) whose transfer lies within ``tol`` of ``target``."""
        i, j = np.nonzero(np.abs(self.transfer_up - target) < tol)
        return np.column_stack([self.sigma[i], self.alpha[j]])

    def high_efficiency_regions(self, threshold: float = 0.98) -> int:
        """Number of disconnected grid regions with transfer above ``threshold``."""
        _, count = label(self.transfer_up > threshold)
        return int(count)

    def best(self) -> tuple[float, float, float]:
        i, j = np.unravel_index(np.argmax(self.transfer_up), self.transfer_up.shape)
        return float(self.sigma[i]), float(self.alpha[j]), float(self.transfer_up[i, j])

    def rows(self):
        for i, s in enumerate(self.sigma):
            for j, a in enumerate(self.alpha):
                yield s, a, self.transfer_up[i, j], self.transfer_down[i, j]


def scan_pulse_parameters(sigma_range, alpha_range, M: int = 9, config: ExperimentConfig | None = None) -> ScanResult:
    """Equator transfer on the grid sigma_range x alpha_range."""
    sigma = np.asarray(sigma_range, float)
    alpha = np.asarray(alpha_range, float)
    up = np.empty((sigma.size, alpha.size))
    down = np.empty_like(up)
    for i, s in enumerate(sigma):
        up[i], down[i] = equator_transfer(alpha, s, M, config)
    return ScanResult(sigma, alpha, up, down)


def find_pulse(
    target_transfer: float,
    initial_guess=(0.4, 3.0),
    M: int = 9,
    config: ExperimentConfig | None = None,
    bounds=((0.0, 3.0), (0.5, 6.0)),
    tol: float = 1e-3,
    grid: int = 9,
    zoom_steps: int = 10,
) -> BraggPulse:
    """Search (alpha, sigma) so the equator transfer hits ``target_transfer``.

    A batched grid around ``initial_guess`` is repeatedly shrunk around its
    best point. If that stalls, a bounded quasi-Newton step polishes the
    squared residual.
    """
    if not 0 <= target_transfer <= 1:
        raise ValueError("target transfer must lie in [0, 1]")
    if isinstance(initial_guess, BraggPulse):
        initial_guess = (initial_guess.amplitude_alpha, initial_guess.sigma_t)
    lo = np.array([bounds[0][0], bounds[1][0]], float)
    hi = np.array([bounds[0][1], bounds[1][1]], float)

    def residuals(a, s):
        up, _ = equator_transfer(a, s, M, config)
        return np.abs(up - target_transfer)

    best_x = np.clip(np.asarray(initial_guess, float), lo, hi)
    best_r = float(residuals(best_x[0], best_x[1]))
    half = 0.25 * (hi - lo)
    goal = 0.1 * tol
    for _ in range(zoom_steps):
        if best_r < goal:
            break
        axes = [np.clip(np.linspace(c - w, c + w, grid), l, h) for c, w, l, h in zip(best_x, half, lo, hi)]
        A, S = np.meshgrid(*axes, indexing="ij")
        r = residuals(A, S)
        i = np.unravel_index(np.argmin(r), r.shape)
        if r[i] < best_r:
            best_x, best_r = np.array([A[i], S[i]]), float(r[i])
        half = half * 0.4
    if best_r >= tol:
        res = minimize(
            lambda x: float(residuals(x[0], x[1])) ** 2,
            best_x,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"ftol": 1e-14, "gtol": 1e-12, "maxfun": 100},
        )
        r = float(residuals(res.x[0], res.x[1]))
        if r < best_r:
            best_x, best_r = res.x, r
    if best_r >= tol:
        raise SearchError(f"no pulse reaches transfer {target_transfer} (best residual {best_r:.3g})", best_r)
    return BraggPulse(amplitude_alpha=float(best_x[0]), sigma_t=float(best_x[1]))
