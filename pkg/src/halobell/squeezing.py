"""Discrete-mode model of the twin halos.

Each halo is a two-mode squeezed vacuum with squeeze amplitude ``mu``.
Four modes are selected: p and p' from the upper halo and q and q' from
the lower halo. Together they form a quartet whose product state
carries number correlations n_p = n_p' and n_q = n_q'.

Occupation tuples are always ordered (n_p, n_p', n_q, n_q').
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateStateError, DomainError

N_MAX_CAP = 40


@dataclass(frozen=True)
class SqueezeParams:
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.mu < 1.0:
            raise DomainError(f"squeeze amplitude must lie in [0, 1), got {self.mu}")

    @classmethod
    def from_n_bar(cls, n_bar: float) -> "SqueezeParams":
        if n_bar < 0:
            raise DomainError("occupancy must be non-negative")
        return cls(math.sqrt(n_bar / (1.0 + n_bar)))

    @property
    def n_bar(self) -> float:
        return self.mu**2 / (1.0 - self.mu**2)

    @property
    def h(self) -> float:
        x = self.mu**2
        return math.inf if x == 0 else 1.0 / x


@dataclass(frozen=True)
class ModeQuartet:
    p: np.ndarray
    p_prime: np.ndarray
    q: np.ndarray
    q_prime: np.ndarray

    @classmethod
    def from_p(cls, p, k0: float) -> "ModeQuartet":
        """Quartet fixed by one upper-halo momentum and exact Bragg geometry."""
        p = np.asarray(p, dtype=float)
        kz = np.array([0.0, 0.0, 2 * k0])
        p_prime = kz - p
        return cls(p=p, p_prime=p_prime, q=p - kz, q_prime=p_prime - kz)

    def check(self, k0: float, atol: float = 1e-9) -> bool:
        kz = np.array([0.0, 0.0, 2 * k0])
        return (
            np.allclose(self.p + self.p_prime, kz, atol=atol)
            and np.allclose(self.q + self.q_prime, -kz, atol=atol)
            and np.allclose(self.p, self.q + kz, atol=atol)
            and np.allclose(self.p_prime, self.q_prime + kz, atol=atol)
        )


@dataclass
class QuartetState:
    amplitudes: dict
    n_max: int
    tail: float = 0.0

    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def __getitem__(self, key) -> complex:
        return self.amplitudes.get(tuple(key), 0.0)

    def probabilities(self) -> dict:
        return {k: abs(a) ** 2 for k, a in self.amplitudes.items()}


class PairCorrelations(NamedTuple):
    """Joint-detection correlations of the four output port pairs."""

    pp: float  # C_pp'
    qq: float  # C_qq'
    pq: float  # C_pq'
    p_q: float  # C_p'q


def truncation_tail(mu: float, n_max: int) -> float:
    """Probability carried by total pair number s = n + m above ``n_max``."""
    x = mu**2
    if x == 0:
        return 0.0
    # P(s) = (s+1)(1-x)^2 x^s, so P(s > n) = x^(n+1) (n + 2 - (n+1) x)
    return x ** (n_max + 1) * (n_max + 2 - (n_max + 1) * x)


def choose_n_max(mu: float, tol: float = 1e-12) -> int:
    """Smallest truncation whose discarded probability is below ``tol``.

    The tail is also made small relative to the squared occupancy, since the
    normalized correlations are ratios against n_bar^2.
    """
    if mu == 0:
        return 1
    n_bar = mu**2 / (1 - mu**2)
    for n in range(1, N_MAX_CAP + 1):
        tail = truncation_tail(mu, n)
        if tail < tol and tail * (n + 2) ** 2 < tol * min(1.0, n_bar**2):
            return n
    warnings.warn(f"truncation capped at n_max={N_MAX_CAP}; tail {truncation_tail(mu, N_MAX_CAP):.2e}")
    return N_MAX_CAP


def build_quartet_state(params: SqueezeParams, n_max: int | None = None) -> QuartetState:
    """Product of two squeezed vacua restricted to n + m <= n_max, renormalized."""
    mu = params.mu
    if n_max is None:
        n_max = choose_n_max(mu)
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    amps = {}
    for n in range(n_max + 1):
        for m in range(n_max + 1 - n):
            a = (1 - mu**2) * mu ** (n + m)
            if a != 0.0:
                amps[(n, n, m, m)] = a
    norm = math.sqrt(sum(a * a for a in amps.values()))
    amps = {k: complex(a / norm) for k, a in amps.items()}
    return QuartetState(amplitudes=amps, n_max=n_max, tail=truncation_tail(mu, n_max))


def truncate_to_bell(state: QuartetState) -> QuartetState:
    """Keep only the single-pair terms |1,1,0,0> and |0,0,1,1>, renormalized."""
    kept = {k: state[k] for k in ((1, 1, 0, 0), (0, 0, 1, 1)) if state[k] != 0}
    if not kept:
        raise DegenerateStateError("state has no single-pair component")
    norm = math.sqrt(sum(abs(a) ** 2 for a in kept.values()))
    return QuartetState({k: a / norm for k, a in kept.items()}, n_max=1)


def bell_state() -> QuartetState:
    s = 1 / math.sqrt(2)
    return QuartetState({(1, 1, 0, 0): s, (0, 0, 1, 1): s}, n_max=1)


def polarization_amplitudes(state: QuartetState) -> dict:
    """Relabel single-pair terms as two-qubit amplitudes.

    The upper-halo modes (p, p') play the role of H and the lower-halo
    modes (q, q') the role of V, with the left particle written first.
    """
    labels = {
        (1, 1, 0, 0): ("H", "H"),
        (1, 0, 0, 1): ("H", "V"),
        (0, 1, 1, 0): ("V", "H"),
        (0, 0, 1, 1): ("V", "V"),
    }
    out = {v: 0j for v in labels.values()}
    for key, amp in state.amplitudes.items():
        if key not in labels:
            raise DomainError(f"occupation {key} is not a single-pair term")
        out[labels[key]] = complex(amp)
    return out


def discrete_pair_correlations(params: SqueezeParams, phi_L: float, phi_R: float) -> PairCorrelations:
    """Closed-form normalized output correlations C/n_bar^2 of the full squeezed state."""
    if params.mu == 0:
        raise DomainError("correlation height is infinite for mu = 0")
    phase = phi_L + phi_R
    same = 1 + np.sin(phase / 2) ** 2 / params.mu**2
    cross = 1 + np.cos(phase / 2) ** 2 / params.mu**2
    return PairCorrelations(float(same), float(same), float(cross), float(cross))


def correlations_from_state(state: QuartetState) -> PairCorrelations:
    """Expectation of n_k n_k' for the four cross-arm port pairs."""
    acc = np.zeros(4)
    for (a, b, c, d), amp in state.amplitudes.items():
        w = abs(amp) ** 2
        acc += w * np.array([a * b, c * d, a * d, b * c])
    return PairCorrelations(*map(float, acc))


def oracle_quartet_correlations(state: QuartetState, phi_L: float, phi_R: float) -> PairCorrelations:
    """Output correlations by explicit Fock-space propagation of ``state``.

    The values are raw expectations; divide by n_bar^2 to compare with
    :func:`discrete_pair_correlations`.
    """
    from .optics import propagate_quartet

    return correlations_from_state(propagate_quartet(state, phi_L, phi_R))
