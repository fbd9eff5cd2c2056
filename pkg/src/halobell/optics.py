"""Ideal instantaneous Bragg optics acting on pairs of momentum modes.

A Bragg pulse couples two momentum states separated by 2 k0. Mirror and
beamsplitter pulses are 2x2 unitaries on the mode pair. The interferometer
applies a mirror and then a beamsplitter in each arm. The left arm acts
on (p, q) and the right arm on (p', q').
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm, logm

from .squeezing import QuartetState, bell_state


@dataclass(frozen=True)
class TwoModeUnitary:
    entries: np.ndarray
    label: str = "composite"

    def __matmul__(self, other: "TwoModeUnitary") -> "TwoModeUnitary":
        return TwoModeUnitary(self.entries @ other.entries, "composite")

    @property
    def dagger(self) -> "TwoModeUnitary":
        return TwoModeUnitary(self.entries.conj().T, "inverse-composite")

    def inverse(self) -> "TwoModeUnitary":
        return self.dagger

    def is_unitary(self, atol: float = 1e-12) -> bool:
        m = self.entries
        return np.allclose(m @ m.conj().T, np.eye(2), atol=atol) and abs(abs(np.linalg.det(m)) - 1) < atol


def evolution_operator(pulse_area: float, phi: float) -> TwoModeUnitary:
    """Rabi rotation of the two coupled modes for a pulse of area ``pulse_area``."""
    c = np.cos(pulse_area / 2)
    s = np.sin(pulse_area / 2)
    m = np.array([[c, -1j * np.exp(-1j * phi) * s], [-1j * np.exp(1j * phi) * s, c]])
    label = "mirror" if np.isclose(abs(s), 1) else "beamsplitter"
    return TwoModeUnitary(m, label)


def interferometer_map(phi_half: float, phi_pi: float = np.pi / 2) -> tuple[TwoModeUnitary, TwoModeUnitary]:
    """Mirror followed by beamsplitter in one arm, and its inverse."""
    a = evolution_operator(np.pi / 2, phi_half) @ evolution_operator(np.pi, phi_pi)
    return TwoModeUnitary(a.entries, "composite"), a.dagger


def arm_transform(phi: float, phi_pi: float = np.pi / 2) -> np.ndarray:
    """Expansion of each input creation operator over output creation operators.

    Row j holds the coefficients of input mode j (0 = upper, 1 = lower) on the
    output modes. The upper output port carries an extra sign relative to the
    bare composite pulse; it is a port-labelling convention and leaves every
    probability unchanged.
    """
    a, _ = interferometer_map(phi, phi_pi)
    return a.entries.conj() @ np.diag([-1.0, 1.0])


def _fock_block(generator: np.ndarray, n: int) -> np.ndarray:
    """Representation of a one-body generator on two modes with n particles.

    Basis index r is the occupation of mode 0; mode 1 holds n - r.
    """
    r = np.arange(n + 1)
    h = np.diag(generator[0, 0] * r + generator[1, 1] * (n - r)).astype(complex)
    # a0^dag a1 : |r, n-r> -> sqrt((r+1)(n-r)) |r+1, n-r-1>
    up = np.sqrt((r[:-1] + 1.0) * (n - r[:-1]))
    h[r[1:], r[:-1]] += generator[0, 1] * up
    h[r[:-1], r[1:]] += generator[1, 0] * up
    return expm(h)


def fock_representation(single: np.ndarray, n_max: int) -> list[np.ndarray]:
    """Blocks of the many-body operator induced by a 2x2 single-particle unitary."""
    generator = logm(single)
    return [_fock_block(generator, n) for n in range(n_max + 1)]


@lru_cache(maxsize=256)
def _arm_blocks(phi: float, n_max: int, phi_pi: float = np.pi / 2) -> tuple:
    single = arm_transform(phi, phi_pi).T
    return tuple(fock_representation(single, n_max))


def propagate_quartet(
    state: QuartetState, phi_L: float, phi_R: float, tol: float = 0.0, phi_pi: float = np.pi / 2
) -> QuartetState:
    """Propagate a quartet state through both interferometer arms.

    The (p, q) arm carries the phase ``phi_R`` and the (p', q') arm the phase
    ``phi_L``; only the sum of the two phases affects detection statistics.
    """
    n_max = max(max(a + c, b + d) for a, b, c, d in state.amplitudes)
    left = _arm_blocks(float(phi_R), n_max, float(phi_pi))
    right = _arm_blocks(float(phi_L), n_max, float(phi_pi))

    blocks: dict[tuple[int, int], np.ndarray] = {}
    for (a, b, c, d), amp in state.amplitudes.items():
        nl, nr = a + c, b + d
        block = blocks.setdefault((nl, nr), np.zeros((nl + 1, nr + 1), complex))
        block[a, b] += amp

    out: dict = {}
    for (nl, nr), cin in blocks.items():
        cout = left[nl] @ cin @ right[nr].T
        for r, s in zip(*np.nonzero(np.abs(cout) > tol)):
            key = (int(r), int(s), nl - int(r), nr - int(s))
            out[key] = out.get(key, 0) + complex(cout[r, s])
    return QuartetState(out, n_max=state.n_max, tail=state.tail)


def propagate_bell_state(phi_L: float, phi_R: float, phi_pi: float = np.pi / 2) -> QuartetState:
    return propagate_quartet(bell_state(), phi_L, phi_R, tol=1e-15, phi_pi=phi_pi)


def bell_output_coefficients(phi_L: float, phi_R: float) -> dict:
    """Closed-form output amplitudes for a single pair in the superposition of both halos."""
    s = 2 * np.sqrt(2)
    total = phi_L + phi_R
    return {
        (1, 1, 0, 0): (1 - np.exp(1j * total)) / s,
        (0, 1, 1, 0): 1j * (np.exp(1j * phi_L) + np.exp(-1j * phi_R)) / s,
        (1, 0, 0, 1): 1j * (np.exp(1j * phi_R) + np.exp(-1j * phi_L)) / s,
        (0, 0, 1, 1): (1 - np.exp(-1j * total)) / s,
    }


def pair_port_probabilities(joint_phase) -> np.ndarray:
    """Probabilities of the outcomes (pp', qq', pq', p'q) for one pair.

    Vectorized over ``joint_phase``; the last axis indexes the outcome.
    """
    s = 0.5 * np.sin(np.asarray(joint_phase) / 2) ** 2
    c = 0.5 - s
    return np.stack([s, s, c, c], axis=-1)
