"""Monte Carlo generation of per-shot detection events.

Each shot draws Poisson numbers of atom pairs in both halos. A pair is
treated as one atom pair shared coherently between the upper and lower
halo modes. Its joint phase fixes the probabilities of the four output
port pairs. Unpaired background atoms, finite detection efficiency and
detector dark counts are then added.

Halo geometry, in coordinates centred on each halo (+k0 z for the upper,
-k0 z for the lower):

* the analysed band is the spherical shell |u| in k0 +/- shell_width/2
  within theta_tol of the equator;
* atoms are generated uniformly in a cylindrical annulus that contains the
  band plus a guard margin of (guard_lambda + 4) sigma_d per axis. Every
  analysis bin then sees a locally uniform density and undisturbed pair
  partners.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .model import gravitational_phase, mode_volume
from .optics import pair_port_probabilities
from .units import ExperimentConfig, dark_density, velocity_to_wavenumber, wavenumber_to_velocity

PORTS = ("p", "p'", "q", "q'", "background")
P, P_PRIME, Q, Q_PRIME, BACKGROUND = range(5)

# outcome -> (port of atom 1, port of atom 2); atom 1 is in the (p, q) arm
OUTCOME_PORTS = np.array([[P, P_PRIME], [Q, Q_PRIME], [P, Q_PRIME], [Q, P_PRIME]])

FORMAT_TAG = "halobell-events v1"


@dataclass(frozen=True)
class Geometry:
    k0: float
    rho_lo: float
    rho_hi: float
    z_half: float

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Geometry":
        sigma = config.sigma_k
        margin = sigma * (config.guard_lambda + 4.0)
        m_rho = math.hypot(margin[0], margin[1])
        theta = math.radians(config.theta_tol)
        r_lo = config.k0 - config.shell_width / 2
        r_hi = config.k0 + config.shell_width / 2
        return cls(
            k0=config.k0,
            rho_lo=max(0.0, r_lo * math.cos(theta) - m_rho),
            rho_hi=r_hi + m_rho,
            z_half=r_hi * math.sin(theta) + margin[2],
        )

    @property
    def volume(self) -> float:
        """Generation volume of one halo region (1/um^3)."""
        return math.pi * (self.rho_hi**2 - self.rho_lo**2) * 2 * self.z_half

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform points in the annulus, relative to the halo centre."""
        rho = np.sqrt(rng.uniform(self.rho_lo**2, self.rho_hi**2, n))
        phi = rng.uniform(0.0, 2 * np.pi, n)
        z = rng.uniform(-self.z_half, self.z_half, n)
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


@dataclass(frozen=True)
class SimulationRates:
    """Mean numbers per shot."""

    pairs_per_halo: float
    background_per_region: float
    dark_per_region: float
    pair_fraction: float

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "SimulationRates":
        """Rates that give detected data the configured correlation height.

        Atoms fill the generation volume at n_bar per Gaussian mode volume.
        Pairs alone would give a height 1/n_bar. Unpaired atoms and dark
        counts dilute it, so the pair fraction is set to reach ``config.h``
        in the detected data.
        """
        geom = Geometry.from_config(config)
        n0 = config.n_bar / mode_volume(config.sigma_k)
        dark = dark_density(config)
        eta = config.detection_efficiency
        dilution = ((eta * n0 + dark) / (eta * n0)) ** 2 if eta > 0 else 1.0
        fraction = config.h * config.n_bar * dilution
        if fraction > 1.0 + 1e-12:
            raise ConfigError(
                f"pair fraction {fraction:.3g} exceeds 1; h = {config.h} is unreachable at this occupancy"
            )
        fraction = min(fraction, 1.0)
        atoms = n0 * geom.volume
        return cls(
            pairs_per_halo=fraction * atoms / 2,
            background_per_region=(1 - fraction) * atoms,
            dark_per_region=dark * geom.volume,
            pair_fraction=fraction,
        )


@dataclass
class PairEvent:
    halo: str
    k: np.ndarray
    k_prime: np.ndarray
    joint_phase: float
    outcome: int = -1


@dataclass
class DetectionEvent:
    shot_id: int
    velocity: np.ndarray
    port: str


@dataclass
class Shot:
    shot_id: int
    velocity: np.ndarray  # (n, 3) mm/s
    port: np.ndarray  # (n,) codes into PORTS

    def events(self) -> list[DetectionEvent]:
        return [DetectionEvent(self.shot_id, v, PORTS[c]) for v, c in zip(self.velocity, self.port)]

    def __len__(self) -> int:
        return len(self.port)


def shot_rng(seed: int, phase_index: int, shot_id: int) -> np.random.Generator:
    """Counter-based generator for one shot, independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, phase_index, shot_id])))


def _pairs(rng, geom: Geometry, config: ExperimentConfig, halo_sign: int, mean: float, Phi: float, grav: float):
    n = rng.poisson(mean)
    centre = np.array([0.0, 0.0, halo_sign * config.k0])
    k = centre + geom.sample(rng, n)
    resid = rng.normal(0.0, 1.0, (n, 3)) * config.sigma_k
    k_prime = 2 * centre - k + resid
    # same for every port pair once the halo offset is removed
    rate = 2 * config.constants.hbar_over_m * config.k0
    phi = -rate * resid[:, 2] * (config.t3 / 2 - config.t2)
    joint = Phi + phi + grav
    cum = np.cumsum(pair_port_probabilities(joint), axis=1)
    outcome = np.minimum((rng.uniform(size=(n, 1)) > cum).sum(axis=1), 3)
    return k, k_prime, joint, outcome


# whether each atom of a pair leaves through the lower port, per outcome
_FIRST_LOWER = np.array([0.0, 1.0, 0.0, 1.0])
_SECOND_LOWER = np.array([0.0, 1.0, 1.0, 0.0])


def _place(k, k_prime, outcome, halo_sign, k0):
    """Detected momenta for each outcome, atom 1 on the (p, q) arm."""
    shift = np.array([0.0, 0.0, 2 * k0])
    # upper-halo pairs start in (p, p'), lower-halo pairs in (q, q')
    in_upper = halo_sign > 0
    offset = 0.0 if in_upper else 1.0
    first_lower = _FIRST_LOWER[outcome][:, None] - offset
    second_lower = _SECOND_LOWER[outcome][:, None] - offset
    return k - shift * first_lower, k_prime - shift * second_lower


def generate_shot(
    config: ExperimentConfig,
    Phi: float,
    seed: int,
    shot_id: int = 0,
    phase_index: int = 0,
    rates: SimulationRates | None = None,
    return_pairs: bool = False,
):
    """One experimental run at global phase ``Phi``.

    Returns a :class:`Shot`; with ``return_pairs`` also the generated
    :class:`PairEvent` list (before detection losses).
    """
    rng = shot_rng(seed, phase_index, shot_id)
    geom = Geometry.from_config(config)
    rates = rates or SimulationRates.from_config(config)
    grav = gravitational_phase(config)["global"] if config.include_gravity else 0.0

    momenta, ports, pair_events = [], [], []
    for sign, name in ((1, "upper"), (-1, "lower")):
        k, kp, joint, outcome = _pairs(rng, geom, config, sign, rates.pairs_per_halo, Phi, grav)
        a, b = _place(k, kp, outcome, sign, config.k0)
        momenta += [a, b]
        ports += [OUTCOME_PORTS[outcome, 0], OUTCOME_PORTS[outcome, 1]]
        if return_pairs:
            pair_events += [PairEvent(name, k[i], kp[i], float(joint[i]), int(outcome[i])) for i in range(len(k))]
    for sign in (1, -1):
        n = rng.poisson(rates.background_per_region)
        momenta.append(np.array([0.0, 0.0, sign * config.k0]) + geom.sample(rng, n))
        ports.append(np.full(n, BACKGROUND))

    k_all = np.concatenate(momenta) if momenta else np.empty((0, 3))
    port = np.concatenate(ports).astype(np.int8)
    keep = rng.uniform(size=len(port)) < config.detection_efficiency
    k_all, port = k_all[keep], port[keep]

    n_dark = rng.poisson(2 * rates.dark_per_region)
    signs = np.where(rng.uniform(size=n_dark) < 0.5, 1.0, -1.0)
    dark = geom.sample(rng, n_dark)
    dark[:, 2] += signs * config.k0
    k_all = np.concatenate([k_all, dark])
    port = np.concatenate([port, np.full(n_dark, BACKGROUND, np.int8)])

    shot = Shot(shot_id, wavenumber_to_velocity(k_all, config.constants).reshape(-1, 3), port)
    return (shot, pair_events) if return_pairs else shot


# event store


@dataclass
class PhaseEvents:
    phase: float
    n_shots: int
    shot_id: np.ndarray
    velocity: np.ndarray
    port: np.ndarray | None = None

    def wavenumbers(self, config: ExperimentConfig) -> np.ndarray:
        return velocity_to_wavenumber(self.velocity, config.constants).reshape(-1, 3)


@dataclass
class EventStore:
    config_hash: str
    seed: int
    phases: list = field(default_factory=list)  # list[PhaseEvents]
    manifest_hash: str = ""

    @property
    def n_phases(self) -> int:
        return len(self.phases)

    def save(self, directory) -> list[Path]:
        directory = Path(directory)
        try:
            directory.mkdir(parents=True, exist_ok=True)
            paths = []
            for i, ph in enumerate(self.phases):
                path = directory / f"events_phase{i:02d}.txt"
                header = [
                    FORMAT_TAG,
                    f"config_hash {self.config_hash}",
                    f"seed {self.seed}",
                    f"manifest {self.manifest_hash}",
                    f"phase_index {i}",
                    f"phase {ph.phase!r}",
                    f"n_shots {ph.n_shots}",
                    "columns shot_id vx vy vz phase_index",
                ]
                rows = np.column_stack([ph.shot_id, ph.velocity, np.full(len(ph.shot_id), i)])
                with open(path, "w") as fh:
                    fh.write("".join(f"# {line}\n" for line in header))
                    np.savetxt(fh, rows, fmt=["%d", "%.6f", "%.6f", "%.6f", "%d"])
                paths.append(path)
        except OSError as exc:
            raise DataError(f"cannot write event store: {exc}") from exc
        return paths

    @classmethod
    def load(cls, directory) -> "EventStore":
        directory = Path(directory)
        files = sorted(directory.glob("events_phase*.txt"))
        if not files:
            raise DataError(f"no event files in {directory}")
        store = None
        for i, path in enumerate(files):
            meta = {}
            with open(path) as fh:
                for line in fh:
                    if not line.startswith("#"):
                        break
                    key, _, value = line[1:].strip().partition(" ")
                    meta[key] = value
            if meta.get(FORMAT_TAG.split()[0]) != FORMAT_TAG.split()[1]:
                raise DataError(f"{path} is not an event file")
            try:
                rows = np.loadtxt(path, comments="#", ndmin=2)
                n_shots = int(meta["n_shots"])
                phase = float(meta["phase"])
            except (ValueError, KeyError) as exc:
                raise DataError(f"malformed event file {path}: {exc}") from exc
            if rows.size == 0:
                rows = np.empty((0, 5))
            if rows.shape[1] != 5 or (len(rows) and rows[:, 0].max() >= n_shots):
                raise DataError(f"malformed records in {path}")
            if store is None:
                store = cls(meta.get("config_hash", ""), int(meta.get("seed", 0)), manifest_hash=meta.get("manifest", ""))
            store.phases.append(PhaseEvents(phase, n_shots, rows[:, 0].astype(np.int64), rows[:, 1:4]))
        return store


def _simulate_phase(args) -> PhaseEvents:
    config, Phi, phase_index, n_shots, seed = args
    rates = SimulationRates.from_config(config)
    ids, vel, port = [], [], []
    for s in range(n_shots):
        shot = generate_shot(config, Phi, seed, s, phase_index, rates)
        ids.append(np.full(len(shot), s, np.int64))
        vel.append(shot.velocity)
        port.append(shot.port)
    return PhaseEvents(Phi, n_shots, np.concatenate(ids), np.concatenate(vel).reshape(-1, 3), np.concatenate(port))


def run_campaign(
    config: ExperimentConfig,
    phases=None,
    shots_per_phase: int = 2900,
    seed: int = 0,
    workers: int = 1,
) -> EventStore:
    """Simulate ``shots_per_phase`` runs at every phase. Deterministic in ``seed``."""
    if shots_per_phase < 1:
        raise ConfigError("shots_per_phase must be at least 1")
    phases = list(config.phases if phases is None else phases)
    jobs = [(config, float(p), i, shots_per_phase, seed) for i, p in enumerate(phases)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_phase, jobs))
    else:
        results = [_simulate_phase(j) for j in jobs]
    return EventStore(config_hash=config.hash(), seed=seed, phases=results)
