"""Correlation estimators, bootstrap errors and fits for event data.

Detected momenta are binned on a grid of boxes of size 2 sigma_d lambda_d
centred on each halo. Box centres sit at half-integer multiples of the
box size. Point reflection through the halo centre (same-halo partner)
and through the origin (cross-halo partner) therefore map boxes onto
boxes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import curve_fit

from .errors import DataError, FitError
from .model import BinSpec, bell_envelope, quantum_correlator
from .simulate import EventStore, PhaseEvents
from .units import ExperimentConfig, wrap_phase

DEFAULT_RESAMPLES = 200


# binning


@dataclass
class BinGrid:
    """Analysis boxes in the equatorial band of both halos.

    Columns 0..n-1 are upper-halo boxes and n..2n-1 lower-halo boxes with
    the same index triples.
    """

    k0: float
    size: np.ndarray  # box edge per axis (1/um)
    index: np.ndarray  # (n, 3) integer box indices relative to a halo centre

    @classmethod
    def from_config(cls, config: ExperimentConfig, lam=None) -> "BinGrid":
        lam = np.broadcast_to(np.asarray(config.bin_lambda if lam is None else lam, float), (3,))
        size = 2 * config.sigma_k * lam
        r_lo = config.k0 - config.shell_width / 2
        r_hi = config.k0 + config.shell_width / 2
        reach = np.ceil(r_hi / size).astype(int) + 1
        axes = [np.arange(-r, r) for r in reach]
        idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        centre = (idx + 0.5) * size
        r = np.linalg.norm(centre, axis=1)
        elevation = np.abs(centre[:, 2]) / np.where(r > 0, r, 1)
        keep = (r >= r_lo) & (r <= r_hi) & (elevation <= math.sin(math.radians(config.theta_tol)))
        return cls(k0=config.k0, size=size, index=idx[keep])

    @property
    def n(self) -> int:
        return len(self.index)

    def _lookup(self):
        if not hasattr(self, "_table"):
            lo = self.index.min(axis=0)
            span = self.index.max(axis=0) - lo + 1
            keys = np.ravel_multi_index((self.index - lo).T, span)
            order = np.argsort(keys)
            self._table = (lo, span, keys[order], order)
        return self._table

    def columns(self, index: np.ndarray) -> np.ndarray:
        """Column of each index triple within one halo, or -1 if not a band box."""
        lo, span, keys, order = self._lookup()
        rel = index - lo
        inside = np.all((rel >= 0) & (rel < span), axis=1)
        out = np.full(len(index), -1)
        if inside.any():
            q = np.ravel_multi_index(rel[inside].T, span)
            pos = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
            hit = keys[pos] == q
            sub = np.where(hit, order[pos], -1)
            out[np.nonzero(inside)[0]] = sub
        return out

    def assign(self, k: np.ndarray) -> np.ndarray:
        """Column for each momentum (1/um), -1 outside the band."""
        k = np.asarray(k, float).reshape(-1, 3)
        upper = k[:, 2] >= 0
        centre = np.where(upper, self.k0, -self.k0)
        u = k - np.column_stack([np.zeros_like(centre), np.zeros_like(centre), centre])
        idx = np.floor(u / self.size).astype(np.int64)
        col = self.columns(idx)
        return np.where(col < 0, -1, col + np.where(upper, 0, self.n))

    def partners(self) -> np.ndarray:
        """Column of the reflected box -i-1 within the same halo."""
        return self.columns(-self.index - 1)

    def pair_sets(self) -> dict:
        """Unordered column pairs for each correlation class."""
        n = self.n
        mirror = self.partners()
        if np.any(mirror < 0):
            raise DataError("analysis band is not reflection symmetric")
        j = np.arange(n)
        half = j < mirror
        return {
            "same_upper": (j[half], mirror[half]),
            "same_lower": (j[half] + n, mirror[half] + n),
            "between": (j, mirror + n),
        }


def count_matrix(events: PhaseEvents, grid: BinGrid, config: ExperimentConfig) -> sparse.csr_matrix:
    """Shots x boxes matrix of detection counts."""
    col = grid.assign(events.wavenumbers(config))
    ok = col >= 0
    data = np.ones(ok.sum())
    return sparse.csr_matrix(
        (data, (events.shot_id[ok], col[ok])), shape=(events.n_shots, 2 * grid.n)
    )


# bootstrap


def resample_weights(n_shots: int, n_resamples: int, seed: int) -> np.ndarray:
    """Multiplicity of every shot in each bootstrap resample."""
    children = np.random.SeedSequence(seed).spawn(n_resamples)
    w = np.empty((n_resamples, n_shots))
    for i, child in enumerate(children):
        draw = np.random.default_rng(child).integers(0, n_shots, n_shots)
        w[i] = np.bincount(draw, minlength=n_shots)
    return w


def bootstrap(statistic, shots, n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> float:
    """Spread of ``statistic`` over resamples of ``shots`` drawn with replacement."""
    if n_resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    shots = np.asarray(shots) if not isinstance(shots, (list, tuple)) else shots
    n = len(shots)
    if n < 2:
        raise DataError("bootstrap uncertainty is undefined for fewer than two shots")
    children = np.random.SeedSequence(seed).spawn(n_resamples)
    values = []
    for child in children:
        idx = np.random.default_rng(child).integers(0, n, n)
        sample = shots[idx] if isinstance(shots, np.ndarray) else [shots[i] for i in idx]
        values.append(statistic(sample))
    return float(np.std(values, ddof=1))


# correlation estimates


@dataclass
class CorrelationSet:
    phase: float
    n_shots: int
    c_same: float
    c_same_err: float
    c_between: float
    c_between_err: float
    e: float
    e_err: float
    excluded_bins: int = 0

    def as_row(self) -> dict:
        return asdict(self)


def _class_ratio(coinc, means, pairs):
    """Shot-averaged coincidences over the product of mean singles.

    ``coinc`` has shape (..., shots-averaged) already reduced; ``means`` has
    boxes on the last axis.
    """
    left, right = pairs
    denom = np.sum(means[..., left] * means[..., right], axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return coinc / denom


def correlation_components(x: sparse.csr_matrix, grid: BinGrid, weights=None) -> dict:
    """Same-halo and cross-halo normalized correlations.

    With ``weights`` (resamples x shots) every statistic is returned per
    resample.
    """
    pairs = grid.pair_sets()
    n_shots = x.shape[0]
    totals = np.asarray(x.sum(axis=0)).ravel()
    live = totals > 0
    out = {}
    if weights is None:
        means = totals / n_shots
    else:
        means = np.asarray((x.T @ weights.T).T) / n_shots
    for name, (left, right) in pairs.items():
        keep = live[left] & live[right]
        left, right = left[keep], right[keep]
        per_shot = np.asarray(x[:, left].multiply(x[:, right]).sum(axis=1)).ravel()
        coinc = per_shot.mean() if weights is None else weights @ per_shot / n_shots
        out[name] = _class_ratio(coinc, means, (left, right))
    same = 0.5 * (out["same_upper"] + out["same_lower"])
    between = out["between"]
    with np.errstate(invalid="ignore", divide="ignore"):
        e = (between - same) / (between + same)
    return {
        "same": same,
        "between": between,
        "e": e,
        "excluded": int((~live).sum()),
    }


def estimate_correlations(
    store: EventStore,
    config: ExperimentConfig,
    lam=None,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> list[CorrelationSet]:
    """Integrated same-halo and cross-halo correlations for every phase."""
    if store.n_phases == 0:
        raise DataError("event store holds no phases")
    grid = BinGrid.from_config(config, lam)
    if grid.n == 0:
        raise DataError("no analysis boxes fit inside the equatorial band")
    results = []
    for i, events in enumerate(store.phases):
        if events.n_shots < 2:
            raise DataError(f"phase {i} has fewer than two shots")
        x = count_matrix(events, grid, config)
        point = correlation_components(x, grid)
        w = resample_weights(events.n_shots, n_resamples, seed + 7919 * i)
        boot = correlation_components(x, grid, w)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            spread = {k: float(np.nanstd(boot[k], ddof=1)) for k in ("same", "between", "e")}
        results.append(
            CorrelationSet(
                phase=events.phase,
                n_shots=events.n_shots,
                c_same=float(point["same"]),
                c_same_err=spread["same"],
                c_between=float(point["between"]),
                c_between_err=spread["between"],
                e=float(point["e"]),
                e_err=spread["e"],
                excluded_bins=point["excluded"],
            )
        )
    return results


def shuffle_shots(store: EventStore, seed: int = 0) -> EventStore:
    """Copy of ``store`` with every detection moved to a random shot of its phase."""
    rng = np.random.default_rng(seed)
    phases = []
    for ph in store.phases:
        ids = rng.integers(0, ph.n_shots, len(ph.shot_id))
        phases.append(PhaseEvents(ph.phase, ph.n_shots, ids, ph.velocity, ph.port))
    return EventStore(store.config_hash, store.seed, phases)


# fits


@dataclass
class FitResult:
    amplitude: float
    amplitude_err: float
    phase_offset: float
    phase_offset_err: float
    baseline: float
    baseline_err: float
    r_squared: float

    def __call__(self, phase):
        return self.baseline + self.amplitude * np.cos(np.asarray(phase) + self.phase_offset)


def _r_squared(y, model, w):
    mean = np.sum(w * y) / np.sum(w)
    ss_tot = np.sum(w * (y - mean) ** 2)
    ss_res = np.sum(w * (y - model) ** 2)
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return float(np.clip(1 - ss_res / ss_tot, 0.0, 1.0))


def fit_sinusoid(phases, values, errors=None) -> FitResult:
    """Weighted fit of baseline + amplitude cos(phase + offset), unit frequency.

    Linear in (baseline, c, s) with amplitude cos(phase + offset)
    = c cos(phase) + s sin(phase). Uncertainties follow from the parameter
    covariance with ``errors`` taken as absolute.
    """
    x = np.asarray(phases, float)
    y = np.asarray(values, float)
    if len(x) < 4:
        raise FitError("need at least four points for a sinusoid fit")
    if np.ptp(x) < np.pi - 1e-9:
        raise FitError("phases must span at least pi")
    sig = np.ones_like(y) if errors is None else np.asarray(errors, float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(sig))):
        raise FitError("non-finite values; too few coincidences to fit")
    if np.any(sig <= 0):
        raise FitError("uncertainties must be positive")
    w = 1 / sig**2
    design = np.column_stack([np.ones_like(x), np.cos(x), np.sin(x)])
    normal = design.T @ (design * w[:, None])
    if np.linalg.cond(normal) > 1e12:
        raise FitError("singular design matrix")
    cov = np.linalg.inv(normal)
    b, c, s = cov @ (design.T @ (w * y))
    if errors is None:
        dof = max(len(x) - 3, 1)
        cov = cov * np.sum((y - design @ [b, c, s]) ** 2) / dof
    amp = math.hypot(c, s)
    offset = math.atan2(-s, c)
    if amp > 0:
        grad_a = np.array([0.0, c / amp, s / amp])
        grad_o = np.array([0.0, s / amp**2, -c / amp**2])
        amp_err = math.sqrt(grad_a @ cov @ grad_a)
        off_err = math.sqrt(grad_o @ cov @ grad_o)
    else:
        amp_err, off_err = math.sqrt(cov[1, 1]), math.pi
    return FitResult(
        amplitude=amp,
        amplitude_err=amp_err,
        phase_offset=offset,
        phase_offset_err=off_err,
        baseline=float(b),
        baseline_err=math.sqrt(cov[0, 0]),
        r_squared=_r_squared(y, design @ [b, c, s], w),
    )


@dataclass
class Extraction:
    e_fit: FitResult
    same_fit: FitResult
    between_fit: FitResult
    visibility: float
    visibility_err: float
    e0: float
    e0_err: float
    s_max: float
    s_max_err: float
    offset_difference: float  # same minus between, wrapped
    offset_difference_err: float

    @property
    def violates_chsh(self) -> bool:
        return self.s_max > 2

    @property
    def at_classical_bound(self) -> bool:
        return self.s_max >= 2 - 1e-9

    def pi_offset_sigma(self) -> float:
        """Distance of the same/between offset difference from pi in units of its error."""
        return abs(wrap_phase(self.offset_difference - np.pi)) / self.offset_difference_err

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items()}
        out["violates_chsh"] = self.violates_chsh
        out["at_classical_bound"] = self.at_classical_bound
        return out


def visibility(fit: FitResult) -> float:
    """Fringe contrast (max - min)/(max + min) of a fitted correlation curve."""
    return fit.amplitude / fit.baseline


def extract_E_and_S(correlations: list[CorrelationSet]) -> Extraction:
    """Fit E, both correlation classes and derive the visibility and S_max."""
    phase = np.array([c.phase for c in correlations])

    def errs(name):
        e = np.array([getattr(c, name) for c in correlations])
        return None if np.any(e <= 0) or not np.all(np.isfinite(e)) else e

    e_fit = fit_sinusoid(phase, [c.e for c in correlations], errs("e_err"))
    same = fit_sinusoid(phase, [c.c_same for c in correlations], errs("c_same_err"))
    between = fit_sinusoid(phase, [c.c_between for c in correlations], errs("c_between_err"))
    v_same, v_between = visibility(same), visibility(between)

    def v_err(f):
        v = visibility(f)
        return v * math.hypot(f.amplitude_err / f.amplitude if f.amplitude else 0, f.baseline_err / f.baseline)

    e0 = e_fit.amplitude
    return Extraction(
        e_fit=e_fit,
        same_fit=same,
        between_fit=between,
        visibility=0.5 * (v_same + v_between),
        visibility_err=0.5 * math.hypot(v_err(same), v_err(between)),
        e0=e0,
        e0_err=e_fit.amplitude_err,
        s_max=2 * math.sqrt(2) * e0,
        s_max_err=2 * math.sqrt(2) * e_fit.amplitude_err,
        offset_difference=wrap_phase(same.phase_offset - between.phase_offset),
        offset_difference_err=math.hypot(same.phase_offset_err, between.phase_offset_err),
    )


@dataclass
class HeightFit:
    h: float
    h_err: float
    r_squared: float

    @property
    def envelope(self) -> float:
        return bell_envelope(self.h)

    @property
    def envelope_err(self) -> float:
        return 2 * self.h_err / (self.h + 2) ** 2


def fit_h_vs_lambda(lams, e_values, e_errors, Phi: float, A=(0.0, 0.0, 0.0), h0: float = 1.0) -> HeightFit:
    """One-parameter weighted fit of the correlator against bin size.

    ``lams`` holds one isotropic lambda per point, or a 3-vector per point.
    """
    lams = np.asarray(lams, float)
    if lams.ndim == 1:
        lams = np.repeat(lams[:, None], 3, axis=1)
    y = np.asarray(e_values, float)
    if len(y) < 4:
        raise FitError("need E at four or more bin sizes")
    sig = None if e_errors is None else np.asarray(e_errors, float)

    def model(idx, h):
        return np.array([quantum_correlator(Phi, h, BinSpec(lams[int(i)], A)) for i in idx])

    idx = np.arange(len(y), dtype=float)
    try:
        popt, pcov = curve_fit(model, idx, y, p0=[h0], sigma=sig, absolute_sigma=sig is not None, bounds=(1e-9, np.inf))
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"correlation height fit failed: {exc}") from exc
    w = np.ones_like(y) if sig is None else 1 / sig**2
    return HeightFit(h=float(popt[0]), h_err=float(np.sqrt(pcov[0, 0])), r_squared=_r_squared(y, model(idx, popt[0]), w))
