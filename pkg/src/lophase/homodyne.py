"""Balanced homodyne detection with a phase-locked local oscillator.

The difference photocurrent of a balanced detector with a strong LO measures
the signal quadrature X(theta) at the LO phase theta, scaled by the LO
amplitude r.  Working in that limit, the outcome operator for reading x_bar
is the quadrature projector |x_bar, theta><x_bar, theta| on the signal mode;
the LO itself stays a classical record.  For a PhaseEnsemble the grid point
phi_k fixes theta_k = phi_k + offset, and the r, theta outcome integrals
collapse onto each component's own LO record (coherent-state orthogonality),
so

    P(x_bar) = sum_k w_k |<x_bar, theta_k | component_k>|^2

with mixed slots handled by the trace.  Post-measurement components replace
the signal factor by the truncated, renormalized |x_bar, theta_k> (flagged:
the true eigenvector is delta-normalized) and reweight the grid by the
conditional likelihoods.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ensembles import PhaseEnsemble, RotatingPureFactor
from .fock import FockVector
from .specfun import hermite_sequence

__all__ = [
    "MeasurementKernel",
    "HomodyneOutcome",
    "measurement_kernel",
    "default_x_grid",
    "homodyne_probability",
    "homodyne_distribution",
    "homodyne_update",
    "sample_outcome",
    "sample_from_density",
    "strong_lo_residual",
    "write_distribution_csv",
]

DEFAULT_X_STEP = 0.01


@dataclass(frozen=True)
class MeasurementKernel:
    """Cached projector data <n|x, 0> on a uniform quadrature grid.

    The theta dependence is the diagonal phase e^{i n theta}; projector(theta)
    applies it.  Completeness holds on the lower half of the truncated space:
    above n ~ N/2 the classical turning point sqrt(4n+2) approaches the grid
    edge and the discretized resolution of identity degrades.
    """

    dim: int
    x_grid: np.ndarray
    step: float
    psi0: np.ndarray  # (nx, dim) real, <n|x, theta=0>

    def projector(self, theta: float) -> np.ndarray:
        """(nx, dim) complex array of <n|x, theta>."""
        return self.psi0 * np.exp(1j * np.arange(self.dim) * theta)[None, :]

    def completeness_defect(self, n_max: int | None = None) -> float:
        if n_max is None:
            n_max = self.dim // 2
        block = self.psi0[:, : n_max + 1]
        gram = self.step * (block.T @ block)
        return float(np.max(np.abs(gram - np.eye(n_max + 1))))

    def manifest(self) -> dict:
        return {
            "dim": self.dim,
            "x_min": float(self.x_grid[0]),
            "x_max": float(self.x_grid[-1]),
            "step": self.step,
            "points": int(self.x_grid.size),
            "completeness_defect_half_space": self.completeness_defect(),
        }


@dataclass(frozen=True)
class HomodyneOutcome:
    x_bar: float
    lo_amplitude: float
    density: float  # P(x_bar)
    conditional_weights: np.ndarray  # posterior over the phase grid

    def __post_init__(self):
        w = np.asarray(self.conditional_weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("conditional weights must be nonnegative and sum to 1")
        object.__setattr__(self, "conditional_weights", w)


def quadrature_waveforms(xs: np.ndarray, dim: int) -> np.ndarray:
    """(nx, dim) array of <n|x, theta=0> evaluated exactly at the points xs."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    h = hermite_sequence(xs / math.sqrt(2.0), dim - 1, normalized=True)  # (dim, nx)
    return np.ascontiguousarray((2.0**-0.25) * h.T)


@lru_cache(maxsize=32)
def _kernel_cached(dim: int, x_min: float, x_max: float, step: float) -> MeasurementKernel:
    nx = int(round((x_max - x_min) / step)) + 1
    xs = x_min + step * np.arange(nx)
    return MeasurementKernel(dim=dim, x_grid=xs, step=step, psi0=quadrature_waveforms(xs, dim))


def measurement_kernel(dim: int, x_min: float, x_max: float, step: float = DEFAULT_X_STEP) -> MeasurementKernel:
    return _kernel_cached(int(dim), float(x_min), float(x_max), float(step))


def default_x_grid(max_amplitude: float, step: float = DEFAULT_X_STEP) -> tuple:
    """(x_min, x_max) covering 12 + 4 * amplitude on both sides."""
    half = 12.0 + 4.0 * max(max_amplitude, 0.0)
    return (-half, half)


def _signal_thetas(ensemble: PhaseEnsemble, signal_mode: int) -> np.ndarray:
    name = ensemble.lo_for_mode.get(signal_mode)
    if name is None:
        raise ValueError(f"signal mode {signal_mode} has no paired LO record")
    lo = ensemble.los[name]
    return lo.phase_at(ensemble.phases), lo


def _per_point_likelihoods(ensemble, signal_mode, psi):
    """|<x, theta_k|.>|^2 (or the mixed-slot trace) per grid point.

    psi is an (nx, N) block of <n|x, 0> rows; returns (nx, K).
    """
    thetas, _ = _signal_thetas(ensemble, signal_mode)
    f = ensemble.factor_of_mode(signal_mode)
    n = np.arange(ensemble.dim)
    rot = np.exp(-1j * np.outer(thetas, n))  # (K, N): e^{-i n theta_k}
    if isinstance(f, RotatingPureFactor):
        amps = f.amplitudes_grid(ensemble.phases)  # (K, d^m)
        if len(f.modes) == 1:
            ov = psi @ (rot * amps).T  # (nx, K)
            return np.abs(ov) ** 2
        pos = f.modes.index(signal_mode)
        d = ensemble.dim
        arr = amps.reshape((ensemble.K,) + (d,) * len(f.modes))
        arr = np.moveaxis(arr, 1 + pos, 1).reshape(ensemble.K, d, -1)
        arr = rot[:, :, None] * arr
        ov = np.einsum("xn,knr->xkr", psi, arr)
        return np.sum(np.abs(ov) ** 2, axis=2)
    # mixed slot: <x,theta|rho_k|x,theta>
    out = np.empty((psi.shape[0], ensemble.K))
    for k in range(ensemble.K):
        u = psi * rot[k][None, :]  # (nx, N) of conj(<n|x,theta_k>)
        rho = f.rho_at(k).entries
        out[:, k] = np.real(np.einsum("xn,nm,xm->x", u, rho, u.conj()))
    return out


def homodyne_probability(ensemble: PhaseEnsemble, signal_mode: int, x_bar) -> np.ndarray | float:
    """Outcome density P(x_bar); accepts a scalar or an array of readings."""
    scalar = np.isscalar(x_bar)
    xs = np.atleast_1d(np.asarray(x_bar, dtype=float))
    like = _per_point_likelihoods(ensemble, signal_mode, quadrature_waveforms(xs, ensemble.dim))
    p = like @ ensemble.weights
    return float(p[0]) if scalar else p


def _kernel_for(ensemble: PhaseEnsemble, step: float = DEFAULT_X_STEP) -> MeasurementKernel:
    x_min, x_max = default_x_grid(ensemble.max_amplitude(), step)
    return measurement_kernel(ensemble.dim, x_min, x_max, step)


def homodyne_distribution(ensemble: PhaseEnsemble, signal_mode: int, step: float = DEFAULT_X_STEP):
    """(x_grid, P) over the ensemble's default grid."""
    kern = _kernel_for(ensemble, step)
    like = _per_point_likelihoods(ensemble, signal_mode, kern.psi0)
    return kern.x_grid, like @ ensemble.weights


def homodyne_update(ensemble: PhaseEnsemble, signal_mode: int, x_bar: float) -> PhaseEnsemble:
    """Condition the ensemble on reading x_bar at the signal mode.

    The signal factor becomes the truncated |x_bar, theta_k>, renormalized to
    unit norm (delta-normalized states cannot live in a finite basis; the
    manifest flags the renormalization).  Correlated multi-mode factors are
    the teleport pipeline's job and are rejected here.
    """
    f = ensemble.factor_of_mode(signal_mode)
    if isinstance(f, RotatingPureFactor) and len(f.modes) > 1:
        raise ValueError(
            "measurement inside a correlated factor: use the teleport pipeline"
        )
    fx = quadrature_waveforms(np.array([float(x_bar)]), ensemble.dim)
    like = _per_point_likelihoods(ensemble, signal_mode, fx)[0]  # (K,)
    p = float(like @ ensemble.weights)
    if p <= 0.0 or not np.isfinite(p):
        raise ValueError(f"outcome x_bar={x_bar} has zero probability density")
    new_w = ensemble.weights * like / p
    new_w = new_w / new_w.sum()

    _, lo = _signal_thetas(ensemble, signal_mode)
    n = np.arange(ensemble.dim)
    fx = fx[0]  # <n|x,0> values
    nrm = float(np.linalg.norm(fx))
    base = FockVector(
        1, ensemble.dim, (fx / nrm) * np.exp(1j * n * lo.phase_offset), improper=False
    )
    post = RotatingPureFactor(modes=(signal_mode,), base=base)
    factors = tuple(post if signal_mode in g.modes else g for g in ensemble.factors)
    meta = dict(ensemble.meta)
    meta.setdefault("measurements", [])
    meta["measurements"] = list(meta["measurements"]) + [
        {
            "mode": signal_mode,
            "x_bar": float(x_bar),
            "density": p,
            "renormalized_improper": True,
            "truncated_norm": nrm,
        }
    ]
    return ensemble.replace(weights=new_w, factors=factors, meta=meta)


def sample_from_density(x_grid: np.ndarray, pdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws from a tabulated density; u uniform in [0, 1)."""
    if np.any(pdf < -1e-12):
        raise ValueError("density has negative entries")
    step = float(x_grid[1] - x_grid[0])
    cdf = np.cumsum(np.clip(pdf, 0.0, None)) * step
    total = cdf[-1]
    if total <= 0:
        raise ValueError("density integrates to zero on the grid")
    if np.any(np.diff(cdf) < 0):
        raise ValueError("non-monotone CDF; refine the grid")
    cdf = cdf / total
    u = np.asarray(u, dtype=float)
    j = np.searchsorted(cdf, u, side="left")
    j = np.clip(j, 0, cdf.size - 1)
    lo = np.where(j > 0, cdf[j - 1], 0.0)
    seg = cdf[j] - lo
    frac = np.where(seg > 0, (u - lo) / np.where(seg > 0, seg, 1.0), 0.5)
    return x_grid[j] - step / 2 + frac * step


def sample_outcome(ensemble: PhaseEnsemble, signal_mode: int, rng) -> HomodyneOutcome:
    """Draw one reading by inverse CDF on the discretized density."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    kern = _kernel_for(ensemble)
    like = _per_point_likelihoods(ensemble, signal_mode, kern.psi0)
    pdf = like @ ensemble.weights
    x = float(sample_from_density(kern.x_grid, pdf, rng.random(1))[0])
    # snap to the grid so the conditional weights match a representable reading
    idx = int(np.clip(round((x - kern.x_grid[0]) / kern.step), 0, kern.x_grid.size - 1))
    lk = like[idx]
    p = float(lk @ ensemble.weights)
    w = ensemble.weights * lk / p
    _, lo = _signal_thetas(ensemble, signal_mode)
    return HomodyneOutcome(
        x_bar=float(kern.x_grid[idx]),
        lo_amplitude=lo.amplitude,
        density=p,
        conditional_weights=w / w.sum(),
    )


def strong_lo_residual(signal_mean_n: float, signal_var_x: float, r: float) -> dict:
    """Size of the neglected term when r X(theta) stands in for the exact
    difference-current operator a_l^+ a_s + a_l a_s^+.

    On |r e^{i theta}> (x) signal the second moment obeys, exactly,
        <D^2> = r^2 <X(theta)^2> + <n_s>,
    so the amplitude-level residual ratio is sqrt(<n_s>) / (r sqrt(<X^2>)).
    """
    if r <= 0:
        raise ValueError("LO amplitude must be positive")
    exact_second = r * r * signal_var_x + signal_mean_n
    return {
        "second_moment_exact": exact_second,
        "second_moment_approx": r * r * signal_var_x,
        "second_moment_relative_error": signal_mean_n / exact_second,
        "amplitude_ratio": math.sqrt(max(signal_mean_n, 0.0)) / (r * math.sqrt(signal_var_x)),
    }


def write_distribution_csv(path, x_grid: np.ndarray, pdf: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_bar", "density"])
        for x, p in zip(x_grid, pdf):
            w.writerow([f"{x:.6f}", f"{p:.12e}"])
