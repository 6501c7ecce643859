"""Phase correlation between two independent lasers built by photodetection.

Two equal-amplitude laser fields with unknown phases phi_a, phi_b are mixed
on a 50:50 beamsplitter; weak absorbers monitor the two output ports c and d.
On the relative phase Delta = phi_a - phi_b, the coherent port amplitudes
obey |amp_c|^2 = 2 r_t^2 sin^2(Delta/2) and |amp_d|^2 = 2 r_t^2 cos^2(Delta/2),
so every detected absorption multiplies the Delta posterior by the matching
likelihood while the field amplitude r_t = r_o e^{-R t} decays deterministically
(coherent states are eigenstates of the jump operators; a jump changes the
posterior weights, never r_t).

After p jumps in port c and q in port d the posterior is
sin^{2p}(Delta/2) cos^{2q}(Delta/2) normalized, the probability of the count
split is the Beta-binomial pi^{-1} C(s,p) B(p+1/2, q+1/2), and the photon
number distribution of port c is

  P_c(m) = e^{-2r^2} (2r^2)^m / m! * B(m+p+1/2, q+1/2)/B(p+1/2, q+1/2)
           * 1F1(q+1/2; m+p+q+1; 2r^2)

(port d by swapping p and q).  All probability assembly is done in log space.

The trajectory engine works on the K-point uniform Delta grid.  Because the
total jump probability per step, 4 R r_t^2 dt, does not depend on the
posterior, jump steps can be located by one vectorized scan; only the port
decisions are sequential.  Grid averages of sin^{2p} cos^{2q} are exact
(not just approximate) while 2(p+q) < K, since the integrand is a
trigonometric polynomial; the default grid keeps a factor ~4 margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from ._backend import STEPPER_BACKEND, run_steps
from .specfun import _hyp1f1_log_vec, log_beta

__all__ = [
    "JumpStats",
    "BranchPosterior",
    "PhasePosterior",
    "TrajectoryRecord",
    "bhd_phase_posterior",
    "jump_count_probability",
    "jump_count_pmf",
    "posterior_phase_state",
    "photon_distribution",
    "photon_distribution_quadrature",
    "delta_grid",
    "default_grid_size",
    "mcwf_run",
    "run_trajectories",
]

MAX_STEP_FRACTION = 1e-3  # R dt cap
MAX_FIELD_SQUARED = 1e4  # r_o^2 cap
MAX_STEP_JUMP_PROB = 0.1  # per-step Bernoulli validity
VALIDITY_FLAG_THRESHOLD = 0.1

# validated parameter box of the confluent-hypergeometric evaluator
_HYP_A_MAX = 1000.5
_HYP_B_MAX = 5000.0
_HYP_Z_MAX = 2000.0


@dataclass(frozen=True)
class JumpStats:
    """Count split of the detected absorptions: p in port c, q in port d."""

    s_total: int
    p: int

    def __post_init__(self):
        if not (isinstance(self.s_total, (int, np.integer)) and isinstance(self.p, (int, np.integer))):
            raise ValueError("jump counts must be integers")
        if not 0 <= self.p <= self.s_total:
            raise ValueError(f"need 0 <= p <= s_total, got p={self.p}, s_total={self.s_total}")

    @property
    def q(self) -> int:
        return self.s_total - self.p


@dataclass(frozen=True)
class BranchPosterior:
    """Atomic two-branch phase posterior from a single strong reading."""

    deltas: tuple
    weights: tuple


@dataclass(frozen=True)
class PhasePosterior:
    """Normalized posterior over Delta on a uniform grid, plus the current
    field amplitude r_t."""

    delta_grid: np.ndarray
    weights: np.ndarray
    r_t: float

    def __post_init__(self):
        g = np.ascontiguousarray(self.delta_grid, dtype=float)
        w = np.ascontiguousarray(self.weights, dtype=float)
        object.__setattr__(self, "delta_grid", g)
        object.__setattr__(self, "weights", w)
        if g.shape != w.shape or g.ndim != 1:
            raise ValueError("grid and weights must be 1-d and congruent")
        if np.any(w < 0):
            raise ValueError("negative posterior weight")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("posterior weights must sum to one")
        if self.r_t < 0:
            raise ValueError("r_t must be nonnegative")

    def expect_sin2(self) -> float:
        return float(self.weights @ np.sin(self.delta_grid / 2.0) ** 2)

    def expect_cos2(self) -> float:
        return float(self.weights @ np.cos(self.delta_grid / 2.0) ** 2)

    def mode_location(self) -> float:
        return float(self.delta_grid[int(np.argmax(self.weights))])


def delta_grid(K: int) -> np.ndarray:
    """Uniform K-point grid over [0, 2 pi)."""
    if K < 2:
        raise ValueError("grid needs at least 2 points")
    return 2.0 * math.pi * np.arange(K) / K


def default_grid_size(s_total: int) -> int:
    """Resolves the ~1/sqrt(p) posterior width with margin."""
    return max(1024, 8 * int(s_total))


def bhd_phase_posterior(cos_phi_reading: float) -> BranchPosterior:
    """Posterior branches from one balanced-homodyne cosine reading.

    The reading fixes cos(Delta) only, so the posterior has equal-weight
    branches at +-arccos (mod 2 pi); they merge at readings +-1.
    """
    r = float(cos_phi_reading)
    if not -1.0 <= r <= 1.0:
        raise ValueError(f"cosine reading must lie in [-1, 1], got {r}")
    d = math.acos(r)
    mirror = 2.0 * math.pi - d
    if d == 0.0 or mirror == d:
        return BranchPosterior((d,), (1.0,))
    return BranchPosterior((d, mirror), (0.5, 0.5))


def _log_jump_pmf(s_total: int, p_vals: np.ndarray) -> np.ndarray:
    # C(s,p) B(p+1/2, q+1/2): the two gammaln(s+1) terms cancel, leaving
    # f(p) + f(q) with f(k) = gammaln(k+1/2) - gammaln(k+1).  The symmetric
    # form makes the p <-> q symmetry hold to the last bit.
    q_vals = s_total - p_vals
    f = lambda k: gammaln(k + 0.5) - gammaln(k + 1.0)
    return -math.log(math.pi) + (f(p_vals) + f(q_vals))


def jump_count_probability(s_total: int, p: int) -> float:
    """Probability of p port-c jumps out of s_total: the Beta-binomial(1/2,1/2)
    law pi^{-1} C(s,p) B(p+1/2, q+1/2), evaluated in log space."""
    stats = JumpStats(int(s_total), int(p))
    if stats.s_total > 10**6:
        raise ValueError("jump counts above 1e6 not supported")
    return float(np.exp(_log_jump_pmf(stats.s_total, np.array([stats.p], dtype=float))[0]))


def jump_count_pmf(s_total: int) -> np.ndarray:
    """The full (s_total+1,)-vector of jump_count_probability values."""
    if not 0 <= int(s_total) <= 10**6:
        raise ValueError("s_total out of range")
    p_vals = np.arange(int(s_total) + 1, dtype=float)
    return np.exp(_log_jump_pmf(int(s_total), p_vals))


def _posterior_weights(p: int, q: int, grid: np.ndarray) -> np.ndarray:
    """Normalized sin^{2p}(D/2) cos^{2q}(D/2) on the grid, log-space.

    Zero exponents contribute nothing (skipped so log 0 never meets a 0
    coefficient)."""
    half = grid / 2.0
    logw = np.zeros_like(half)
    with np.errstate(divide="ignore"):
        if p > 0:
            logw += 2.0 * p * np.log(np.abs(np.sin(half)))
        if q > 0:
            logw += 2.0 * q * np.log(np.abs(np.cos(half)))
    w = np.exp(logw - logw.max())
    return w / w.sum()


def posterior_phase_state(s_total: int, p: int, r_t: float, K: int | None = None) -> PhasePosterior:
    """Closed-form posterior after a (p, q) split at amplitude r_t."""
    stats = JumpStats(int(s_total), int(p))
    if K is None:
        K = default_grid_size(stats.s_total)
    grid = delta_grid(K)
    return PhasePosterior(grid, _posterior_weights(stats.p, stats.q, grid), float(r_t))


def photon_distribution(s_total: int, p: int, r_t: float, m, mode: str = "c"):
    """P(m photons in the chosen port) after a (p, q) split at amplitude r_t.

    Log-space assembly of
      e^{-2r^2} (2r^2)^m / m! * B(m+p+1/2, q+1/2)/B(p+1/2, q+1/2)
      * 1F1(q+1/2; m+p+q+1; 2r^2)
    with p <-> q for the d port.  Parameter combinations outside the
    validated evaluator box are rejected, never silently extrapolated.
    """
    stats = JumpStats(int(s_total), int(p))
    if mode not in ("c", "d"):
        raise ValueError(f"mode must be 'c' or 'd', got {mode!r}")
    pp, qq = (stats.p, stats.q) if mode == "c" else (stats.q, stats.p)
    m_arr = np.atleast_1d(np.asarray(m))
    scalar = np.asarray(m).ndim == 0
    if m_arr.size == 0:
        return np.zeros(0)
    if np.any(m_arr < 0) or np.any(m_arr != np.floor(m_arr)):
        raise ValueError("photon numbers must be nonnegative integers")
    m_arr = m_arr.astype(float)
    if r_t < 0:
        raise ValueError("r_t must be nonnegative")
    z = 2.0 * r_t * r_t
    if r_t == 0.0:
        out = (m_arr == 0).astype(float)
        return float(out[0]) if scalar else out
    a = qq + 0.5
    b = m_arr + pp + qq + 1.0
    if a > _HYP_A_MAX or float(b.max()) > _HYP_B_MAX or z > _HYP_Z_MAX:
        raise ValueError(
            "parameters outside the validated evaluation box: need "
            f"q+1/2 <= {_HYP_A_MAX} (got {a}), m+p+q+1 <= {_HYP_B_MAX} "
            f"(got {float(b.max())}), 2 r_t^2 <= {_HYP_Z_MAX} (got {z})"
        )
    logp = (
        -z
        + m_arr * math.log(z)
        - gammaln(m_arr + 1.0)
        + (gammaln(m_arr + pp + 0.5) - gammaln(b))
        - (gammaln(pp + 0.5) - gammaln(pp + qq + 1.0))
        + _hyp1f1_log_vec(a, b, z)
    )
    out = np.exp(logp)
    return float(out[0]) if scalar else out


def photon_distribution_quadrature(
    s_total: int, p: int, r_t: float, m, mode: str = "c", K: int = 8192
):
    """Quadrature crosscheck of photon_distribution.

    The posterior is a mixture of coherent components, so the exact photon
    law is a posterior-weighted mixture of Poisson distributions with means
    2 r_t^2 sin^2(Delta/2) (cos^2 for port d); this evaluates that mixture
    directly on a K-point grid, independent of the hypergeometric assembly.
    """
    stats = JumpStats(int(s_total), int(p))
    if mode not in ("c", "d"):
        raise ValueError(f"mode must be 'c' or 'd', got {mode!r}")
    if r_t < 0:
        raise ValueError("r_t must be nonnegative")
    m_arr = np.atleast_1d(np.asarray(m))
    scalar = np.asarray(m).ndim == 0
    if np.any(m_arr < 0) or np.any(m_arr != np.floor(m_arr)):
        raise ValueError("photon numbers must be nonnegative integers")
    m_arr = m_arr.astype(float)
    grid = delta_grid(K)
    w = _posterior_weights(stats.p, stats.q, grid)
    trig = np.sin(grid / 2.0) ** 2 if mode == "c" else np.cos(grid / 2.0) ** 2
    lam = 2.0 * r_t * r_t * trig
    pos = lam > 0
    out = np.zeros(m_arr.size)
    loglam = np.log(lam[pos])
    for i, mm in enumerate(m_arr):
        pe = np.zeros(K)
        pe[pos] = np.exp(-lam[pos] + mm * loglam - gammaln(mm + 1.0))
        if mm == 0:
            pe[~pos] = 1.0
        out[i] = float(w @ pe)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class TrajectoryRecord:
    """One Monte Carlo wave-function trajectory of the two monitored ports."""

    seed: object
    r_o: float
    decay_rate: float
    dt: float
    n_steps: int
    grid_size: int
    jumps: tuple  # ((time, "c"|"d"), ...) strictly increasing times
    stats: JumpStats
    posterior: PhasePosterior
    r_history: tuple  # ((time, r_t), ...) at start, each jump, end
    validity_ratio: float
    validity_ok: bool
    backend: str
    checkpoints: tuple = ()

    def __post_init__(self):
        times = [t for t, _ in self.jumps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")
        p = sum(1 for _, mode in self.jumps if mode == "c")
        if JumpStats(len(self.jumps), p) != self.stats:
            raise ValueError("jump statistics inconsistent with the jump sequence")


def _validate_step_params(r_o: float, decay_rate: float, dt: float) -> None:
    if r_o < 0 or r_o * r_o > MAX_FIELD_SQUARED:
        raise ValueError(f"need 0 <= r_o^2 <= {MAX_FIELD_SQUARED}, got r_o^2={r_o*r_o}")
    if decay_rate <= 0 or dt <= 0:
        raise ValueError("decay rate and dt must be positive")
    if decay_rate * dt > MAX_STEP_FRACTION:
        raise ValueError(
            f"step-size violation: R dt = {decay_rate*dt:.3e} exceeds {MAX_STEP_FRACTION}"
        )
    if 4.0 * decay_rate * dt * r_o * r_o > MAX_STEP_JUMP_PROB:
        raise ValueError(
            "per-step jump probability 4 R r_o^2 dt = "
            f"{4.0*decay_rate*dt*r_o*r_o:.3e} exceeds {MAX_STEP_JUMP_PROB}; reduce dt"
        )


def mcwf_run(
    r_o: float,
    decay_rate: float,
    dt: float,
    t_end: float,
    seed,
    K: int | None = None,
    checkpoint_steps: tuple = (),
) -> TrajectoryRecord:
    """One trajectory of duration t_end (snapped to a whole number of steps).

    Per step of length dt, a jump fires with probability 4 R r_t^2 dt (the
    posterior-independent total), the port is chosen with the posterior
    expectations of sin^2 / cos^2, and the weights multiply the matching
    likelihood; between jumps the weights are untouched and r_t decays as
    e^{-R t}.  ``seed`` is SeedSequence entropy (int or tuple of ints).
    ``checkpoint_steps`` records posterior snapshots after the given step
    counts, splitting the kernel call without changing its semantics.
    """
    _validate_step_params(r_o, decay_rate, dt)
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    n_steps = int(round(t_end / dt))
    expected = 2.0 * r_o * r_o * -math.expm1(-2.0 * decay_rate * n_steps * dt)
    if K is None:
        K = default_grid_size(int(math.ceil(expected + 10.0 * math.sqrt(expected + 1.0))))
    grid = delta_grid(K)
    sin2 = np.sin(grid / 2.0) ** 2
    cos2 = np.cos(grid / 2.0) ** 2
    weights = np.ones(K)

    steps = np.arange(n_steps, dtype=float)
    p_tot = 4.0 * decay_rate * dt * r_o * r_o * np.exp(-2.0 * decay_rate * dt * steps)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    u_step = rng.random(n_steps)
    u_split = rng.random(n_steps)

    bounds = sorted(set(int(c) for c in checkpoint_steps))
    if any(c < 0 or c > n_steps for c in bounds):
        raise ValueError("checkpoint steps out of range")
    jump_steps_parts = []
    jump_modes_parts = []
    snapshots = []
    start = 0
    for stop in bounds + [n_steps]:
        if stop > start:
            js, jm = run_steps(
                sin2, cos2, weights, p_tot[start:stop], u_step[start:stop], u_split[start:stop]
            )
            jump_steps_parts.append(js + start)
            jump_modes_parts.append(jm)
        if stop in bounds:
            snapshots.append((stop, weights.copy()))
        start = stop
    jump_steps = np.concatenate(jump_steps_parts) if jump_steps_parts else np.zeros(0, dtype=np.int64)
    jump_modes = np.concatenate(jump_modes_parts) if jump_modes_parts else np.zeros(0, dtype=np.uint8)

    jumps = tuple(
        (float((s + 1) * dt), "c" if mode == 0 else "d") for s, mode in zip(jump_steps, jump_modes)
    )
    p = int(np.sum(jump_modes == 0))
    stats = JumpStats(int(jump_steps.size), p)
    t_final = n_steps * dt
    r_of = lambda t: r_o * math.exp(-decay_rate * t)
    history = ((0.0, r_o),) + tuple((t, r_of(t)) for t, _ in jumps) + ((t_final, r_of(t_final)),)
    w = weights / weights.sum()
    posterior = PhasePosterior(grid, w, r_of(t_final))
    ratio = 4.0 * decay_rate * r_o * r_o * dt * stats.s_total
    return TrajectoryRecord(
        seed=seed,
        r_o=float(r_o),
        decay_rate=float(decay_rate),
        dt=float(dt),
        n_steps=n_steps,
        grid_size=K,
        jumps=jumps,
        stats=stats,
        posterior=posterior,
        r_history=history,
        validity_ratio=ratio,
        validity_ok=ratio <= VALIDITY_FLAG_THRESHOLD,
        backend=STEPPER_BACKEND,
        checkpoints=tuple(snapshots),
    )


def run_trajectories(
    num_trajectories: int,
    r_o: float,
    decay_rate: float,
    dt: float,
    t_end: float,
    master_seed: int,
    K: int | None = None,
    stats_only: bool = False,
):
    """Independent trajectories with per-index streams (master_seed, index).

    With stats_only, returns a list of JumpStats (bulk runs keep no grids);
    otherwise full TrajectoryRecord objects.
    """
    if num_trajectories < 0:
        raise ValueError("negative trajectory count")
    out = []
    for idx in range(num_trajectories):
        rec = mcwf_run(r_o, decay_rate, dt, t_end, (int(master_seed), idx), K=K)
        out.append(rec.stats if stats_only else rec)
    return out
