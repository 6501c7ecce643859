"""Phase ensembles: laser states with an unknown optical phase.

A PhaseEnsemble is a uniform mixture over a K-point phase grid on [0, 2pi).
Each grid point phi_k carries one pure multi-mode component whose factors
rotate rigidly with phi_k, plus parametric local-oscillator records.  The
phase integral dphi/2pi becomes a K-point Riemann sum, which is exact for
trigonometric polynomials of degree < K; truncated Fock matrix elements are
such polynomials, so K > 2N reproduces the continuous average to machine
precision.

Local oscillators are never Fock-expanded.  A strong LO contributes only its
amplitude and phase (the parametric limit), so each LOParam is a classical
record: amplitude r_o and the affine phase rule phi_k + offset.

Factors:
  RotatingPureFactor   amplitudes(phi) = base * exp(i * mult * phi * exponents)
  FixedMixedFactor     one phase-independent density matrix (the input slot)
  PointwiseMixedFactor one density matrix per grid point (measurement output)

At most one mixed factor is allowed; everything else stays pure per point,
keeping memory linear in K.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fock import (
    DEFAULT_TAIL_CAP,
    DensityMatrix,
    FockVector,
    coherent_state,
    squeezed_vacuum,
    two_mode_squeezed,
)

__all__ = [
    "LOParam",
    "RotatingPureFactor",
    "FixedMixedFactor",
    "PointwiseMixedFactor",
    "PhaseEnsemble",
    "uniform_phase_grid",
    "single_laser_ensemble",
    "pump_locked_ensemble",
    "cvqt_initial_ensemble",
]


@dataclass(frozen=True)
class LOParam:
    """Parametric local oscillator: phase at grid point phi is phi + offset."""

    amplitude: float
    phase_offset: float = 0.0
    classical: bool = True  # never Fock-expanded

    def phase_at(self, phi):
        return phi + self.phase_offset

    def manifest(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "phase_offset": self.phase_offset,
            "classical": self.classical,
        }


@dataclass(frozen=True)
class RotatingPureFactor:
    """Pure factor whose grid dependence is a rigid phase rotation.

    amplitudes_at(phi) = base.amplitudes * exp(i * multiplier * phi * exponents)
    where exponents defaults to the total photon number of each basis state,
    i.e. the factor at phi is exp(i phi N_tot) applied to the base.  A coherent
    base |r> becomes |r e^{i phi}>; a squeezed base picks up squeeze phase
    2 phi; a two-mode squeezed base picks up pair phase 2 phi.
    """

    modes: tuple
    base: FockVector
    multiplier: int = 1
    exponents: np.ndarray | None = None

    def __post_init__(self):
        if self.exponents is None:
            d, k = self.base.dim, self.base.num_modes
            tot = np.zeros((d,) * k)
            for ax in range(k):
                shape = [1] * k
                shape[ax] = d
                tot = tot + np.arange(d).reshape(shape)
            object.__setattr__(self, "exponents", tot.reshape(-1))
        if len(self.modes) != self.base.num_modes:
            raise ValueError("factor mode count does not match its base state")

    def amplitudes_at(self, phi: float) -> np.ndarray:
        return self.base.amplitudes * np.exp(1j * self.multiplier * phi * self.exponents)

    def amplitudes_grid(self, phases: np.ndarray) -> np.ndarray:
        """(K, dim^modes) array of per-grid-point amplitudes."""
        return self.base.amplitudes[None, :] * np.exp(
            1j * self.multiplier * np.outer(phases, self.exponents)
        )

    def mean_photons(self) -> float:
        a = self.base.amplitudes
        return float(np.real(np.vdot(a, self.exponents * a)))

    def describe(self) -> dict:
        return {
            "kind": "rotating_pure",
            "modes": list(self.modes),
            "multiplier": self.multiplier,
            "tail": self.base.tail,
        }


@dataclass(frozen=True)
class FixedMixedFactor:
    """A phase-independent density-matrix slot (the teleport input mode)."""

    modes: tuple
    rho: DensityMatrix

    def rho_at(self, k: int) -> DensityMatrix:
        return self.rho

    def mean_photons(self) -> float:
        d, m = self.rho.dim, self.rho.num_modes
        diag = np.real(np.diag(self.rho.entries))
        tot = np.zeros((d,) * m)
        for ax in range(m):
            shape = [1] * m
            shape[ax] = d
            tot = tot + np.arange(d).reshape(shape)
        return float(diag @ tot.reshape(-1))

    def describe(self) -> dict:
        return {"kind": "fixed_mixed", "modes": list(self.modes), "tail": self.rho.tail}


@dataclass(frozen=True)
class PointwiseMixedFactor:
    """One density matrix per grid point (post-measurement ensembles)."""

    modes: tuple
    rhos: tuple

    def rho_at(self, k: int) -> DensityMatrix:
        return self.rhos[k]

    def mean_photons(self) -> float:
        return max(
            float(np.real(np.diag(r.entries)) @ np.arange(r.entries.shape[0]))
            for r in self.rhos
        )

    def describe(self) -> dict:
        return {"kind": "pointwise_mixed", "modes": list(self.modes), "points": len(self.rhos)}


def uniform_phase_grid(K: int, origin: float = 0.0) -> np.ndarray:
    if K < 1:
        raise ValueError("phase grid needs at least one point")
    return (origin + 2.0 * math.pi * np.arange(K) / K) % (2.0 * math.pi)


@dataclass(frozen=True)
class PhaseEnsemble:
    num_modes: int
    dim: int
    phases: np.ndarray
    weights: np.ndarray
    factors: tuple
    los: dict = field(default_factory=dict)
    lo_for_mode: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "weights", weights)
        if phases.shape != weights.shape:
            raise ValueError("phase grid and weights must align")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1 within 1e-12")
        covered = sorted(m for f in self.factors for m in f.modes)
        if covered != list(range(self.num_modes)):
            raise ValueError(f"factors cover modes {covered}, expected 0..{self.num_modes - 1}")
        mixed = [f for f in self.factors if not isinstance(f, RotatingPureFactor)]
        if len(mixed) > 1:
            raise ValueError("at most one mixed factor is supported")

    @property
    def K(self) -> int:
        return self.phases.size

    def factor_of_mode(self, mode: int):
        for f in self.factors:
            if mode in f.modes:
                return f
        raise ValueError(f"mode {mode} not present")

    def max_amplitude(self) -> float:
        """Amplitude proxy sqrt(<n>) maximized over factors; sizes x grids."""
        return max(math.sqrt(max(f.mean_photons(), 0.0)) for f in self.factors)

    def total_tail(self) -> float:
        return float(sum(f.describe().get("tail", 0.0) for f in self.factors))

    def reduced_density(self, mode: int) -> DensityMatrix:
        """Weighted phase-average reduced state of one mode."""
        f = self.factor_of_mode(mode)
        d = self.dim
        if isinstance(f, RotatingPureFactor):
            amps = f.amplitudes_grid(self.phases)  # (K, d^m)
            if len(f.modes) == 1:
                rho = np.einsum("k,kn,km->nm", self.weights, amps, amps.conj())
            else:
                pos = f.modes.index(mode)
                arr = amps.reshape((self.K,) + (d,) * len(f.modes))
                arr = np.moveaxis(arr, 1 + pos, 1).reshape(self.K, d, -1)
                rho = np.einsum("k,knr,kmr->nm", self.weights, arr, arr.conj())
            return DensityMatrix(1, d, rho, tail=f.base.tail)
        # mixed factor: average the per-point matrices, then reduce
        acc = np.zeros((d ** len(f.modes),) * 2, dtype=np.complex128)
        for k, w in enumerate(self.weights):
            acc += w * f.rho_at(k).entries
        rho = DensityMatrix(len(f.modes), d, acc, tail=f.rho_at(0).tail)
        if len(f.modes) == 1:
            return rho
        from .fock import partial_trace

        return partial_trace(rho, [f.modes.index(mode)])

    def implied_trace(self) -> float:
        """Trace of the implied density operator, computed factor-wise."""
        per_point = np.ones(self.K)
        for f in self.factors:
            if isinstance(f, RotatingPureFactor):
                per_point *= float(np.vdot(f.base.amplitudes, f.base.amplitudes).real)
            else:
                per_point *= np.array([f.rho_at(k).trace() for k in range(self.K)])
        return float(self.weights @ per_point)

    def implied_density(self) -> DensityMatrix:
        """Full weighted-sum density operator; guarded against blowup."""
        d_full = self.dim**self.num_modes
        if d_full**2 > 4_000_000:
            raise ValueError(
                f"implied operator would hold {d_full**2} entries; use reduced_density"
            )
        acc = np.zeros((d_full, d_full), dtype=np.complex128)
        order = np.argsort([f.modes[0] for f in self.factors])
        facs = [self.factors[i] for i in order]
        if [m for f in facs for m in f.modes] != list(range(self.num_modes)):
            raise ValueError("implied_density requires contiguous ascending factor modes")
        for k, w in enumerate(self.weights):
            mats = []
            for f in facs:
                if isinstance(f, RotatingPureFactor):
                    v = f.amplitudes_at(self.phases[k])
                    mats.append(np.outer(v, v.conj()))
                else:
                    mats.append(f.rho_at(k).entries)
            full = mats[0]
            for m in mats[1:]:
                full = np.kron(full, m)
            acc += w * full
        return DensityMatrix(self.num_modes, self.dim, acc, tail=self.total_tail())

    def replace(self, **kw) -> "PhaseEnsemble":
        fields = dict(
            num_modes=self.num_modes, dim=self.dim, phases=self.phases,
            weights=self.weights, factors=self.factors, los=self.los,
            lo_for_mode=self.lo_for_mode, meta=self.meta,
        )
        fields.update(kw)
        return PhaseEnsemble(**fields)

    def manifest(self) -> dict:
        return {
            "num_modes": self.num_modes,
            "dim": self.dim,
            "grid_points": int(self.K),
            "weights_uniform": bool(np.allclose(self.weights, 1.0 / self.K)),
            "los": {name: lo.manifest() for name, lo in sorted(self.los.items())},
            "lo_for_mode": {str(m): n for m, n in sorted(self.lo_for_mode.items())},
            "factors": [f.describe() for f in self.factors],
            "meta": dict(self.meta),
        }


def single_laser_ensemble(
    r: float, K: int, N: int, tail_cap: float = DEFAULT_TAIL_CAP, origin: float = 0.0
) -> PhaseEnsemble:
    """Uniform mixture of |r e^{i phi_k}> over the K-point grid."""
    base = coherent_state(r, N, tail_cap=tail_cap)
    phases = uniform_phase_grid(K, origin)
    return PhaseEnsemble(
        num_modes=1,
        dim=N,
        phases=phases,
        weights=np.full(K, 1.0 / K),
        factors=(RotatingPureFactor(modes=(0,), base=base),),
        meta={"kind": "single_laser", "r": r},
    )


def pump_locked_ensemble(
    r_o: float,
    s: float,
    phi_c: float,
    K: int,
    N: int,
    tail_cap: float = DEFAULT_TAIL_CAP,
    origin: float = 0.0,
    squeeze_offset: float = 0.0,
) -> PhaseEnsemble:
    """Squeezed signal locked to the LO through the pump.

    Per grid point phi: signal |0, s e^{i(2 phi + squeeze_offset)}> and an LO
    at phase phi + phi_c from the same laser.  The squeeze phase advances at
    twice the laser phase (frequency-doubled pump), which the rotation rule
    reproduces with multiplier 1 on the photon-number exponents.
    """
    base = squeezed_vacuum(s * np.exp(1j * squeeze_offset), N, tail_cap=tail_cap)
    phases = uniform_phase_grid(K, origin)
    return PhaseEnsemble(
        num_modes=1,
        dim=N,
        phases=phases,
        weights=np.full(K, 1.0 / K),
        factors=(RotatingPureFactor(modes=(0,), base=base),),
        los={"lo": LOParam(r_o, phase_offset=phi_c)},
        lo_for_mode={0: "lo"},
        meta={"kind": "pump_locked", "s": s, "phi_c": phi_c, "squeeze_offset": squeeze_offset},
    )


def cvqt_initial_ensemble(
    r_o,
    eta: float,
    rho_in: DensityMatrix,
    K: int,
    N: int,
    tail_cap: float = DEFAULT_TAIL_CAP,
    origin: float = 0.0,
) -> PhaseEnsemble:
    """Teleportation front end: mode 0 carries the input state, modes (1, 2)
    a two-mode squeezed pair with pair phase 2 phi; LOs l1, l2, l3 sit at
    phases (phi, phi + pi/2, phi).

    ``r_o`` may be a scalar (all three LOs from one laser) or a triple.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"eta must be in [0, 1), got {eta}")
    if rho_in.num_modes != 1 or rho_in.dim != N:
        raise ValueError("rho_in must be single-mode at the shared truncation")
    amps = np.broadcast_to(np.asarray(r_o, dtype=float), (3,))
    base = two_mode_squeezed(eta, 0.0, N, tail_cap=tail_cap)
    phases = uniform_phase_grid(K, origin)
    return PhaseEnsemble(
        num_modes=3,
        dim=N,
        phases=phases,
        weights=np.full(K, 1.0 / K),
        factors=(
            FixedMixedFactor(modes=(0,), rho=rho_in),
            RotatingPureFactor(modes=(1, 2), base=base),
        ),
        los={
            "l1": LOParam(float(amps[0]), phase_offset=0.0),
            "l2": LOParam(float(amps[1]), phase_offset=math.pi / 2),
            "l3": LOParam(float(amps[2]), phase_offset=0.0),
        },
        meta={"kind": "cvqt_initial", "eta": eta},
    )
