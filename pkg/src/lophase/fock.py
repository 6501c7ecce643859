"""Truncated Fock-space states and operators.

Multi-mode amplitudes are stored flat in C order with mode 0 slowest, i.e.
index (n_0, ..., n_{k-1}) lives at n_0 * dim^{k-1} + ... + n_{k-1}.  All modes
of a state share one truncation dimension.

Truncation policy: every constructor computes the tail mass it discarded and
raises :class:`TruncationError` when the tail exceeds ``tail_cap``
(default 1e-8).  Quadrature eigenvectors are delta-normalized and carry
``improper=True`` instead of a tail figure.

Conventions: X(theta) = a e^{-i theta} + a^+ e^{i theta}, so [X(0), X(pi/2)] =
2i and the vacuum has Var X = 1.  The squeeze operator is
S(eps) = exp[(eps* a^2 - eps a^+^2)/2]; for eps = s real, Var X(0) = e^{-2s}.
The 50:50 beamsplitter sends slot a to (a - b)/sqrt(2) and slot b to
(a + b)/sqrt(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .specfun import hermite_sequence

__all__ = [
    "TruncationError",
    "FockVector",
    "DensityMatrix",
    "ModeOp",
    "coherent_state",
    "squeezed_vacuum",
    "two_mode_squeezed",
    "quadrature_eigenvector",
    "vacuum_state",
    "fock_basis_state",
    "tensor",
    "annihilator",
    "creator",
    "number_op",
    "quadrature_op",
    "displacement_op",
    "squeeze_op",
    "exp_annihilation",
    "exp_creation",
    "apply_one_mode",
    "expect_one_mode",
    "beamsplitter_5050",
    "partial_trace",
    "state_fidelity",
    "trace_distance",
]

DEFAULT_TAIL_CAP = 1e-8


class TruncationError(ValueError):
    """Raised when a discarded Fock-space tail exceeds the configured cap."""


@dataclass(frozen=True)
class FockVector:
    """A (possibly multi-mode) state vector in the truncated Fock basis."""

    num_modes: int
    dim: int
    amplitudes: np.ndarray
    improper: bool = False  # delta-normalized quadrature eigenvectors
    tail: float = 0.0  # truncation tail mass reported by the constructor

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape != (self.dim**self.num_modes,):
            raise ValueError(
                f"amplitude shape {amps.shape} does not match "
                f"{self.num_modes} mode(s) of dimension {self.dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "FockVector":
        return FockVector(
            self.num_modes, self.dim, self.amplitudes / self.norm(),
            improper=self.improper, tail=self.tail,
        )

    def reshaped(self) -> np.ndarray:
        """View with one axis per mode."""
        return self.amplitudes.reshape((self.dim,) * self.num_modes)

    def density(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(self.num_modes, self.dim, np.outer(a, a.conj()), tail=self.tail)


@dataclass(frozen=True)
class DensityMatrix:
    """A (possibly multi-mode) density operator in the truncated Fock basis."""

    num_modes: int
    dim: int
    entries: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        m = np.ascontiguousarray(self.entries, dtype=np.complex128)
        object.__setattr__(self, "entries", m)
        d = self.dim**self.num_modes
        if m.shape != (d, d):
            raise ValueError(f"entry shape {m.shape}, expected ({d}, {d})")

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def validate(self, check_positive: bool = False, atol: float = 1e-10) -> None:
        """Hermiticity within 1e-12 elementwise, trace within atol of one,
        and (optionally, O(d^3)) eigenvalues above -1e-10."""
        m = self.entries
        herm = np.max(np.abs(m - m.conj().T))
        if herm > 1e-12:
            raise ValueError(f"not hermitian: max |rho - rho^+| = {herm:.3e}")
        if abs(self.trace() - 1.0) > atol + self.tail:
            raise ValueError(f"trace {self.trace()} not within {atol} of 1")
        if check_positive:
            lo = float(np.linalg.eigvalsh(m).min())
            if lo < -1e-10:
                raise ValueError(f"negative eigenvalue {lo:.3e}")


@dataclass(frozen=True)
class ModeOp:
    """A single-mode operator tag: kind, target mode, optional parameter."""

    kind: str
    mode: int = 0
    param: complex | float | None = None

    _KINDS = ("annihilate", "create", "number", "quadrature", "displacement", "squeeze")

    def matrix(self, dim: int) -> np.ndarray:
        if self.kind == "annihilate":
            return annihilator(dim)
        if self.kind == "create":
            return creator(dim)
        if self.kind == "number":
            return number_op(dim)
        if self.kind == "quadrature":
            return quadrature_op(float(self.param or 0.0), dim)
        if self.kind == "displacement":
            return displacement_op(complex(self.param), dim)
        if self.kind == "squeeze":
            return squeeze_op(complex(self.param), dim)
        raise ValueError(f"unknown ModeOp kind {self.kind!r}; one of {self._KINDS}")


# ---------------------------------------------------------------------------
# state constructors
# ---------------------------------------------------------------------------

def _check_tail(tail: float, tail_cap: float, what: str) -> float:
    tail = max(float(tail), 0.0)
    if tail > tail_cap:
        raise TruncationError(
            f"{what}: discarded tail mass {tail:.3e} exceeds cap {tail_cap:.1e}; "
            f"raise dim or loosen tail_cap"
        )
    return tail


def coherent_state(alpha: complex, dim: int, tail_cap: float = DEFAULT_TAIL_CAP) -> FockVector:
    """|alpha> with amplitudes e^{-|alpha|^2/2} alpha^n / sqrt(n!)."""
    alpha = complex(alpha)
    n = np.arange(dim)
    if alpha == 0:
        amps = np.zeros(dim, dtype=np.complex128)
        amps[0] = 1.0
        return FockVector(1, dim, amps)
    r = abs(alpha)
    logmag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1.0)
    phases = np.exp(1j * n * np.angle(alpha))
    amps = np.exp(logmag) * phases
    tail = _check_tail(1.0 - float(np.vdot(amps, amps).real), tail_cap, f"coherent_state(alpha={alpha})")
    return FockVector(1, dim, amps, tail=tail)


def squeezed_vacuum(epsilon: complex, dim: int, tail_cap: float = DEFAULT_TAIL_CAP) -> FockVector:
    """S(eps)|0> for eps = s e^{i theta}: even amplitudes
    (-e^{i theta} tanh s)^k sqrt((2k)!) / (2^k k! sqrt(cosh s))."""
    epsilon = complex(epsilon)
    s = abs(epsilon)
    amps = np.zeros(dim, dtype=np.complex128)
    if s == 0:
        amps[0] = 1.0
        return FockVector(1, dim, amps)
    theta = np.angle(epsilon)
    k = np.arange((dim + 1) // 2)
    logmag = (
        -0.5 * math.log(math.cosh(s))
        + k * math.log(math.tanh(s))
        + 0.5 * gammaln(2 * k + 1.0)
        - k * math.log(2.0)
        - gammaln(k + 1.0)
    )
    amps[2 * k] = np.exp(logmag) * np.exp(1j * k * (theta + math.pi))
    tail = _check_tail(1.0 - float(np.vdot(amps, amps).real), tail_cap, f"squeezed_vacuum(eps={epsilon})")
    return FockVector(1, dim, amps, tail=tail)


def two_mode_squeezed(eta: float, phase: float, dim: int, tail_cap: float = DEFAULT_TAIL_CAP) -> FockVector:
    """sqrt(1-eta^2) sum_n (eta e^{i phase})^n |n, n>, 0 <= eta < 1."""
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"two_mode_squeezed requires 0 <= eta < 1, got {eta}")
    n = np.arange(dim)
    diag = math.sqrt(1.0 - eta * eta) * (eta * np.exp(1j * phase)) ** n
    amps = np.zeros(dim * dim, dtype=np.complex128)
    amps[n * dim + n] = diag
    tail = _check_tail(eta ** (2 * dim), tail_cap, f"two_mode_squeezed(eta={eta})")
    return FockVector(2, dim, amps, tail=tail)


def quadrature_eigenvector(x: float, theta: float, dim: int) -> FockVector:
    """Improper eigenvector of X(theta) with <n|x,theta> =
    (2 pi)^{-1/4} H_n(x/sqrt2) e^{-x^2/4} e^{i n theta} / sqrt(2^n n!)."""
    n = np.arange(dim)
    h = hermite_sequence(x / math.sqrt(2.0), dim - 1, normalized=True)
    amps = 2.0**-0.25 * h * np.exp(1j * n * theta)
    return FockVector(1, dim, amps.astype(np.complex128), improper=True)


def vacuum_state(num_modes: int, dim: int) -> FockVector:
    amps = np.zeros(dim**num_modes, dtype=np.complex128)
    amps[0] = 1.0
    return FockVector(num_modes, dim, amps)


def fock_basis_state(ns, dim: int) -> FockVector:
    """|n_0, ..., n_{k-1}>."""
    ns = tuple(int(n) for n in np.atleast_1d(ns))
    if any(not 0 <= n < dim for n in ns):
        raise ValueError(f"occupation {ns} outside [0, {dim})")
    flat = 0
    for n in ns:
        flat = flat * dim + n
    amps = np.zeros(dim ** len(ns), dtype=np.complex128)
    amps[flat] = 1.0
    return FockVector(len(ns), dim, amps)


def tensor(*states: FockVector) -> FockVector:
    """Tensor product; mode order follows argument order."""
    dims = {s.dim for s in states}
    if len(dims) != 1:
        raise ValueError("tensor requires equal per-mode dimensions")
    amps = states[0].amplitudes
    for s in states[1:]:
        amps = np.kron(amps, s.amplitudes)
    return FockVector(
        sum(s.num_modes for s in states),
        states[0].dim,
        amps,
        improper=any(s.improper for s in states),
        tail=float(sum(s.tail for s in states)),
    )


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------

def annihilator(dim: int) -> np.ndarray:
    a = np.zeros((dim, dim), dtype=np.complex128)
    n = np.arange(1, dim)
    a[n - 1, n] = np.sqrt(n)
    return a


def creator(dim: int) -> np.ndarray:
    return annihilator(dim).conj().T


def number_op(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=np.complex128))


def quadrature_op(theta: float, dim: int) -> np.ndarray:
    a = annihilator(dim)
    return a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)


def exp_annihilation(c: complex, dim: int) -> np.ndarray:
    """exp(c a), upper triangular: [m, n] = c^{n-m} sqrt(n!/m!) / (n-m)!."""
    m, n = np.indices((dim, dim))
    k = n - m
    with np.errstate(divide="ignore", invalid="ignore"):
        logcoef = 0.5 * (gammaln(n + 1.0) - gammaln(m + 1.0)) - gammaln(np.where(k >= 0, k, 0) + 1.0)
    mat = np.zeros((dim, dim), dtype=np.complex128)
    mask = k >= 0
    mat[mask] = np.exp(logcoef[mask]) * np.power(complex(c), k[mask])
    return mat


def exp_creation(c: complex, dim: int) -> np.ndarray:
    """exp(c a^+), lower triangular."""
    return exp_annihilation(np.conj(c), dim).conj().T


def displacement_op(alpha: complex, dim: int) -> np.ndarray:
    """D(alpha) = exp(alpha a^+ - alpha* a), truncated generator exponential.

    Exactly unitary at every dimension; matrix elements deviate from the
    infinite-dimensional operator only near the cutoff (use exp_creation /
    exp_annihilation products when elementwise exactness matters more than
    unitarity).
    """
    alpha = complex(alpha)
    a = annihilator(dim)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def squeeze_op(epsilon: complex, dim: int) -> np.ndarray:
    """S(eps) = exp[(eps* a^2 - eps a^+^2)/2], truncated generator exponential."""
    a = annihilator(dim)
    a2 = a @ a
    gen = 0.5 * (np.conj(epsilon) * a2 - epsilon * a2.conj().T)
    return expm(gen)


def apply_one_mode(mat: np.ndarray, state: FockVector, mode: int) -> FockVector:
    """Apply a single-mode matrix to one mode of a multi-mode vector."""
    d = state.dim
    k = state.num_modes
    pre = d**mode
    post = d ** (k - mode - 1)
    a = state.amplitudes.reshape(pre, d, post)
    out = np.einsum("ij,ajb->aib", mat, a).reshape(-1)
    return FockVector(k, d, out, improper=state.improper, tail=state.tail)


def expect_one_mode(state, mat: np.ndarray, mode: int = 0) -> complex:
    """<O_mode> for a FockVector or DensityMatrix."""
    if isinstance(state, FockVector):
        moved = apply_one_mode(mat, state, mode)
        return complex(np.vdot(state.amplitudes, moved.amplitudes))
    d = state.dim
    k = state.num_modes
    pre = d**mode
    post = d ** (k - mode - 1)
    rho = state.entries.reshape(pre, d, post, pre, d, post)
    red = np.einsum("aibajb->ij", rho)
    return complex(np.trace(mat @ red))


# ---------------------------------------------------------------------------
# beamsplitter
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _bs_blocks(dim: int) -> tuple:
    """Per-total-photon-number blocks of exp[(pi/4)(a b^+ - a^+ b)].

    Block n acts on amplitudes over |k, n-k> for the k kept by the truncation;
    the generator is restricted before exponentiating, so every block is
    exactly orthogonal and blocks with n <= dim-1 are exact.
    """
    blocks = []
    for n in range(2 * dim - 1):
        k_lo = max(0, n - dim + 1)
        k_hi = min(n, dim - 1)
        ks = np.arange(k_lo, k_hi + 1)
        L = ks.size
        g = np.zeros((L, L))
        for i, k in enumerate(ks[:-1]):
            # <k, n-k| G |k+1, n-k-1> and its antisymmetric partner
            val = math.sqrt((k + 1) * (n - k))
            g[i, i + 1] = val
            g[i + 1, i] = -val
        blocks.append((ks, expm(math.pi / 4.0 * g)))
    return tuple(blocks)


def beamsplitter_5050(state: FockVector, mode_a: int, mode_b: int) -> FockVector:
    """50:50 beamsplitter on (mode_a, mode_b): coherent amplitudes map as
    (alpha, beta) -> ((alpha - beta)/sqrt2, (alpha + beta)/sqrt2)."""
    if mode_a == mode_b:
        raise ValueError("beamsplitter needs two distinct modes")
    d = state.dim
    arr = np.moveaxis(state.reshaped(), (mode_a, mode_b), (-2, -1))
    lead = arr.shape[:-2]
    arr = arr.reshape(-1, d, d)
    out = np.zeros_like(arr)
    for n, (ks, block) in enumerate(_bs_blocks(d)):
        sub = arr[:, ks, n - ks]
        out[:, ks, n - ks] = sub @ block.T
    out = np.moveaxis(out.reshape(*lead, d, d), (-2, -1), (mode_a, mode_b))
    return FockVector(
        state.num_modes, d, out.reshape(-1),
        improper=state.improper, tail=state.tail,
    )


# ---------------------------------------------------------------------------
# reductions and distances
# ---------------------------------------------------------------------------

def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Trace out all modes not listed in ``keep`` (order preserved)."""
    keep = tuple(int(m) for m in np.atleast_1d(keep))
    k = rho.num_modes
    d = rho.dim
    if any(not 0 <= m < k for m in keep) or len(set(keep)) != len(keep):
        raise ValueError(f"bad mode subset {keep} for {k} modes")
    t = rho.entries.reshape((d,) * (2 * k))
    # label row indices 0..k-1 and column indices k..2k-1, contract traced pairs
    row = list(range(k))
    col = list(range(k, 2 * k))
    for m in range(k):
        if m not in keep:
            col[m] = row[m]
    out_idx = [row[m] for m in keep] + [col[m] for m in keep]
    red = np.einsum(t, row + col, out_idx)
    dd = d ** len(keep)
    return DensityMatrix(len(keep), d, red.reshape(dd, dd), tail=rho.tail)


def _as_density(state) -> np.ndarray:
    if isinstance(state, FockVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return state.entries


def state_fidelity(a, b) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2;
    |<a|b>|^2 for two pure states, <psi|rho|psi> for pure vs mixed."""
    if isinstance(a, FockVector) and isinstance(b, FockVector):
        return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    if isinstance(a, FockVector):
        return float(np.real(a.amplitudes.conj() @ b.entries @ a.amplitudes))
    if isinstance(b, FockVector):
        return state_fidelity(b, a)
    # (sum of singular values of sqrt(rho) sqrt(sigma))^2; equivalent to the
    # sqrt(rho) sigma sqrt(rho) eigenvalue form but stable for rank-deficient
    # inputs, where clipped eigenvalue noise would enter under a square root
    def _sqrtm(m):
        lam, u = np.linalg.eigh(m)
        return (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.conj().T

    s = np.linalg.svd(_sqrtm(a.entries) @ _sqrtm(b.entries), compute_uv=False)
    return float(s.sum() ** 2)


def trace_distance(a, b) -> float:
    """(1/2) || rho - sigma ||_1."""
    diff = _as_density(a) - _as_density(b)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())
