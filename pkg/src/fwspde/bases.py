"""Eigenbasis representation of the state space, semigroup, and norms.

Two analytic bases are provided:

* ``dirichlet_interval`` -- sine modes ``sqrt(2/L) sin(k pi x / L)`` on
  ``(0, L)`` with eigenvalues ``(k pi / L)**2``; scalar fields.
* ``fourier_torus_2d_divfree`` -- divergence-free Fourier modes on the
  2-torus ``[0, 2pi)^2``.  Each wavevector ``k`` with ``0 < |k|_inf <= K``
  contributes one complex mode, stored as a real (cos, sin) amplitude pair
  on a canonical half lattice so that the physical velocity field is real
  and the coefficient vector stays real.  Eigenvalues are ``|k|^2``.

Fields are immutable coefficient vectors against a fixed basis; all
operations are pure.  Pointwise evaluation uses equispaced collocation
grids sized for exact dealiasing of cubic nonlinearities (>= 4x modes on
the interval, >= 4K points per axis on the torus).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dst, fft2, ifft2

DIRICHLET = "dirichlet_interval"
TORUS = "fourier_torus_2d_divfree"

TWO_PI = 2.0 * np.pi


def _torus_wavevectors(k_max):
    """Canonical half-lattice representatives, sorted by (|k|^2, k1, k2).

    One representative per +-k pair: k2 > 0, or k2 == 0 and k1 > 0.
    """
    reps = []
    for k1 in range(-k_max, k_max + 1):
        for k2 in range(-k_max, k_max + 1):
            if (k1, k2) == (0, 0):
                continue
            if k2 > 0 or (k2 == 0 and k1 > 0):
                reps.append((k1, k2))
    reps.sort(key=lambda k: (k[0] * k[0] + k[1] * k[1], k[0], k[1]))
    return np.array(reps, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Fixed analytic eigenbasis of the linear operator.

    ``eigenvalues[k]`` is the decay rate gamma_k of coefficient k under the
    semigroup.  For the torus basis, coefficients come in (cos, sin) pairs
    per wavevector and the corresponding eigenvalue appears twice.
    """

    kind: str
    n_modes: int
    eigenvalues: np.ndarray
    domain_length: float
    k_max: int = 0
    wavevectors: np.ndarray | None = None  # (n_pairs, 2) for the torus
    unit_vectors: np.ndarray | None = None  # k-perp / |k|, (n_pairs, 2)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.ndim != 1 or len(ev) != self.n_modes:
            raise ValueError("eigenvalues must be 1-d with n_modes entries")
        if not (ev > 0).all():
            raise ValueError("eigenvalues must be strictly positive")
        if (np.diff(ev) < 0).any():
            raise ValueError("eigenvalues must be nondecreasing")
        object.__setattr__(self, "eigenvalues", ev)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def dirichlet_interval(n_modes: int, domain_length: float = np.pi) -> "SpectralBasis":
        if n_modes < 1:
            raise ValueError("n_modes must be positive")
        if domain_length <= 0:
            raise ValueError("domain_length must be positive")
        k = np.arange(1, n_modes + 1)
        ev = (k * np.pi / domain_length) ** 2
        return SpectralBasis(DIRICHLET, n_modes, ev, float(domain_length))

    @staticmethod
    def torus_2d_divfree(k_max: int) -> "SpectralBasis":
        if k_max < 1:
            raise ValueError("k_max must be positive")
        reps = _torus_wavevectors(k_max)
        gam = (reps[:, 0] ** 2 + reps[:, 1] ** 2).astype(float)
        # one cos and one sin amplitude per wavevector pair
        ev = np.repeat(gam, 2)
        kperp = np.stack([-reps[:, 1], reps[:, 0]], axis=1).astype(float)
        unit = kperp / np.sqrt(gam)[:, None]
        return SpectralBasis(TORUS, 2 * len(reps), ev, TWO_PI,
                             k_max=k_max, wavevectors=reps, unit_vectors=unit)

    # -- helpers --------------------------------------------------------

    @property
    def n_pairs(self) -> int:
        return 0 if self.wavevectors is None else len(self.wavevectors)

    def min_grid(self) -> int:
        """Smallest admissible dealiasing grid (per axis on the torus)."""
        return 4 * (self.k_max if self.kind == TORUS else self.n_modes)

    def zero_field(self) -> "SpectralField":
        return SpectralField(self, np.zeros(self.n_modes))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Coefficient vector of a function in a fixed eigenbasis."""

    basis: SpectralBasis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.basis.n_modes,):
            raise ValueError("coefficient count must equal n_modes")
        if not np.isfinite(c).all():
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    def l2(self) -> float:
        """H-norm by Parseval."""
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class NormReport:
    """Norm bundle of one field: Parseval l2, grid sup/l4, weighted H^delta."""

    l2: float
    sup: float
    l4: float
    h_delta: dict


# -- semigroup -----------------------------------------------------------

def semigroup_apply(field: SpectralField, t: float) -> SpectralField:
    """Apply the analytic semigroup: coefficient k decays like exp(-gamma_k t)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return field
    return SpectralField(field.basis,
                         field.coeffs * np.exp(-field.basis.eigenvalues * t))


# -- grid synthesis / projection ----------------------------------------

def _check_grid(basis: SpectralBasis, n_points: int):
    if n_points < basis.min_grid():
        raise ValueError(
            f"grid of {n_points} under-resolves {basis.kind} "
            f"(need >= {basis.min_grid()} for dealiasing)")


def _interval_values(basis: SpectralBasis, coeffs: np.ndarray, n: int) -> np.ndarray:
    # DST-I synthesis on interior points x_j = j L/(n+1), j=1..n
    pad = np.zeros(n)
    pad[:basis.n_modes] = coeffs
    return np.sqrt(2.0 / basis.domain_length) * dst(pad, type=1) / 2.0


def _interval_coeffs(basis: SpectralBasis, values: np.ndarray) -> np.ndarray:
    n = len(values)
    h = basis.domain_length / (n + 1)
    full = np.sqrt(2.0 / basis.domain_length) * h * dst(values, type=1) / 2.0
    return full[:basis.n_modes]


def _torus_spectrum(basis: SpectralBasis, coeffs: np.ndarray, n: int) -> np.ndarray:
    """Complex FFT array (n, n, 2) whose ifft2 gives the velocity field."""
    a = coeffs[0::2]
    b = coeffs[1::2]
    # a cos(k.x) + b sin(k.x) = Re[(a - i b) e^{i k.x}]
    amp = (a - 1j * b)[:, None] * basis.unit_vectors * (np.sqrt(2.0) / TWO_PI / 2.0)
    spec = np.zeros((n, n, 2), dtype=complex)
    k1 = basis.wavevectors[:, 0] % n
    k2 = basis.wavevectors[:, 1] % n
    m1 = (-basis.wavevectors[:, 0]) % n
    m2 = (-basis.wavevectors[:, 1]) % n
    spec[k1, k2, :] = amp
    spec[m1, m2, :] = np.conj(amp)
    return spec * (n * n)


def _torus_values(basis: SpectralBasis, coeffs: np.ndarray, n: int) -> np.ndarray:
    spec = _torus_spectrum(basis, coeffs, n)
    return np.real(ifft2(spec, axes=(0, 1)))


def _torus_coeffs(basis: SpectralBasis, values: np.ndarray) -> np.ndarray:
    """L2-orthogonal projection onto the divergence-free basis.

    Projecting onto the (cos, sin) amplitudes along k-perp composes the
    Leray projection with the mode truncation.
    """
    n = values.shape[0]
    spec = fft2(values, axes=(0, 1)) / (n * n)
    k1 = basis.wavevectors[:, 0] % n
    k2 = basis.wavevectors[:, 1] % n
    shat = spec[k1, k2, :]  # (n_pairs, 2) complex
    s = np.einsum("pi,pi->p", shat, basis.unit_vectors.astype(complex))
    scale = TWO_PI * np.sqrt(2.0)
    a = scale * np.real(s)
    b = -scale * np.imag(s)
    out = np.empty(basis.n_modes)
    out[0::2] = a
    out[1::2] = b
    return out


def eval_on_grid(field: SpectralField, n_points: int) -> np.ndarray:
    """Pointwise values at equispaced collocation points.

    Interval: values at the n interior points, shape (n,).  Torus: velocity
    vectors on the n x n grid, shape (n, n, 2).
    """
    _check_grid(field.basis, n_points)
    if field.basis.kind == DIRICHLET:
        return _interval_values(field.basis, field.coeffs, n_points)
    return _torus_values(field.basis, field.coeffs, n_points)


def project_to_basis(basis: SpectralBasis, values: np.ndarray) -> SpectralField:
    """Quadrature projection of grid values back onto the basis."""
    if basis.kind == DIRICHLET:
        return SpectralField(basis, _interval_coeffs(basis, values))
    return SpectralField(basis, _torus_coeffs(basis, values))


def synthesis_matrix(basis: SpectralBasis, n_points: int) -> np.ndarray:
    """Dense synthesis matrix E[j, k] = e_k(x_j) for scalar interval fields."""
    if basis.kind != DIRICHLET:
        raise ValueError("synthesis_matrix is defined for the interval basis")
    _check_grid(basis, n_points)
    j = np.arange(1, n_points + 1)[:, None]
    k = np.arange(1, basis.n_modes + 1)[None, :]
    return np.sqrt(2.0 / basis.domain_length) * np.sin(np.pi * j * k / (n_points + 1))


# -- norms ----------------------------------------------------------------

def h_delta_norm(field: SpectralField, delta: float) -> float:
    """Weighted Parseval norm with weights gamma_k**delta, delta in [-2, 2]."""
    if not -2.0 <= delta <= 2.0:
        raise ValueError("delta must lie in [-2, 2]")
    w = field.basis.eigenvalues ** delta
    return float(np.sqrt(np.sum(w * field.coeffs ** 2)))


def sup_norm(field: SpectralField, n_points: int | None = None) -> float:
    """Grid sup norm (Euclidean magnitude per point on the torus)."""
    n = n_points or field.basis.min_grid()
    v = eval_on_grid(field, n)
    if field.basis.kind == TORUS:
        return float(np.max(np.sqrt(np.sum(v ** 2, axis=-1))))
    return float(np.max(np.abs(v)))


def norms(field: SpectralField, grid: int, deltas=()) -> NormReport:
    """Norm report: l2 by Parseval, sup/l4 by dealiased-grid quadrature."""
    _check_grid(field.basis, grid)
    v = eval_on_grid(field, grid)
    if field.basis.kind == TORUS:
        mag2 = np.sum(v ** 2, axis=-1)
        area = (field.basis.domain_length / grid) ** 2
        sup = float(np.sqrt(np.max(mag2)))
        l4 = float((area * np.sum(mag2 ** 2)) ** 0.25)
    else:
        h = field.basis.domain_length / (grid + 1)
        sup = float(np.max(np.abs(v)))
        l4 = float((h * np.sum(v ** 4)) ** 0.25)
    return NormReport(l2=field.l2(), sup=sup, l4=l4,
                      h_delta={float(d): h_delta_norm(field, d) for d in deltas})
