"""Drift and diffusion operators for the two worked models.

Reaction drift is a Nemytskii polynomial applied pointwise on the
dealiased collocation grid and projected back; the Navier-Stokes drift is
the Leray-projected advection term ``-P (u . grad) u`` computed
pseudospectrally.  Noise enters through a diagonal covariance ``Q`` whose
eigenfunctions are reused from the state basis, optionally modulated by a
bounded pointwise factor ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import ifft2

from .bases import (
    DIRICHLET,
    TORUS,
    SpectralBasis,
    SpectralField,
    _torus_spectrum,
    eval_on_grid,
    project_to_basis,
    sup_norm,
)

DRIFT_KINDS = ("none", "reaction_polynomial", "navier_stokes")
G_KINDS = ("constant", "bounded_rational")


@dataclass(frozen=True)
class DriftSpec:
    """Drift operator B.  ``poly_coeffs[i]`` multiplies sigma**i."""

    kind: str
    poly_coeffs: tuple = ()

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        if self.kind == "reaction_polynomial":
            c = tuple(float(x) for x in self.poly_coeffs)
            if not c:
                raise ValueError("reaction_polynomial needs poly_coeffs")
            deg = len(c) - 1
            if deg % 2 == 0 or deg > 5:
                raise ValueError("leading degree must be odd and <= 5")
            if c[-1] >= 0:
                raise ValueError("leading coefficient must be negative "
                                 "(dissipativity)")
            object.__setattr__(self, "poly_coeffs", c)

    def poly_derivative(self) -> np.ndarray:
        c = np.asarray(self.poly_coeffs)
        return c[1:] * np.arange(1, len(c))

    def lipschitz_on_ball(self, radius: float) -> float:
        """max |b'| over [-radius, radius], for Picard window sizing."""
        if self.kind != "reaction_polynomial":
            return 0.0
        s = np.linspace(-radius, radius, 4097)
        d = np.polynomial.polynomial.polyval(s, self.poly_derivative())
        return float(np.max(np.abs(d)))


@dataclass(frozen=True)
class NoiseSpec:
    """Diagonal covariance Q with eigenvalues lambda_j on the state modes.

    ``g_kind='constant'`` gives additive noise g = c; ``'bounded_rational'``
    gives g(sigma) = c / (1 + sigma^2) (sigma = velocity magnitude on the
    torus).  Bound and Lipschitz constant of g are analytic.
    """

    q_eigenvalues: tuple
    g_kind: str = "constant"
    g_params: tuple = (1.0,)
    decay: float | None = None

    def __post_init__(self):
        lam = tuple(float(x) for x in self.q_eigenvalues)
        if not lam or any(x < 0 for x in lam):
            raise ValueError("q_eigenvalues must be nonnegative and nonempty")
        if any(b > a + 1e-12 for a, b in zip(lam, lam[1:])):
            raise ValueError("q_eigenvalues must be nonincreasing")
        if self.decay is not None:
            bound = lam[0] * np.arange(1, len(lam) + 1) ** (-self.decay)
            if (np.asarray(lam) > bound * (1 + 1e-9)).any():
                raise ValueError("q_eigenvalues exceed the declared decay")
        if self.g_kind not in G_KINDS:
            raise ValueError(f"unknown g kind {self.g_kind!r}")
        object.__setattr__(self, "q_eigenvalues", lam)
        object.__setattr__(self, "g_params", tuple(float(x) for x in self.g_params))

    @staticmethod
    def power_decay(lambda1: float, decay: float, n: int,
                    g_kind: str = "constant", g_params=(1.0,)) -> "NoiseSpec":
        lam = lambda1 * np.arange(1, n + 1) ** (-decay)
        return NoiseSpec(tuple(lam), g_kind, g_params, decay=decay)

    @property
    def n_noise_modes(self) -> int:
        return len(self.q_eigenvalues)

    @property
    def is_additive(self) -> bool:
        return self.g_kind == "constant"

    @property
    def g_sup(self) -> float:
        return abs(self.g_params[0])

    @property
    def g_lip(self) -> float:
        if self.g_kind == "constant":
            return 0.0
        # max |d/ds c/(1+s^2)| = |c| * 9 / (8 sqrt(3)), attained at s = 1/sqrt(3)
        return abs(self.g_params[0]) * 9.0 / (8.0 * np.sqrt(3.0))

    def g_values(self, values: np.ndarray, torus: bool) -> np.ndarray:
        c = self.g_params[0]
        if self.g_kind == "constant":
            shape = values.shape[:-1] if torus else values.shape
            return np.full(shape, c)
        mag2 = np.sum(values ** 2, axis=-1) if torus else values ** 2
        return c / (1.0 + mag2)

    def trace_q2(self) -> float:
        return float(np.sum(np.asarray(self.q_eigenvalues) ** 2))


@dataclass(frozen=True)
class ModelSpec:
    """Complete problem description for the solvers and samplers."""

    basis: SpectralBasis
    drift: DriftSpec
    noise: NoiseSpec
    t_end: float
    n_steps: int
    state_norm: str = "auto"  # "sup" | "l2" | "auto" (sup interval, l2 torus)
    grid_points: int = 0      # 0 -> dealiasing default
    blowup_factor: float = 1e3

    def __post_init__(self):
        if self.t_end <= 0 or self.n_steps < 1:
            raise ValueError("horizon must have t_end > 0 and n_steps >= 1")
        if self.drift.kind == "navier_stokes" and self.basis.kind != TORUS:
            raise ValueError("navier_stokes drift requires the torus basis")
        if self.noise.n_noise_modes > self.basis.n_modes:
            raise ValueError("n_noise_modes cannot exceed n_modes "
                             "(noise eigenfunctions reuse the state basis)")
        if self.state_norm not in ("auto", "sup", "l2"):
            raise ValueError("state_norm must be auto, sup or l2")

    @property
    def norm_kind(self) -> str:
        if self.state_norm != "auto":
            return self.state_norm
        return "l2" if self.basis.kind == TORUS else "sup"

    @property
    def dealias_grid(self) -> int:
        return self.grid_points or self.basis.min_grid()

    def state_norm_of(self, coeffs: np.ndarray) -> float:
        """E-norm of a coefficient vector under this model's state space."""
        if self.norm_kind == "l2":
            return float(np.linalg.norm(coeffs))
        return sup_norm(SpectralField(self.basis, coeffs), self.dealias_grid)

    @property
    def is_diagonal_linear(self) -> bool:
        """Drift-free with constant g: every mode an independent OU channel."""
        return self.drift.kind == "none" and self.noise.is_additive

    def noise_gains(self) -> np.ndarray:
        """Per-state-mode gain g*lambda_j of the diagonal G, zero-padded."""
        gains = np.zeros(self.basis.n_modes)
        lam = np.asarray(self.noise.q_eigenvalues)
        gains[:len(lam)] = self.noise.g_params[0] * lam
        return gains


# -- drift ---------------------------------------------------------------

def _ns_gradient_terms(basis: SpectralBasis, coeffs: np.ndarray, n: int):
    """Velocity u and its gradient du[j, i] = d_i u_j on the n x n grid."""
    spec = _torus_spectrum(basis, coeffs, n)
    u = np.real(ifft2(spec, axes=(0, 1)))
    freqs = np.fft.fftfreq(n, d=1.0 / n)  # integer wavenumbers
    ik1 = 1j * freqs[:, None, None]
    ik2 = 1j * freqs[None, :, None]
    d1 = np.real(ifft2(ik1 * spec, axes=(0, 1)))
    d2 = np.real(ifft2(ik2 * spec, axes=(0, 1)))
    return u, d1, d2


def drift_apply(spec: DriftSpec, x: SpectralField, n_grid: int = 0) -> SpectralField:
    """Nonlinear drift B(x) as a field on x's basis.

    Reaction: pointwise polynomial on the dealiased grid, projected back.
    Navier-Stokes: -P (u . grad) u by dealiased pseudospectral convolution.
    """
    basis = x.basis
    n = n_grid or basis.min_grid()
    if spec.kind == "none":
        return basis.zero_field()
    if spec.kind == "reaction_polynomial":
        if basis.kind != DIRICHLET:
            raise ValueError("reaction_polynomial expects the interval basis")
        v = eval_on_grid(x, n)
        w = np.polynomial.polynomial.polyval(v, np.asarray(spec.poly_coeffs))
        return project_to_basis(basis, w)
    if basis.kind != TORUS:
        raise ValueError("navier_stokes drift requires the torus basis")
    u, d1, d2 = _ns_gradient_terms(basis, x.coeffs, n)
    adv = u[..., 0:1] * d1 + u[..., 1:2] * d2  # (u . grad) u
    return project_to_basis(basis, -adv)


def drift_rows(spec: DriftSpec, basis: SpectralBasis, rows: np.ndarray,
               n_grid: int = 0) -> np.ndarray:
    """Batched drift for a (nodes, n_modes) coefficient matrix."""
    if spec.kind == "none":
        return np.zeros_like(rows)
    n = n_grid or basis.min_grid()
    if spec.kind == "reaction_polynomial":
        from scipy.fft import dst
        L = basis.domain_length
        pad = np.zeros((rows.shape[0], n))
        pad[:, :basis.n_modes] = rows
        vals = np.sqrt(2.0 / L) * dst(pad, type=1, axis=1) / 2.0
        w = np.polynomial.polynomial.polyval(vals, np.asarray(spec.poly_coeffs))
        h = L / (n + 1)
        full = np.sqrt(2.0 / L) * h * dst(w, type=1, axis=1) / 2.0
        return full[:, :basis.n_modes]
    out = np.empty_like(rows)
    for i in range(rows.shape[0]):
        out[i] = drift_apply(spec, SpectralField(basis, rows[i]), n).coeffs
    return out


# -- Navier-Stokes structure ----------------------------------------------

def ns_trilinear(u: SpectralField, v: SpectralField, w: SpectralField,
                 n_grid: int = 0) -> float:
    """Trilinear advection form sum_ij int u_i d_i(v_j) w_j by quadrature."""
    basis = u.basis
    if basis.kind != TORUS or v.basis is not basis or w.basis is not basis:
        raise ValueError("ns_trilinear expects three fields on one torus basis")
    n = n_grid or basis.min_grid()
    uv = eval_on_grid(u, n)
    _, d1, d2 = _ns_gradient_terms(basis, v.coeffs, n)
    wv = eval_on_grid(w, n)
    integrand = np.sum((uv[..., 0:1] * d1 + uv[..., 1:2] * d2) * wv, axis=-1)
    area = (basis.domain_length / n) ** 2
    return float(area * np.sum(integrand))


def leray_project(basis: SpectralBasis, raw: np.ndarray) -> SpectralField:
    """Project per-wavevector 2-vector amplitudes onto divergence-free modes.

    ``raw[p, c, :]`` is the 2-vector multiplying the scalar (cos, sin)
    function of wavevector p (c = 0 cos, c = 1 sin).  Each vector is mapped
    by I - k k^T / |k|^2, which reduces to the component along k-perp.
    """
    if basis.kind != TORUS:
        raise ValueError("leray_project expects the torus basis")
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (basis.n_pairs, 2, 2):
        raise ValueError("raw must have shape (n_pairs, 2, 2)")
    comp = np.einsum("pcj,pj->pc", raw, basis.unit_vectors)
    out = np.empty(basis.n_modes)
    out[0::2] = comp[:, 0]
    out[1::2] = comp[:, 1]
    return SpectralField(basis, out)


def vector_amplitudes(field: SpectralField) -> np.ndarray:
    """Inverse view of leray_project's input: (n_pairs, 2, 2) vectors c*phi_k."""
    basis = field.basis
    a = field.coeffs[0::2]
    b = field.coeffs[1::2]
    return np.stack([a[:, None] * basis.unit_vectors,
                     b[:, None] * basis.unit_vectors], axis=1)


# -- diffusion -------------------------------------------------------------

def diffusion_apply(spec: NoiseSpec, x: SpectralField, h: np.ndarray) -> SpectralField:
    """G(x) h: synthesize Qh, multiply pointwise by g(x), project back.

    The noise eigenfunctions are the state basis functions, so Qh is the
    field with coefficients lambda_j h_j; projection onto the basis also
    applies the Leray projection on the torus.
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (spec.n_noise_modes,):
        raise ValueError("h must have n_noise_modes entries")
    basis = x.basis
    if spec.n_noise_modes > basis.n_modes:
        raise ValueError("noise modes exceed state modes")
    qh = np.zeros(basis.n_modes)
    qh[:spec.n_noise_modes] = np.asarray(spec.q_eigenvalues) * h
    if spec.is_additive:
        return SpectralField(basis, spec.g_params[0] * qh)
    n = basis.min_grid()
    xv = eval_on_grid(x, n)
    g = spec.g_values(xv, torus=basis.kind == TORUS)
    qv = eval_on_grid(SpectralField(basis, qh), n)
    prod = g[..., None] * qv if basis.kind == TORUS else g * qv
    return project_to_basis(basis, prod)


def diffusion_rows(spec: NoiseSpec, basis: SpectralBasis, rows: np.ndarray,
                   u_rows: np.ndarray, n_grid: int = 0) -> np.ndarray:
    """Batched G(x_m) u_m for stacked states and controls (nodes x modes)."""
    lam = np.asarray(spec.q_eigenvalues)
    qh = np.zeros((rows.shape[0], basis.n_modes))
    qh[:, :spec.n_noise_modes] = lam * u_rows
    if spec.is_additive:
        return spec.g_params[0] * qh
    out = np.empty_like(qh)
    for i in range(rows.shape[0]):
        out[i] = diffusion_apply(spec, SpectralField(basis, rows[i]),
                                 u_rows[i]).coeffs
    return out
