"""Diagonal complex linear recurrent unit with stability by construction.

Each eigenvalue is parameterized as ``lam_j = exp(-exp(nu_j) + i exp(phi_j))``
so that ``|lam_j| = exp(-exp(nu_j)) < 1`` for every real ``nu_j``. The input
matrix is normalized per state by ``gamma_j = sqrt(1 - |lam_j|^2)``, which
makes white unit-variance input produce unit stationary state variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PhaseDegenerate, UnstableEigenvalue
from .linalg import StateSpaceModel, diagonal_model

Array = np.ndarray


@dataclass
class LruParams:
    """Learnable parameters of one recurrent block.

    ``nu`` and ``phi`` are unconstrained reals; ``b_tilde`` and ``c`` are
    complex coupling matrices; ``d`` is the real feedthrough.
    """

    nu: Array
    phi: Array
    b_tilde: Array
    c: Array
    d: Array

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.b_tilde = np.asarray(self.b_tilde, dtype=np.complex128)
        self.c = np.asarray(self.c, dtype=np.complex128)
        self.d = np.asarray(self.d, dtype=np.float64)
        n = self.nu.size
        if self.phi.shape != (n,):
            raise ValueError("phi must match nu in length")
        if self.b_tilde.shape[0] != n or self.c.shape[-1] != n:
            raise ValueError("b_tilde rows and c columns must match the state count")
        if self.d.shape != (self.c.shape[0], self.b_tilde.shape[1]):
            raise ValueError("d must be n_y x n_u")

    @property
    def n_x(self) -> int:
        return self.nu.size

    @property
    def n_u(self) -> int:
        return self.b_tilde.shape[1]

    @property
    def n_y(self) -> int:
        return self.c.shape[0]

    def eigenvalues(self) -> Array:
        """lam_j = exp(-exp(nu_j) + i exp(phi_j)); always inside the unit disk."""
        return np.exp(-np.exp(self.nu) + 1j * np.exp(self.phi))

    def gamma(self) -> Array:
        """Per-state input normalization sqrt(1 - |lam_j|^2)."""
        return np.sqrt(1.0 - np.exp(-2.0 * np.exp(self.nu)))

    def effective_b(self) -> Array:
        return self.gamma()[:, None] * self.b_tilde

    def copy(self) -> "LruParams":
        return LruParams(self.nu.copy(), self.phi.copy(), self.b_tilde.copy(),
                         self.c.copy(), self.d.copy())


def init_lru(rng: np.random.Generator, n_x: int, n_u: int, n_y: int,
             radius_range: tuple[float, float] = (0.5, 0.99)) -> LruParams:
    """Stable-ring initialization.

    Eigenvalue moduli are drawn uniformly in ``radius_range``, phases
    uniformly in (0, 2 pi); coupling matrices get independent zero-mean
    complex entries of variance 1/n_x and the feedthrough starts at zero.
    """
    r_min, r_max = radius_range
    if not (0.0 < r_min <= r_max < 1.0):
        raise ValueError("radius_range must satisfy 0 < r_min <= r_max < 1")
    radius = rng.uniform(r_min, r_max, size=n_x)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_x)
    nu = np.log(-np.log(radius))
    phi = np.log(theta)
    scale = np.sqrt(0.5 / n_x)
    b_tilde = scale * (rng.standard_normal((n_x, n_u)) + 1j * rng.standard_normal((n_x, n_u)))
    c = scale * (rng.standard_normal((n_y, n_x)) + 1j * rng.standard_normal((n_y, n_x)))
    d = np.zeros((n_y, n_u))
    return LruParams(nu, phi, b_tilde, c, d)


def to_state_space(p: LruParams) -> StateSpaceModel:
    """Modal-form realization with the gamma-normalized input matrix."""
    return diagonal_model(p.eigenvalues(), p.effective_b(), p.c,
                          p.d.astype(np.complex128), take_real_output=True)


def _scan_axis0(coeff: Array, x: Array) -> Array:
    """In-place inclusive scan of x_k = coeff * x_{k-1} + x_k over axis 0.

    Hillis-Steele passes with the associative combine
    ``(a1, b1) o (a2, b2) = (a1*a2, a2*b1 + b2)``. Because the coefficient
    is the same at every step, the pass-s carry factor is the constant
    coeff^s for every touched position, obtained by repeated squaring
    instead of a full carry array.
    """
    t = x.shape[0]
    power = np.asarray(coeff, dtype=np.complex128).copy()
    stride = 1
    while stride < t:
        x[stride:] += power * x[:-stride]
        stride *= 2
        if stride < t:
            power = power * power
    return x


def scan_time_major(coeff: Array, drive: Array, x0: Array | None = None) -> Array:
    """Scan with time on axis 0; drive is (T, ..., n)."""
    x = np.array(drive, dtype=np.complex128)
    if x.shape[0] == 0:
        return x
    if x0 is not None:
        x[0] = x[0] + coeff * x0
    return _scan_axis0(coeff, x)


def recurrence_scan(coeff: Array, drive: Array, x0: Array | None = None) -> Array:
    """All states of ``x_k = coeff * x_{k-1} + drive_k`` along axis -2.

    Parallel-friendly inclusive prefix scan over pairs ``(coeff, drive_k)``
    in log2(T) passes; supports leading batch dimensions. Work happens in a
    time-major contiguous layout so each pass touches whole memory blocks.
    """
    drive = np.asarray(drive, dtype=np.complex128)
    if drive.shape[-2] == 0:
        return drive.copy()
    x = scan_time_major(coeff, np.moveaxis(drive, -2, 0), x0)
    return np.ascontiguousarray(np.moveaxis(x, 0, -2))


def _check_input(p: LruParams, u: Array) -> Array:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != p.n_u:
        raise ValueError(f"u must be (T, {p.n_u})")
    return u


def simulate_sequential(p: LruParams, u: Array, x0: Array | None = None) -> Array:
    """Run the recurrence one step at a time; returns the real output sequence."""
    u = _check_input(p, u)
    lam = p.eigenvalues()
    b = p.effective_b()
    t = u.shape[0]
    x = np.zeros(p.n_x, dtype=np.complex128) if x0 is None else np.asarray(x0, complex).copy()
    drive = u @ b.T
    y = np.empty((t, p.n_y))
    for k in range(t):
        x = lam * x + drive[k]
        y[k] = (p.c @ x).real + p.d @ u[k]
    return y


def simulate_scan(p: LruParams, u: Array, x0: Array | None = None) -> Array:
    """Same input/output map as :func:`simulate_sequential`, via the scan."""
    u = _check_input(p, u)
    x = recurrence_scan(p.eigenvalues(), u @ p.effective_b().T, x0)
    return (x @ p.c.T).real + u @ p.d.T


def to_conjugate_real_form(p: LruParams) -> StateSpaceModel:
    """Conjugate-closed 2*n_x realization whose plain output is already real.

    Stacks the block with its conjugate and halves the readout; on real
    inputs the output matches the real-part map of the original block. Its
    Hankel spectrum is that of the real input/output map, which in general
    differs from the complex block's spectrum.
    """
    lam = p.eigenvalues()
    b = p.effective_b()
    lam2 = np.concatenate([lam, np.conj(lam)])
    b2 = np.vstack([b, np.conj(b)])
    c2 = 0.5 * np.hstack([p.c, np.conj(p.c)])
    return diagonal_model(lam2, b2, c2, p.d.astype(np.complex128), take_real_output=False)


def from_modal(lam: Array, b: Array, c: Array, d: Array) -> LruParams:
    """Invert the eigenvalue and gamma parameterizations of a modal system.

    ``b`` is the effective input matrix; the normalization is undone via
    ``b_tilde = b / gamma``. Raises :class:`UnstableEigenvalue` when
    ``|lam_j| >= 1 - 1e-9`` and :class:`PhaseDegenerate` for exactly real
    positive eigenvalues (the phase map cannot produce arg = 0); callers
    perturb the phase by 1e-12 in that case.
    """
    lam = np.asarray(lam, dtype=np.complex128).ravel()
    b = np.asarray(b, dtype=np.complex128)
    c = np.asarray(c, dtype=np.complex128)
    d = np.asarray(d, dtype=np.float64)
    mod = np.abs(lam)
    if np.any(mod >= 1.0 - 1e-9):
        raise UnstableEigenvalue("eigenvalue modulus >= 1 - 1e-9")
    theta = np.angle(lam)
    if np.any(theta == 0.0) and lam.size:
        raise PhaseDegenerate("real positive eigenvalue has arg = 0")
    theta = np.where(theta < 0.0, theta + 2.0 * np.pi, theta)
    nu = np.log(-np.log(mod)) if lam.size else np.zeros(0)
    phi = np.log(theta) if lam.size else np.zeros(0)
    gamma = np.sqrt(1.0 - mod ** 2)
    b_tilde = b / gamma[:, None] if lam.size else b
    return LruParams(nu, phi, b_tilde, c, d)
