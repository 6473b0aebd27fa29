"""Complex dense linear algebra for discrete-time LTI systems.

Systems evolve as ``x_k = A x_{k-1} + B u_k`` with output ``y_k = C x_k + D u_k``.
When ``take_real_output`` is set the input/output map is instead
``y_k = Re[C x_k] + Re[D] u_k``, which is the convention used by the
recurrent blocks in this package.

All operations are pure functions; :class:`StateSpaceModel` instances are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ComplexEigenResidual,
    DefectiveMatrix,
    DegenerateDenominator,
    InsufficientDepth,
    NearUnobservableState,
    ResolventSingular,
    SingularSystem,
    UnstableSystem,
)

Array = np.ndarray


def _as_matrix(m, name: str = "matrix") -> Array:
    a = np.array(m, dtype=np.complex128)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size and not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time LTI system (A, B, C, D) with complex-valued matrices."""

    a: Array
    b: Array
    c: Array
    d: Array
    is_diagonal: bool = False
    take_real_output: bool = False

    def __post_init__(self):
        a = _as_matrix(self.a, "a")
        b = _as_matrix(self.b, "b")
        c = _as_matrix(self.c, "c")
        d = _as_matrix(self.d, "d")
        n = a.shape[0]
        if a.shape[1] != n:
            raise ValueError("a must be square")
        if b.shape[0] != n:
            raise ValueError("b row count must match state dimension")
        if c.shape[1] != n:
            raise ValueError("c column count must match state dimension")
        if d.shape != (c.shape[0], b.shape[1]):
            raise ValueError("d must be n_y x n_u")
        if self.is_diagonal and n > 1:
            off = a[~np.eye(n, dtype=bool)]
            if off.size and np.any(off != 0):
                raise ValueError("is_diagonal set but a has nonzero off-diagonal entries")
        for name, m in (("a", a), ("b", b), ("c", c), ("d", d)):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b.shape[1]

    @property
    def n_y(self) -> int:
        return self.c.shape[0]

    def eigenvalues(self) -> Array:
        if self.n_x == 0:
            return np.zeros(0, dtype=np.complex128)
        if self.is_diagonal:
            return np.diag(self.a)
        return np.linalg.eigvals(self.a)

    def spectral_radius(self) -> float:
        if self.n_x == 0:
            return 0.0
        return float(np.max(np.abs(self.eigenvalues())))


def diagonal_model(lam, b, c, d, take_real_output: bool = False) -> StateSpaceModel:
    """Build a modal-form model from its eigenvalue vector."""
    lam = np.asarray(lam, dtype=np.complex128)
    return StateSpaceModel(np.diag(lam), b, c, d, is_diagonal=True,
                           take_real_output=take_real_output)


def _require_stable(ss: StateSpaceModel, what: str) -> None:
    rho = ss.spectral_radius()
    if rho >= 1.0:
        raise UnstableSystem(f"{what} requires spectral radius < 1, got {rho:.6g}")


@dataclass(frozen=True)
class GrammianPair:
    """Controllability Grammian P and observability Grammian Q."""

    p: Array
    q: Array


@dataclass(frozen=True)
class HankelSpectrum:
    """Hankel singular values sorted in non-increasing order."""

    sigma: Array

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("sigma must be 1-D")
        if s.size and (np.any(s < 0) or np.any(np.diff(s) > 0)):
            raise ValueError("sigma must be nonnegative and non-increasing")
        s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    def __len__(self) -> int:
        return self.sigma.size


def solve_dlyap_diag(lam, y) -> Array:
    """Solve ``A X A* - X + Y = 0`` for ``A = diag(lam)``.

    The solution is elementwise: ``X_ij = Y_ij / (1 - lam_i * conj(lam_j))``,
    which costs n^2 scalar divisions. Raises :class:`DegenerateDenominator`
    when a denominator is numerically zero (marginally stable mode pairs).
    """
    lam = np.asarray(lam, dtype=np.complex128).ravel()
    y = _as_matrix(y, "y")
    n = lam.size
    if y.shape != (n, n):
        raise ValueError("y must be square with size matching lam")
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    denom = 1.0 - lam[:, None] * np.conj(lam)[None, :]
    if np.min(np.abs(denom)) < 1e-14:
        raise DegenerateDenominator("1 - lam_i * conj(lam_j) is numerically zero")
    return _hermitize_if_hermitian(y / denom, y)


def solve_dlyap_dense(a, y) -> Array:
    """Solve ``A X A* - X + Y = 0`` through the n^2 x n^2 Kronecker system.

    Uses ``vec(A X A*) = (conj(A) kron A) vec(X)`` with column-major vec.
    O(n^6); intended for modest n and as an oracle for the diagonal path.
    """
    a = _as_matrix(a, "a")
    y = _as_matrix(y, "y")
    n = a.shape[0]
    if a.shape[1] != n or y.shape != (n, n):
        raise ValueError("a and y must be square and of equal size")
    if n == 0:
        return np.zeros((0, 0), dtype=np.complex128)
    lhs = np.eye(n * n, dtype=np.complex128) - np.kron(np.conj(a), a)
    try:
        xv = np.linalg.solve(lhs, y.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("Kronecker Lyapunov system is singular") from exc
    x = xv.reshape((n, n), order="F")
    residual = np.linalg.norm(a @ x @ a.conj().T - x + y)
    scale = np.linalg.norm(y) + np.linalg.norm(a) ** 2 * np.linalg.norm(x) + 1e-300
    if not np.isfinite(residual) or residual > 1e-8 * scale:
        raise SingularSystem("Kronecker Lyapunov system is numerically singular")
    return _hermitize_if_hermitian(x, y)


def _hermitize_if_hermitian(x: Array, y: Array) -> Array:
    # For Hermitian right-hand sides the exact solution is Hermitian; the
    # symmetrization suppresses roundoff skew that would otherwise leak into
    # eigenvalue computations downstream.
    if y.size == 0:
        return x
    if np.allclose(y, y.conj().T, rtol=1e-12, atol=1e-14 * np.linalg.norm(y)):
        return (x + x.conj().T) / 2.0
    return x


def grammians(ss: StateSpaceModel) -> GrammianPair:
    """Controllability and observability Grammians of a stable system.

    P solves ``A P A* - P + B B* = 0`` and Q solves ``A* Q A - Q + C* C = 0``.
    Diagonal systems use the n^2-division path, dense ones the Kronecker solve.
    """
    _require_stable(ss, "grammians")
    bbh = ss.b @ ss.b.conj().T
    chc = ss.c.conj().T @ ss.c
    if ss.is_diagonal:
        lam = np.diag(ss.a) if ss.n_x else np.zeros(0, dtype=np.complex128)
        p = solve_dlyap_diag(lam, bbh)
        q = solve_dlyap_diag(np.conj(lam), chc)
    else:
        p = solve_dlyap_dense(ss.a, bbh)
        q = solve_dlyap_dense(ss.a.conj().T, chc)
    return GrammianPair(p, q)


def hankel_singular_values(ss: StateSpaceModel) -> HankelSpectrum:
    """Hankel singular values ``sigma_j = sqrt(eig_j(P Q))``, non-increasing.

    Tiny negative eigenvalues of P Q (roundoff from a PSD-similar product)
    are clamped to zero; genuinely complex or negative spectra raise
    :class:`ComplexEigenResidual`.
    """
    if ss.n_x == 0:
        return HankelSpectrum(np.zeros(0))
    g = grammians(ss)
    pq = g.p @ g.q
    mu = np.linalg.eigvals(pq)
    scale = max(np.linalg.norm(pq), 1e-300)
    if np.any(np.abs(mu.imag) > 1e-8 * scale):
        raise ComplexEigenResidual("P Q has eigenvalues with significant imaginary part")
    mu = mu.real
    mu_max = max(float(mu.max()), 0.0)
    if np.any(mu < -1e-12 * max(mu_max, 1e-300)) and np.any(mu < -1e-8 * scale):
        raise ComplexEigenResidual("P Q has significantly negative eigenvalues")
    sigma = np.sqrt(np.clip(mu, 0.0, None))
    sigma.sort()
    return HankelSpectrum(sigma[::-1])


def markov_parameters(ss: StateSpaceModel, count: int) -> Array:
    """Impulse-response coefficients g_k = C A^(k-1) B for k = 1..count."""
    out = np.empty((count, ss.n_y, ss.n_u), dtype=np.complex128)
    m = ss.b.copy()
    for k in range(count):
        out[k] = ss.c @ m
        m = ss.a @ m
    return out


def block_hankel_svd_oracle(ss: StateSpaceModel, depth: int) -> HankelSpectrum:
    """Hankel singular values from an explicit truncated block Hankel matrix.

    Builds the depth x depth block matrix with blocks ``H_ij = g_{i+j-1}``
    of impulse-response coefficients and returns the first n_x singular
    values. Serves as an independent cross-check for
    :func:`hankel_singular_values`; requires ``rho^depth < 1e-12`` so the
    discarded tail is negligible.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rho = ss.spectral_radius()
    if rho > 0 and rho ** depth >= 1e-12:
        raise InsufficientDepth(
            f"spectral radius {rho:.4g} has not decayed below 1e-12 at depth {depth}")
    if ss.n_x == 0:
        return HankelSpectrum(np.zeros(0))
    g = markov_parameters(ss, 2 * depth - 1)
    ny, nu = ss.n_y, ss.n_u
    h = np.empty((depth * ny, depth * nu), dtype=np.complex128)
    for i in range(depth):
        h[i * ny:(i + 1) * ny] = np.hstack(list(g[i:i + depth]))
    s = np.linalg.svd(h, compute_uv=False)
    sigma = np.zeros(ss.n_x)
    take = min(ss.n_x, s.size)
    sigma[:take] = s[:take]
    return HankelSpectrum(sigma)


def _hermitian_factor(m: Array) -> Array:
    """Factor F with F F^H = M for Hermitian PSD M (tiny negatives clipped)."""
    w, v = np.linalg.eigh((m + m.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)[None, :]


@dataclass(frozen=True)
class BalanceResult:
    """Balanced realization plus the state transformation that produced it."""

    system: StateSpaceModel
    transform: Array
    inverse_transform: Array
    hankel: HankelSpectrum


def balance(ss: StateSpaceModel) -> BalanceResult:
    """Square-root balancing: both Grammians become diag(sigma).

    States are ordered by non-increasing Hankel singular value. Raises
    :class:`NearUnobservableState` when sigma_j < 1e-12 * sigma_1, where the
    transformation would be hopelessly ill-conditioned; callers should trim
    such states first.
    """
    _require_stable(ss, "balance")
    if ss.n_x == 0:
        return BalanceResult(ss, np.zeros((0, 0), complex), np.zeros((0, 0), complex),
                             HankelSpectrum(np.zeros(0)))
    g = grammians(ss)
    lp = _hermitian_factor(g.p)
    lq = _hermitian_factor(g.q)
    u, s, vh = np.linalg.svd(lq.conj().T @ lp)
    if s[0] <= 0 or np.min(s) < 1e-12 * s[0]:
        raise NearUnobservableState(
            "Hankel singular values span more than 12 orders of magnitude")
    scale = 1.0 / np.sqrt(s)
    t = (lp @ vh.conj().T) * scale[None, :]
    t_inv = (u.conj().T @ lq.conj().T) * scale[:, None]
    balanced = StateSpaceModel(t_inv @ ss.a @ t, t_inv @ ss.b, ss.c @ t, ss.d,
                               is_diagonal=False, take_real_output=ss.take_real_output)
    return BalanceResult(balanced, t, t_inv, HankelSpectrum(s))


@dataclass(frozen=True)
class EigenDecomposition:
    values: Array
    right: Array
    left: Array | None = None


def eig_dense(m, compute_left: bool = False) -> EigenDecomposition:
    """Eigendecomposition M V = V diag(values) with a conditioning guard.

    When requested, left eigenvectors are the rows of V^-1 conjugated, so
    that ``left[:, j]^H  right[:, j] = 1`` exactly. Raises
    :class:`DefectiveMatrix` if cond(V) > 1e10.
    """
    m = _as_matrix(m, "m")
    n = m.shape[0]
    if n == 0:
        empty = np.zeros((0, 0), dtype=np.complex128)
        return EigenDecomposition(np.zeros(0, complex), empty, empty if compute_left else None)
    w, v = np.linalg.eig(m)
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > 1e10:
        raise DefectiveMatrix(f"eigenvector matrix condition number {cond:.3g} > 1e10")
    left = None
    if compute_left:
        left = np.linalg.inv(v).conj().T
    return EigenDecomposition(w, v, left)


def _resolvent_term(ss: StateSpaceModel, z: complex) -> Array:
    """C (z I - A)^-1 B at a single point z."""
    if ss.n_x == 0:
        return np.zeros((ss.n_y, ss.n_u), dtype=np.complex128)
    if ss.is_diagonal:
        lam = np.diag(ss.a)
        den = z - lam
        if np.min(np.abs(den)) < 1e-12 * max(abs(z), 1.0):
            raise ResolventSingular("z coincides with an eigenvalue of A")
        return (ss.c / den[None, :]) @ ss.b
    m = z * np.eye(ss.n_x, dtype=np.complex128) - ss.a
    try:
        x = np.linalg.solve(m, ss.b)
    except np.linalg.LinAlgError as exc:
        raise ResolventSingular("z coincides with an eigenvalue of A") from exc
    return ss.c @ x


def frequency_response(ss: StateSpaceModel, omega: float) -> Array:
    """Transfer matrix ``G(e^{i omega})`` of the system's input/output map.

    For ``take_real_output`` models this is the response of the real map
    ``y = Re[C x] + Re[D] u``, which is conjugate-symmetric in omega, so the
    interval [0, pi] covers the whole frequency axis.
    """
    z = np.exp(1j * float(omega))
    h = _resolvent_term(ss, z)
    if ss.take_real_output:
        h2 = _resolvent_term(ss, np.conj(z))
        return 0.5 * (h + np.conj(h2)) + ss.d.real
    return h + ss.d


def response_grid(ss: StateSpaceModel, omegas: Array) -> Array:
    """Vectorized :func:`frequency_response` over a frequency grid."""
    omegas = np.asarray(omegas, dtype=np.float64)
    z = np.exp(1j * omegas)

    def resolvent_grid(points: Array) -> Array:
        if ss.n_x == 0:
            return np.zeros((points.size, ss.n_y, ss.n_u), dtype=np.complex128)
        if ss.is_diagonal:
            lam = np.diag(ss.a)
            den = points[:, None] - lam[None, :]
            if np.min(np.abs(den)) < 1e-12:
                raise ResolventSingular("grid point coincides with an eigenvalue of A")
            return np.einsum("pn,gn,nm->gpm", ss.c, 1.0 / den, ss.b)
        m = points[:, None, None] * np.eye(ss.n_x) - ss.a[None, :, :]
        x = np.linalg.solve(m, np.broadcast_to(ss.b, (points.size, ss.n_x, ss.n_u)))
        return np.matmul(ss.c, x)

    h = resolvent_grid(z)
    if ss.take_real_output:
        h2 = resolvent_grid(np.conj(z))
        return 0.5 * (h + np.conj(h2)) + ss.d.real[None, :, :]
    return h + ss.d[None, :, :]


def _peak_gain(ss: StateSpaceModel, omega: float) -> float:
    return float(np.linalg.svd(frequency_response(ss, omega), compute_uv=False)[0])


def _golden_max(f: Callable[[float], float], lo: float, hi: float, iters: int = 60) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    best = max(f1, f2)
    for _ in range(iters):
        if b - a < 1e-12:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        best = max(best, f1, f2)
    return best


def hinf_norm_estimate(ss: StateSpaceModel, grid_size: int = 4096) -> float:
    """Peak gain over a uniform frequency grid with one local refinement.

    Evaluates the largest singular value of G(e^{i omega}) on ``grid_size``
    points in [0, pi], then runs a golden-section pass around the grid
    argmax. The result is a lower bound of the true H-infinity norm; the
    gap shrinks with the grid, which is adequate for bound verification at
    the system sizes this package targets.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    _require_stable(ss, "hinf_norm_estimate")
    omegas = np.linspace(0.0, math.pi, grid_size)
    gains = np.linalg.svd(response_grid(ss, omegas), compute_uv=False)[..., 0]
    k = int(np.argmax(gains))
    peak = float(gains[k])
    lo = omegas[max(k - 1, 0)]
    hi = omegas[min(k + 1, grid_size - 1)]
    if hi > lo:
        peak = max(peak, _golden_max(lambda w: _peak_gain(ss, w), lo, hi))
    return peak


def dc_gain(ss: StateSpaceModel) -> Array:
    """Steady-state gain G(1)."""
    return frequency_response(ss, 0.0)


def simulate_model(ss: StateSpaceModel, u: Array, x0: Array | None = None) -> Array:
    """Step-by-step simulation; returns real output when take_real_output."""
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[1] != ss.n_u:
        raise ValueError("u must be (T, n_u)")
    t = u.shape[0]
    x = np.zeros(ss.n_x, dtype=np.complex128) if x0 is None else np.asarray(x0, complex).copy()
    y = np.empty((t, ss.n_y), dtype=np.complex128)
    d = ss.d.real if ss.take_real_output else ss.d
    for k in range(t):
        x = ss.a @ x + ss.b @ u[k]
        cx = ss.c @ x
        if ss.take_real_output:
            cx = cx.real
        y[k] = cx + d @ u[k]
    return y.real if ss.take_real_output else y


def state_space_to_dict(ss: StateSpaceModel) -> dict:
    """JSON-ready dict with complex entries encoded as [re, im] pairs."""

    def pairs(m: Array):
        return [[[float(v.real), float(v.imag)] for v in row] for row in m]

    return {
        "a": pairs(ss.a),
        "b": pairs(ss.b),
        "c": pairs(ss.c),
        "d": pairs(ss.d),
        "is_diagonal": ss.is_diagonal,
        "take_real_output": ss.take_real_output,
    }


def state_space_from_dict(obj: dict) -> StateSpaceModel:
    def matrix(rows, shape) -> Array:
        arr = np.asarray(rows, dtype=np.float64)
        if arr.size == 0:
            return np.zeros(shape, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ValueError("matrix entries must be [re, im] pairs")
        return arr[..., 0] + 1j * arr[..., 1]

    d = matrix(obj["d"], (0, 0))
    n_y, n_u = d.shape
    a = matrix(obj["a"], (0, 0))
    n_x = a.shape[0]
    return StateSpaceModel(
        a, matrix(obj["b"], (n_x, n_u)), matrix(obj["c"], (n_y, n_x)), d,
        is_diagonal=bool(obj["is_diagonal"]),
        take_real_output=bool(obj["take_real_output"]),
    )
