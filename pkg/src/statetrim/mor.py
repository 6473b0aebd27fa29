"""Order reduction of LTI blocks by truncation and singular perturbation.

Four methods are provided: modal truncation (MT), modal singular
perturbation (MSP), balanced truncation (BT) and balanced singular
perturbation (BSP). Modal methods sort states by non-increasing eigenvalue
modulus and act directly on the diagonal realization; balanced methods
balance first, reduce, then re-diagonalize the reduced state matrix so the
result fits the diagonal block format again.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import InvalidOrder, MatrixSingular, NearUnobservableState
from .linalg import HankelSpectrum, StateSpaceModel, diagonal_model
from .lru import LruParams, from_modal, to_state_space

Array = np.ndarray


class ReductionMethod(enum.Enum):
    MT = "mt"
    MSP = "msp"
    BT = "bt"
    BSP = "bsp"

    @property
    def balanced(self) -> bool:
        return self in (ReductionMethod.BT, ReductionMethod.BSP)

    @property
    def preserves_dc(self) -> bool:
        return self in (ReductionMethod.MSP, ReductionMethod.BSP)


@dataclass
class ReductionReport:
    """Per-block record of what a reduction did and how well it went."""

    method: ReductionMethod
    original_order: int
    retained_order: int
    bound: float | None
    hinf_error_estimate: float
    dc_gain_error: float
    removed_eigenvalues: list[complex] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "original_order": self.original_order,
            "retained_order": self.retained_order,
            "bound": self.bound,
            "hinf_error_estimate": self.hinf_error_estimate,
            "dc_gain_error": self.dc_gain_error,
            "removed_eigenvalues": [[z.real, z.imag] for z in self.removed_eigenvalues],
        }


def _check_order(ss: StateSpaceModel, r: int) -> None:
    if not 0 <= r <= ss.n_x:
        raise InvalidOrder(f"retained order {r} outside [0, {ss.n_x}]")


def truncate(ss: StateSpaceModel, r: int) -> StateSpaceModel:
    """Keep the first r states: A11, B1, C1 with D unchanged."""
    _check_order(ss, r)
    if r == ss.n_x:
        return ss
    return StateSpaceModel(ss.a[:r, :r], ss.b[:r], ss.c[:, :r], ss.d,
                           is_diagonal=ss.is_diagonal,
                           take_real_output=ss.take_real_output)


def singular_perturbation(ss: StateSpaceModel, r: int) -> StateSpaceModel:
    """Eliminate the tail states by forcing them to equilibrium.

    Preserves the steady-state gain exactly. For ``take_real_output``
    systems only the real part of the static correction C2 (I - A22)^-1 B2
    reaches the output, so it is folded into D as a real quantity.
    """
    _check_order(ss, r)
    if r == ss.n_x:
        return ss
    a11 = ss.a[:r, :r]
    a12 = ss.a[:r, r:]
    a21 = ss.a[r:, :r]
    a22 = ss.a[r:, r:]
    rhs = np.hstack([a21, ss.b[r:]])
    try:
        sol = np.linalg.solve(np.eye(ss.n_x - r) - a22, rhs)
    except np.linalg.LinAlgError as exc:
        raise MatrixSingular("I - A22 is singular") from exc
    if not np.isfinite(sol).all():
        raise MatrixSingular("I - A22 is numerically singular")
    ka, kb = sol[:, :r], sol[:, r:]
    a_r = a11 + a12 @ ka
    b_r = ss.b[:r] + a12 @ kb
    c_r = ss.c[:, :r] + ss.c[:, r:] @ ka
    corr = ss.c[:, r:] @ kb
    d_r = (corr.real if ss.take_real_output else corr) + ss.d
    return StateSpaceModel(a_r, b_r, c_r, d_r,
                           is_diagonal=ss.is_diagonal,
                           take_real_output=ss.take_real_output)


def _modal_keys(ss: StateSpaceModel) -> tuple[Array, Array]:
    lam = np.diag(ss.a)
    contribution = np.linalg.norm(ss.c, axis=0) * np.linalg.norm(ss.b, axis=1)
    return np.abs(lam), contribution


def sort_modal(ss: StateSpaceModel) -> StateSpaceModel:
    """Permute a diagonal realization so |lam_1| >= |lam_2| >= ...

    Ties (conjugate-like pairs share a modulus) are broken by non-increasing
    coupling strength ||C col|| * ||B row|| so the more influential mode of a
    pair is kept first. Pure permutation; the transfer function is unchanged.
    """
    if not ss.is_diagonal:
        raise ValueError("sort_modal requires a diagonal realization")
    if ss.n_x == 0:
        return ss
    mod, contribution = _modal_keys(ss)
    perm = np.lexsort((-contribution, -mod))
    return StateSpaceModel(ss.a[np.ix_(perm, perm)], ss.b[perm], ss.c[:, perm], ss.d,
                           is_diagonal=True, take_real_output=ss.take_real_output)


def error_bound(spectrum: HankelSpectrum, r: int) -> float:
    """Twice the tail sum of Hankel singular values, valid for BT and BSP."""
    if r > len(spectrum) or r < 0:
        raise InvalidOrder(f"retained order {r} outside [0, {len(spectrum)}]")
    return float(2.0 * np.sum(spectrum.sigma[r:]))


def difference_system(ss1: StateSpaceModel, ss2: StateSpaceModel) -> StateSpaceModel:
    """Realization of G1 - G2 (block-diagonal states, stacked inputs)."""
    if ss1.n_u != ss2.n_u or ss1.n_y != ss2.n_y:
        raise ValueError("systems must share input and output dimensions")
    if ss1.take_real_output != ss2.take_real_output:
        raise ValueError("systems must share the output convention")
    n1, n2 = ss1.n_x, ss2.n_x
    a = np.zeros((n1 + n2, n1 + n2), dtype=np.complex128)
    a[:n1, :n1] = ss1.a
    a[n1:, n1:] = ss2.a
    b = np.vstack([ss1.b, ss2.b])
    c = np.hstack([ss1.c, -ss2.c])
    d = ss1.d - ss2.d if not ss1.take_real_output else ss1.d.real - ss2.d.real
    diagonal = ss1.is_diagonal and ss2.is_diagonal
    return StateSpaceModel(a, b, c, d, is_diagonal=diagonal,
                           take_real_output=ss1.take_real_output)


def _trim_negligible(ss: StateSpaceModel, r: int, sigma: HankelSpectrum,
                     max_ratio: float = 1e-12) -> StateSpaceModel:
    """Drop numerically unreachable/unobservable modal states before balancing.

    Uses the per-mode proxy w_j = sqrt(P_jj Q_jj); states below
    ``max_ratio`` of the largest proxy contribute below roundoff to the
    transfer function but would blow up the balancing transformation, which
    is exactly the regime the sparsity regularizers create. Never trims
    below the requested order r.
    """
    k_bad = int(np.sum(sigma.sigma < max_ratio * max(sigma.sigma[0], 1e-300))) if len(sigma) else 0
    if k_bad == 0:
        return ss
    g = linalg.grammians(ss)
    w = np.sqrt(np.abs(np.diag(g.p).real * np.diag(g.q).real))
    order = np.argsort(w)  # weakest first
    n_trim = min(k_bad, ss.n_x - r)
    if n_trim <= 0:
        return ss
    drop = set(order[:n_trim].tolist())
    keep = np.array([j for j in range(ss.n_x) if j not in drop], dtype=int)
    lam = np.diag(ss.a)
    return diagonal_model(lam[keep], ss.b[keep], ss.c[:, keep], ss.d,
                          take_real_output=ss.take_real_output)


def reduce_block(ss: StateSpaceModel, r: int, method: ReductionMethod,
                 *, hinf_grid: int = 1024) -> tuple[StateSpaceModel, ReductionReport]:
    """Reduce one diagonal block to order r and measure what was lost.

    MT/MSP sort the modal states and truncate or perturb; the result stays
    diagonal. BT/BSP balance, reduce, then re-diagonalize via an eigenvalue
    decomposition of the reduced state matrix. The report carries the
    twice-tail-sum bound for the balanced methods, plus a grid estimate of
    the actual peak error and the steady-state gain error.
    """
    if not ss.is_diagonal:
        raise ValueError("reduce_block requires a diagonal realization")
    _check_order(ss, r)
    sigma = linalg.hankel_singular_values(ss)
    bound: float | None = None

    if method in (ReductionMethod.MT, ReductionMethod.MSP):
        ordered = sort_modal(ss)
        removed = np.diag(ordered.a)[r:]
        reduced = truncate(ordered, r) if method is ReductionMethod.MT \
            else singular_perturbation(ordered, r)
    else:
        bound = error_bound(sigma, r)
        work = ss
        while True:
            try:
                bal = linalg.balance(work)
                break
            except NearUnobservableState:
                trimmed = _trim_negligible(work, r, linalg.hankel_singular_values(work))
                if trimmed.n_x == work.n_x:
                    # proxy found nothing left to drop; trim one more weakest state
                    trimmed = _force_trim_one(work, r)
                    if trimmed is None:
                        raise
                work = trimmed
        reduced_bal = truncate(bal.system, r) if method is ReductionMethod.BT \
            else singular_perturbation(bal.system, r)
        removed = np.linalg.eigvals(bal.system.a[r:, r:]) if bal.system.n_x > r \
            else np.zeros(0, complex)
        if r == 0:
            reduced = diagonal_model(np.zeros(0, complex), reduced_bal.b, reduced_bal.c,
                                     reduced_bal.d, take_real_output=ss.take_real_output)
        else:
            dec = linalg.eig_dense(reduced_bal.a)
            b_d = np.linalg.solve(dec.right, reduced_bal.b)
            c_d = reduced_bal.c @ dec.right
            reduced = diagonal_model(dec.values, b_d, c_d, reduced_bal.d,
                                     take_real_output=ss.take_real_output)

    err = linalg.hinf_norm_estimate(difference_system(ss, reduced), grid_size=hinf_grid)
    dc_err = float(np.linalg.norm(linalg.dc_gain(ss) - linalg.dc_gain(reduced)))
    report = ReductionReport(
        method=method,
        original_order=ss.n_x,
        retained_order=reduced.n_x,
        bound=bound,
        hinf_error_estimate=err,
        dc_gain_error=dc_err,
        removed_eigenvalues=[complex(z) for z in removed],
    )
    return reduced, report


def _force_trim_one(ss: StateSpaceModel, r: int) -> StateSpaceModel | None:
    if ss.n_x <= max(r, 1):
        return None
    g = linalg.grammians(ss)
    w = np.sqrt(np.abs(np.diag(g.p).real * np.diag(g.q).real))
    keep = np.argsort(w)[1:]
    keep.sort()
    lam = np.diag(ss.a)
    return diagonal_model(lam[keep], ss.b[keep], ss.c[:, keep], ss.d,
                          take_real_output=ss.take_real_output)


def reduce_model(model, orders, method: ReductionMethod,
                 *, hinf_grid: int = 1024):
    """Reduce every recurrent block of a deep model.

    ``orders`` is either one shared retained order or a per-layer list. The
    architecture config keeps its training-time state count; per-layer
    parameter shapes are authoritative after reduction. Returns the new
    model and one report per layer.
    """
    from copy import deepcopy

    n_layers = len(model.layers)
    if isinstance(orders, int):
        orders = [orders] * n_layers
    if len(orders) != n_layers:
        raise InvalidOrder("orders list must match the layer count")
    reduced = deepcopy(model)
    reports = []
    for layer, r in zip(reduced.layers, orders):
        new_lru, report = reduce_lru(layer.lru, r, method, hinf_grid=hinf_grid)
        layer.lru = new_lru
        reports.append(report)
    return reduced, reports


def reduce_lru(p: LruParams, r: int, method: ReductionMethod,
               *, hinf_grid: int = 1024) -> tuple[LruParams, ReductionReport]:
    """Reduce a recurrent block and re-parameterize the result.

    Composes modal realization -> block reduction -> inverse
    parameterization. The static corrections of MSP/BSP land in the real
    feedthrough. Eigenvalues that come back exactly real positive are
    rotated by a 1e-12 phase before the inverse map, since arg = 0 is not
    representable.
    """
    ss = to_state_space(p)
    reduced, report = reduce_block(ss, r, method, hinf_grid=hinf_grid)
    lam = np.diag(reduced.a)
    theta = np.angle(lam)
    degenerate = (theta == 0.0) & (np.abs(lam) > 0)
    if np.any(degenerate):
        lam = np.where(degenerate, lam * np.exp(1j * 1e-12), lam)
    params = from_modal(lam, reduced.b, reduced.c, reduced.d.real)
    return params, report
