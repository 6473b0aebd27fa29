import numpy as np
import pytest

from statetrim.errors import InvalidOrder
from statetrim.linalg import (
    HankelSpectrum,
    dc_gain,
    frequency_response,
    hankel_singular_values,
    hinf_norm_estimate,
)
from statetrim.lru import LruParams, simulate_sequential, to_state_space
from statetrim.mor import (
    ReductionMethod,
    difference_system,
    error_bound,
    reduce_block,
    reduce_lru,
    singular_perturbation,
    sort_modal,
    truncate,
)

from conftest import random_diag_system, random_lru

ALL_METHODS = list(ReductionMethod)


class TestTruncate:
    def test_full_order_identity(self, rng):
        ss = random_diag_system(rng, 4)
        red = truncate(ss, 4)
        assert np.array_equal(red.a, ss.a)

    def test_zero_order_static(self, rng):
        ss = random_diag_system(rng, 4)
        red = truncate(ss, 0)
        assert red.n_x == 0
        u = rng.standard_normal((5, ss.n_u))
        from statetrim.linalg import simulate_model
        y = simulate_model(red, u)
        assert np.allclose(y, u @ red.d.T)

    def test_retains_leading_eigenvalues(self, rng):
        ss = random_diag_system(rng, 5)
        red = truncate(ss, 3)
        assert np.array_equal(np.diag(red.a), np.diag(ss.a)[:3])

    def test_invalid_order(self, rng):
        ss = random_diag_system(rng, 3)
        with pytest.raises(InvalidOrder):
            truncate(ss, 4)


class TestSingularPerturbation:
    def test_full_order_identity(self, rng):
        ss = random_diag_system(rng, 4)
        red = singular_perturbation(ss, 4)
        assert np.array_equal(red.a, ss.a)

    def test_dc_gain_preserved(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 7))
            ss = random_diag_system(rng, n, take_real_output=bool(rng.integers(2)))
            r = int(rng.integers(0, n))
            red = singular_perturbation(ss, r)
            g0, g1 = dc_gain(ss), dc_gain(red)
            assert np.linalg.norm(g0 - g1) <= 1e-9 * (1 + np.linalg.norm(g0))

    def test_diagonal_collapse_to_static_gain(self, rng):
        ss = random_diag_system(rng, 3, take_real_output=True)
        red = singular_perturbation(ss, 0)
        lam = np.diag(ss.a)
        expected = (ss.c @ np.diag(1.0 / (1.0 - lam)) @ ss.b).real + ss.d.real
        assert np.allclose(red.d, expected)

    def test_real_feedthrough_for_real_output_models(self, rng):
        ss = random_diag_system(rng, 4, take_real_output=True)
        red = singular_perturbation(ss, 2)
        assert np.abs(red.d.imag).max() == 0.0


class TestSortModal:
    def test_already_sorted_untouched(self):
        lam = [0.9, 0.5, 0.1]
        ss_sorted = sort_modal(
            random_system_with_eigs(lam))
        assert np.allclose(np.abs(np.diag(ss_sorted.a)), sorted(np.abs(lam))[::-1])

    def test_transfer_function_invariant(self, rng):
        ss = random_diag_system(rng, 5)
        ordered = sort_modal(ss)
        for omega in np.linspace(0, np.pi, 17):
            g1 = frequency_response(ss, omega)
            g2 = frequency_response(ordered, omega)
            assert np.linalg.norm(g1 - g2) <= 1e-12 * (1 + np.linalg.norm(g1))

    def test_tie_break_by_coupling_strength(self):
        lam = np.array([0.5, 0.5j])  # equal modulus
        b = np.array([[0.1], [10.0]])
        c = np.array([[0.1, 10.0]])
        ss = sort_modal(random_system_with_eigs(lam, b, c))
        assert np.diag(ss.a)[0] == 0.5j  # stronger coupled mode first


def random_system_with_eigs(lam, b=None, c=None):
    from statetrim.linalg import diagonal_model

    lam = np.asarray(lam, complex)
    n = lam.size
    if b is None:
        b = np.ones((n, 1), complex)
    if c is None:
        c = np.ones((1, n), complex)
    return diagonal_model(lam, b, c, np.zeros((1, b.shape[1])))


class TestErrorBound:
    def test_full_order_zero(self):
        assert error_bound(HankelSpectrum(np.array([3.0, 1.0])), 2) == 0.0

    def test_tail_sum(self):
        assert error_bound(HankelSpectrum(np.array([3.0, 1.0, 0.5])), 1) == 3.0

    def test_invalid_order(self):
        with pytest.raises(InvalidOrder):
            error_bound(HankelSpectrum(np.array([1.0])), 2)


class TestReduceBlock:
    def test_full_order_negligible_error(self, rng):
        ss = random_diag_system(rng, 4, take_real_output=True)
        for method in ALL_METHODS:
            _, report = reduce_block(ss, 4, method, hinf_grid=256)
            assert report.hinf_error_estimate <= 1e-9

    def test_modal_truncation_keeps_eigenvalues_bitwise(self, rng):
        ss = random_diag_system(rng, 6, take_real_output=True)
        red, report = reduce_block(ss, 4, ReductionMethod.MT, hinf_grid=64)
        original = np.diag(ss.a)
        kept = np.diag(red.a)
        for lam in kept:
            assert lam in original  # bit-identical copies

    def test_balanced_methods_respect_bound(self, rng):
        for _ in range(6):
            n = int(rng.integers(3, 9))
            ss = random_diag_system(rng, n, take_real_output=True)
            sigma = hankel_singular_values(ss).sigma
            for r in range(n + 1):
                for method in (ReductionMethod.BT, ReductionMethod.BSP):
                    red, report = reduce_block(ss, r, method, hinf_grid=256)
                    bound = 2.0 * sigma[r:].sum()
                    assert report.hinf_error_estimate <= bound + 1e-6
                    assert report.bound == pytest.approx(bound)

    def test_reduced_systems_stay_stable(self, rng):
        for _ in range(4):
            ss = random_diag_system(rng, 6, take_real_output=True)
            for method in ALL_METHODS:
                red, _ = reduce_block(ss, 3, method, hinf_grid=64)
                assert red.spectral_radius() < 1.0

    def test_rediagonalized_transfer_matches_balanced_reduction(self, rng):
        # the diagonal result of a balanced method must realize the same
        # transfer function as the pre-diagonalization reduced system
        from statetrim.linalg import balance

        ss = random_diag_system(rng, 6, take_real_output=True)
        red, _ = reduce_block(ss, 3, ReductionMethod.BT, hinf_grid=64)
        bal = balance(ss)
        ref = truncate(bal.system, 3)
        for omega in np.linspace(0, np.pi, 9):
            g1 = frequency_response(red, omega)
            g2 = frequency_response(ref, omega)
            assert np.linalg.norm(g1 - g2) <= 1e-8 * (1 + np.linalg.norm(g2))

    def test_report_contents(self, rng):
        ss = random_diag_system(rng, 5, take_real_output=True)
        red, report = reduce_block(ss, 2, ReductionMethod.MSP, hinf_grid=64)
        assert report.original_order == 5
        assert report.retained_order == 2
        assert report.bound is None
        assert len(report.removed_eigenvalues) == 3
        d = report.to_dict()
        assert d["method"] == "msp"


class TestReduceLru:
    def test_full_order_equivalent(self, rng):
        p = random_lru(rng, 5)
        u = rng.standard_normal((128, p.n_u))
        y_ref = simulate_sequential(p, u)
        for method in ALL_METHODS:
            q, _ = reduce_lru(p, 5, method)
            y = simulate_sequential(q, u)
            assert np.abs(y - y_ref).max() <= 1e-8

    def test_msp_removes_near_zero_modes_exactly(self, rng):
        # modes with |lam| ~ 1e-12 only contribute a static term, which
        # singular perturbation folds into the feedthrough
        p = random_lru(rng, 5)
        p.nu[3:] = np.log(-np.log(1e-12))
        u = rng.standard_normal((96, p.n_u))
        y_ref = simulate_sequential(p, u)
        q, _ = reduce_lru(p, 3, ReductionMethod.MSP)
        assert q.n_x == 3
        y = simulate_sequential(q, u)
        assert np.abs(y - y_ref).max() <= 1e-8

    def test_mt_removes_unobservable_near_zero_modes(self, rng):
        p = random_lru(rng, 5)
        p.nu[3:] = np.log(-np.log(1e-12))
        p.c[:, 3:] = 0.0
        u = rng.standard_normal((96, p.n_u))
        y_ref = simulate_sequential(p, u)
        q, _ = reduce_lru(p, 3, ReductionMethod.MT)
        y = simulate_sequential(q, u)
        assert np.abs(y - y_ref).max() <= 1e-10

    def test_bsp_error_within_bound_on_signals(self, rng):
        p = random_lru(rng, 6)
        ss = to_state_space(p)
        sigma = hankel_singular_values(ss).sigma
        r = 3
        q, report = reduce_lru(p, r, ReductionMethod.BSP)
        bound = 2.0 * sigma[r:].sum()
        u = rng.standard_normal((512, p.n_u))
        y1 = simulate_sequential(p, u)
        y2 = simulate_sequential(q, u)
        # peak gain bounds the l2-induced error on finite signals
        err = np.linalg.norm(y1 - y2)
        assert err <= (bound + 1e-9) * np.linalg.norm(u)

    def test_bt_handles_negligible_hankel_tail(self, rng):
        # regularized training produces blocks whose trailing singular
        # values collapse; balancing must survive via pre-trimming
        p = random_lru(rng, 6)
        p.c[:, 4:] *= 1e-14
        p.b_tilde[4:, :] *= 1e-14
        q, report = reduce_lru(p, 2, ReductionMethod.BT)
        assert q.n_x == 2
        assert np.isfinite(report.hinf_error_estimate)


class TestMspVsMtDcContrast:
    def test_msp_preserves_dc_mt_does_not(self, rng):
        p = random_lru(rng, 6)
        ss = to_state_space(p)
        g_full = dc_gain(ss)
        q_msp, _ = reduce_lru(p, 2, ReductionMethod.MSP)
        q_mt, _ = reduce_lru(p, 2, ReductionMethod.MT)
        err_msp = np.linalg.norm(dc_gain(to_state_space(q_msp)) - g_full)
        err_mt = np.linalg.norm(dc_gain(to_state_space(q_mt)) - g_full)
        assert err_msp <= 1e-9 * (1 + np.linalg.norm(g_full))
        assert err_mt > err_msp
