"""Eigen-mode construction tests: characteristic equation, root enumeration,
mix coefficients, norm constants (against a quadrature oracle), and the
mode-set container with its CSV/cache round trips."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from annuflux import eigen, specfun
from annuflux.errors import DomainError, EnumerationError, NumericalError
from annuflux.geometry import ChannelGeometry

DATA = Path(__file__).parent / "data"


def load_reference_table():
    table = {}
    with open(DATA / "eigentable_alpha01_3dp.csv") as fh:
        for row in csv.DictReader(fh):
            table[(int(row["m"]), int(row["n"]))] = float(row["beta"])
    return table


def eta_quadrature(mode, weight_fn, other=None):
    other = other or mode
    val, _ = integrate.quad(
        lambda x: eigen.eta(mode, x) * eigen.eta(other, x) * weight_fn(x),
        mode.alpha, 1.0, epsabs=1e-12, epsrel=1e-10, limit=400,
    )
    return val


class TestCharacteristicResidual:
    def test_near_tabulated_first_root(self):
        assert abs(eigen.characteristic_residual(0, 0.1, 1.103)) < 2e-3

    def test_bracketing_signs_around_second_root(self):
        # nonzero between the first two roots; sign flips across the n=2 root
        # near 4.979 (bracketed by 4.9 and 5.1)
        f25 = eigen.characteristic_residual(0, 0.1, 2.5)
        f20 = eigen.characteristic_residual(0, 0.1, 2.0)
        f49 = eigen.characteristic_residual(0, 0.1, 4.9)
        f51 = eigen.characteristic_residual(0, 0.1, 5.1)
        assert f25 != 0.0
        assert math.copysign(1, f25) == math.copysign(1, f20) == math.copysign(1, f49)
        assert math.copysign(1, f49) == -math.copysign(1, f51)

    def test_sign_change_across_refined_root(self):
        root = eigen.find_roots(0, 0.1, 1)[0]
        lo = eigen.characteristic_residual(0, 0.1, root - 1e-10)
        hi = eigen.characteristic_residual(0, 0.1, root + 1e-10)
        assert lo * hi < 0.0

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(DomainError):
            eigen.characteristic_residual(0, 0.1, 0.0)


class TestFindRoots:
    def test_first_three_roots_match_reference(self):
        roots = eigen.find_roots(0, 0.1, 3)
        assert roots == pytest.approx([1.103, 4.979, 8.554], abs=5e-4)

    def test_high_order_first_root(self):
        assert eigen.find_roots(10, 0.1, 1)[0] == pytest.approx(11.771, abs=5e-4)

    def test_gaps_approach_asymptotic_spacing(self):
        roots = eigen.find_roots(0, 0.1, 13)
        gaps = np.diff(roots)
        assert np.all(gaps > 0)
        assert gaps[-1] == pytest.approx(math.pi / 0.9, abs=5e-3)

    def test_enumeration_cap_is_an_error(self):
        with pytest.raises(EnumerationError):
            eigen.find_roots(0, 0.1, 500)

    def test_no_roots_missed_versus_fine_scan(self):
        for m in (0, 3, 17):
            roots = eigen.find_roots(m, 0.1, 8)
            bound = roots[-1] + 0.1
            coarse = eigen.count_sign_changes(m, 0.1, bound, step_divisor=8)
            fine = eigen.count_sign_changes(m, 0.1, bound, step_divisor=32)
            assert coarse == fine == 8

    def test_roots_below_threshold_includes_certifying_root(self):
        roots = eigen.find_roots_below(0, 0.1, 20.0)
        assert roots[-1] >= 20.0
        assert np.all(roots[:-1] < 20.0)


class TestBuildMode:
    def test_mix_coefficient_matches_order_zero_ratio_form(self):
        beta = eigen.find_roots(0, 0.1, 1)[0]
        mode = eigen.build_mode(0, 0.1, beta)
        ratio = -specfun.bessel_j(1, beta) / specfun.bessel_y(1, beta)
        assert mode.c == pytest.approx(ratio, rel=1e-7)
        # the mix vanishes at the inner boundary argument (0.1103 to 3 decimals)
        assert mode.alpha * mode.beta == pytest.approx(0.1103, abs=5e-5)
        assert abs(eigen.eta(mode, 0.1)) < 1e-6

    def test_boundary_conditions_by_construction(self):
        for m in (0, 2, 19, 41):
            beta = eigen.find_roots(m, 0.1, 2)
            for n, b in enumerate(beta, 1):
                mode = eigen.build_mode(m, 0.1, b, n)
                assert abs(eigen.eta(mode, 0.1)) < 1e-9
                assert abs(eigen.eta_prime(mode, 1.0)) < 1e-9

    def test_norm_against_quadrature_oracle(self):
        for m in (0, 1, 3):
            for n, b in enumerate(eigen.find_roots(m, 0.1, 3), 1):
                mode = eigen.build_mode(m, 0.1, b, n)
                quad = eta_quadrature(mode, lambda x: x)
                assert mode.norm == pytest.approx(quad, rel=1e-8)

    def test_cross_orthogonality(self):
        roots = eigen.find_roots(2, 0.1, 3)
        modes = [eigen.build_mode(2, 0.1, b, n) for n, b in enumerate(roots, 1)]
        for i in range(3):
            for j in range(i + 1, 3):
                overlap, _ = integrate.quad(
                    lambda x: eigen.eta(modes[i], x) * eigen.eta(modes[j], x) * x,
                    0.1, 1.0, epsabs=1e-12, limit=400,
                )
                assert abs(overlap) < 1e-8

    def test_norm_constant_function_matches_stored(self):
        mode = eigen.build_mode(0, 0.1, eigen.find_roots(0, 0.1, 1)[0])
        assert eigen.norm_constant(mode) == pytest.approx(mode.norm, rel=1e-12)


class TestEta:
    @pytest.fixture(scope="class")
    def mode(self):
        return eigen.build_mode(0, 0.1, eigen.find_roots(0, 0.1, 1)[0])

    def test_inner_dirichlet(self, mode):
        assert abs(eigen.eta(mode, mode.alpha)) < 1e-9

    def test_outer_neumann(self, mode):
        assert abs(eigen.eta_prime(mode, 1.0)) < 1e-9

    def test_prime_is_negative_order_one_mix(self, mode):
        # eta_0'(u) = -eta_1(u) with the same (beta, c), checked pointwise
        x = 0.5
        u = mode.beta * x
        eta1 = specfun.bessel_j(1, u) + mode.c * specfun.bessel_y(1, u)
        assert eigen.eta_prime(mode, x) == pytest.approx(-eta1, abs=1e-12)

    def test_domain_error_outside_annulus(self, mode):
        with pytest.raises(DomainError):
            eigen.eta(mode, 0.05)
        with pytest.raises(DomainError):
            eigen.eta(mode, 1.01)

    def test_decay_rate(self, mode):
        geom = ChannelGeometry(d0=10e-6, D0=100e-6, r0=20e-6, D=80e-12)
        expect = mode.beta**2 * 80e-12 / (100e-6) ** 2
        assert mode.decay_rate(geom) == pytest.approx(expect, rel=1e-15)


class TestModeSet:
    def test_single_mode_corner(self):
        ms = eigen.build_modeset(0.1, 0, 1)
        assert len(ms) == 1
        assert ms.betas(0)[0] == pytest.approx(1.103, abs=5e-4)

    def test_reference_subtable(self):
        table = load_reference_table()
        ms = eigen.build_modeset(0.1, 6, 4)
        for m in range(7):
            for n in range(1, 5):
                assert ms.betas(m)[n - 1] == pytest.approx(table[(m, n)], abs=5e-4), (m, n)

    def test_betas_increase_with_order(self):
        ms = eigen.build_modeset(0.1, 6, 4)
        stack = np.array([ms.betas(m) for m in range(7)])
        assert np.all(np.diff(stack, axis=0) > 0)

    def test_csv_round_trip_and_hash(self, tmp_path):
        ms = eigen.build_modeset(0.1, 2, 3)
        path = tmp_path / "table.csv"
        ms.save_csv(path)
        back = eigen.ModeSet.load_csv(path, 0.1)
        assert back.content_hash() == ms.content_hash()
        assert np.array_equal(back.betas(2), ms.betas(2))

    def test_disk_cache_reuse_is_identical(self, tmp_path):
        first = eigen.build_modeset(0.1, 1, 2, cache_dir=tmp_path)
        cached = list(tmp_path.glob("eigentable_*.csv"))
        assert len(cached) == 1
        second = eigen.build_modeset(0.1, 1, 2, cache_dir=tmp_path)
        assert second.content_hash() == first.content_hash()

    def test_mode_accessor_bounds(self):
        ms = eigen.build_modeset(0.1, 1, 2)
        with pytest.raises(DomainError):
            ms.mode(2, 1)
        with pytest.raises(DomainError):
            ms.mode(0, 3)

    def test_alpha_validation(self):
        with pytest.raises(DomainError):
            eigen.build_modeset(0.995, 0, 1)
        with pytest.raises(DomainError):
            eigen.build_modeset(0.0, 0, 1)
