"""
Tests for the problem generators.
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from saddlecert.config import NEAR_SINGULAR_SHIFT
from saddlecert.exceptions import BadDims, DimensionMismatch, GridTooSmall
from saddlecert.models.saddle import RhsPair, SaddleSystem
from saddlecert.services.problems import ProblemService, SplitMix64


class TestSplitMix64:
    """Seeded stream used by every random generator."""

    def test_reference_value(self):
        """First output for seed 0 is the published splitmix64 value."""
        assert int(SplitMix64(0).next_raw(1)[0]) == 0xE220A8397B1DCDAF

    def test_counter_based(self):
        """Drawing 3 then 2 gives the same stream as drawing 5."""
        a = SplitMix64(42)
        chunks = np.concatenate([a.next_raw(3), a.next_raw(2)])
        assert_array_equal(chunks, SplitMix64(42).next_raw(5))

    def test_uniform_range(self):
        values = SplitMix64(7).uniform(1000, -1.0, 1.0)
        assert values.min() >= -1.0
        assert values.max() < 1.0
        assert abs(values.mean()) < 0.1


class TestMacStokes:
    def test_dimensions(self, stokes8):
        """8x8 grid: 2 * 7 * 8 face velocities, 63 pressures after pinning."""
        assert stokes8.n == 112
        assert stokes8.m == 63
        assert stokes8.grid.size == stokes8.n
        assert not np.any(stokes8.C)

    def test_wellposed(self, stokes8):
        report = ProblemService.check_wellposed(stokes8)
        assert report.all_ok
        assert report.B_rank == stokes8.m

    def test_symmetric_positive_a(self, stokes8):
        assert_allclose(stokes8.A, stokes8.A.T)
        assert np.linalg.eigvalsh(stokes8.A)[0] > 0

    def test_grid_too_small(self):
        with pytest.raises(GridTooSmall):
            ProblemService.make_mac_stokes(3)

    def test_viscosity_scales_a(self):
        base = ProblemService.make_mac_stokes(4)
        scaled = ProblemService.make_mac_stokes(4, viscosity=2.0)
        assert_allclose(scaled.A, 2.0 * base.A)
        assert_allclose(scaled.B, base.B)


class TestMixedPoisson:
    def test_pressure_weight(self):
        sys = ProblemService.make_mixed_poisson(8, c_weight=1.0)
        assert_allclose(sys.C, np.eye(sys.m) / 64.0)
        assert ProblemService.check_wellposed(sys).all_ok

    def test_zero_weight_default(self, poisson8):
        assert not np.any(poisson8.C)
        assert ProblemService.check_wellposed(poisson8).all_ok


class TestRandomSaddle:
    def test_bit_identical(self):
        a = ProblemService.make_random_saddle(30, 10, seed=9, c_mode="laplace")
        b = ProblemService.make_random_saddle(30, 10, seed=9, c_mode="laplace")
        assert_array_equal(a.A, b.A)
        assert_array_equal(a.B, b.B)
        assert_array_equal(a.C, b.C)
        assert a.label == "random_30x10_s9_laplace"

    def test_seed_changes_system(self):
        a = ProblemService.make_random_saddle(30, 10, seed=1)
        b = ProblemService.make_random_saddle(30, 10, seed=2)
        assert not np.array_equal(a.B, b.B)

    def test_bad_dims(self):
        with pytest.raises(BadDims):
            ProblemService.make_random_saddle(5, 6, seed=0)

    def test_wellposed(self, random_sys):
        report = ProblemService.check_wellposed(random_sys)
        assert report.all_ok
        assert report.min_eigs["A"] >= 0.5 - 1e-12

    def test_near_singular_a(self):
        """A half-rank Gram part leaves n - n//2 eigenvalues at the shift."""
        sys = ProblemService.make_random_saddle(30, 10, seed=3, c_mode="diag", a_mode="near_singular")
        eig = np.linalg.eigvalsh(sys.A)
        assert_allclose(eig[:15], NEAR_SINGULAR_SHIFT, rtol=1e-6)
        assert eig[15] > 1e3 * NEAR_SINGULAR_SHIFT
        assert eig[-1] / eig[0] > 1e5
        assert ProblemService.check_wellposed(sys).all_ok
        assert sys.label == "random_30x10_s3_diag_near_singular"

    def test_default_a_mode_unchanged(self):
        a = ProblemService.make_random_saddle(30, 10, seed=9, c_mode="laplace")
        b = ProblemService.make_random_saddle(30, 10, seed=9, c_mode="laplace", a_mode="well")
        assert_array_equal(a.A, b.A)
        with pytest.raises(ValueError):
            ProblemService.make_random_saddle(30, 10, seed=9, a_mode="singular")


class TestSolveAndRhs:
    def test_rhs_deterministic(self, stokes8):
        r1 = ProblemService.make_rhs(stokes8, 3)
        r2 = ProblemService.make_rhs(stokes8, 3)
        assert_array_equal(r1.f, r2.f)
        assert np.all(np.abs(r1.stacked) <= 1.0)

    def test_exact_solve_residual(self, stokes8):
        rhs = ProblemService.make_rhs(stokes8, 0)
        u, p = ProblemService.exact_solve(stokes8, rhs)
        r_u, r_p = ProblemService.residual(stokes8, rhs, u, p)
        assert np.linalg.norm(r_u) <= 1e-9 * np.linalg.norm(rhs.f) * np.linalg.norm(stokes8.A, 2)
        assert np.linalg.norm(r_p) <= 1e-9

    def test_exact_solve_checks_dims(self, stokes8):
        with pytest.raises(DimensionMismatch):
            ProblemService.exact_solve(stokes8, RhsPair(f=np.ones(3), g=np.ones(stokes8.m)))

    def test_rank_deficient_b_flagged(self):
        """Two identical constraint rows: B is not full rank."""
        sys = SaddleSystem(
            A=np.eye(3),
            B=np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
            C=np.zeros((2, 2)),
            label="deficient",
        )
        report = ProblemService.check_wellposed(sys)
        assert not report.B_full_rank
        assert not report.all_ok


class TestMatrixMarket:
    def test_dump_and_load(self, tmp_path, poisson8):
        """Dumped blocks read back exactly, grid metadata included."""
        descriptor = ProblemService.dump_system(poisson8, str(tmp_path))
        assert descriptor.exists()
        loaded = ProblemService.load_system(str(descriptor))
        assert loaded.label == poisson8.label
        assert_allclose(loaded.A, poisson8.A, rtol=0, atol=1e-15)
        assert_allclose(loaded.B, poisson8.B, rtol=0, atol=1e-15)
        assert loaded.grid.grid_n == 8
