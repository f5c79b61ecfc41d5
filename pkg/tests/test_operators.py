"""
Tests for smoothers, Schur surrogates, pairs and block factors.
"""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from saddlecert.exceptions import (
    DimensionMismatch,
    GridTooSmall,
    NoGridMetadata,
    NotSPD,
    ThetaTooLarge,
    ZeroOperator,
)
from saddlecert.models.operators import ApproxInverse
from saddlecert.services.linalg_core import LinalgService
from saddlecert.services.operators import OperatorService
from saddlecert.services.problems import ProblemService
from tests.conftest import sgs_pair, two_grid_pair


def laplace_1d(size: int) -> np.ndarray:
    return 2.0 * np.eye(size) - np.eye(size, k=1) - np.eye(size, k=-1)


class TestSmoothers:
    """Approximate inverses of an SPD block."""

    def test_exact_inverse(self):
        M = laplace_1d(5)
        r = OperatorService.exact_inverse(M)
        assert_allclose(r.matrix @ M, np.eye(5), atol=1e-12)
        assert r.label == "exact"
        assert OperatorService.exact_inverse(M, 0.5).label == "exact(0.5)"

    def test_exact_inverse_scale_range(self):
        with pytest.raises(ValueError):
            OperatorService.exact_inverse(np.eye(2), 1.5)

    def test_jacobi_theta_too_large(self):
        """lambda_max(D^-1 M) of the 1-D Laplacian is just below 2, so theta = 2 fails."""
        with pytest.raises(ThetaTooLarge) as exc:
            OperatorService.scaled_jacobi(laplace_1d(6), 2.0)
        assert exc.value.lambda_max < 2.0

    def test_jacobi_action_matches_matrix(self):
        r = OperatorService.scaled_jacobi(laplace_1d(6), 0.8)
        x = np.arange(6.0)
        assert_allclose(r.apply(x), r.matrix @ x)
        assert_allclose(r.inverse_materialize(), np.eye(6) * 2.0 / 0.8)

    def test_sgs_dominates(self):
        """Damped SGS satisfies R^{-1} > M, with the closed-form inverse."""
        M = laplace_1d(8)
        r = OperatorService.sym_gauss_seidel(M, 0.95)
        assert_allclose(r.inverse_materialize() @ r.matrix, np.eye(8), atol=1e-10)
        assert LinalgService.loewner_lt(M, r.inverse_materialize()).holds
        x = np.linspace(-1.0, 1.0, 8)
        assert_allclose(r.apply(x), r.matrix @ x, atol=1e-12)

    def test_sgs_undamped_inverse(self):
        """For damping 1, R^{-1} = M + Lo Dg^{-1} Lo^T."""
        M = laplace_1d(5)
        lo = np.tril(M, -1)
        dg = np.diag(np.diag(M))
        expected = M + lo @ np.linalg.inv(dg) @ lo.T
        assert_allclose(OperatorService.sym_gauss_seidel(M, 1.0).inverse_materialize(), expected, atol=1e-12)

    def test_sgs_damping_range(self):
        with pytest.raises(ValueError):
            OperatorService.sym_gauss_seidel(np.eye(3), 1.5)

    def test_deflated_jacobi_closed_forms(self):
        """Sherman-Morrison inverse and the sweep agree with the dense R."""
        M = laplace_1d(7) + np.diag(np.linspace(0.0, 0.6, 7))
        r = OperatorService.deflated_jacobi(M, 0.8)
        assert_allclose(r.inverse_materialize() @ r.matrix, np.eye(7), atol=1e-10)
        x = np.cos(np.arange(7.0))
        assert_allclose(r.apply(x), r.matrix @ x, atol=1e-12)
        assert_allclose(r.apply(np.eye(7)), r.matrix, atol=1e-12)
        assert r.label == "deflated_jacobi(0.8)"

    def test_deflated_jacobi_solves_constant_mode(self):
        """On span{z} the correction is the Galerkin solve, so R M z = theta D^{-1} M z + z."""
        M = laplace_1d(6) + 0.01 * np.eye(6)
        z = np.ones(6)
        r = OperatorService.deflated_jacobi(M, 0.5, z)
        assert_allclose(r.matrix @ M @ z, 0.5 * (M @ z) / np.diag(M) + z, atol=1e-12)

    def test_deflated_jacobi_checks(self):
        with pytest.raises(ValueError):
            OperatorService.deflated_jacobi(np.eye(3), 0.0)
        with pytest.raises(DimensionMismatch):
            OperatorService.deflated_jacobi(np.eye(3), 1.0, np.ones(2))
        with pytest.raises(ZeroOperator):
            OperatorService.deflated_jacobi(laplace_1d(4) - np.diag([1.0, 0.0, 0.0, 1.0]), 1.0)

    def test_singular_operator_is_not_spd(self):
        r = ApproxInverse(matrix=np.diag([1.0, 0.0, 2.0]), label="singular")
        with pytest.raises(NotSPD) as exc:
            r.inverse_materialize()
        assert exc.value.pivot == 1


class TestTwoGrid:
    def test_needs_grid(self):
        with pytest.raises(NoGridMetadata):
            OperatorService.two_grid_vcycle(np.eye(4), None)

    def test_odd_grid_rejected(self):
        sys = ProblemService.make_mac_stokes(5)
        with pytest.raises(GridTooSmall):
            OperatorService.two_grid_vcycle(sys.A, sys.grid)

    def test_dimension_mismatch(self, stokes8):
        with pytest.raises(DimensionMismatch):
            OperatorService.two_grid_vcycle(np.eye(5), stokes8.grid)

    def test_needs_smoothing(self, stokes8):
        """A bare coarse correction is singular on the fine space."""
        with pytest.raises(ValueError):
            OperatorService.two_grid_vcycle(stokes8.A, stokes8.grid, 0)

    def test_symmetric_and_dominant(self, stokes8):
        r = OperatorService.two_grid_vcycle(stokes8.A, stokes8.grid, 2)
        assert_allclose(r.matrix, r.matrix.T)
        assert LinalgService.loewner_lt(stokes8.A, r.inverse_materialize()).holds
        x = np.sin(np.arange(stokes8.n, dtype=float))
        assert_allclose(r.apply(x), r.matrix @ x, rtol=1e-9, atol=1e-12)

    def test_without_coarsening_is_exact(self, stokes8):
        """With the fine space as coarse space the cycle is damping * A^{-1}."""
        r = OperatorService.two_grid_vcycle(stokes8.A, stokes8.grid, 1, coarsen=False)
        expected = 0.95 * np.linalg.inv(stokes8.A)
        assert_allclose(r.matrix, expected, rtol=1e-8, atol=1e-12)

    def test_contraction_below_one(self, stokes8):
        r = OperatorService.two_grid_vcycle(stokes8.A, stokes8.grid, 2)
        alpha = LinalgService.generalized_eigvals(stokes8.A, r.inverse_materialize())
        assert 0.0 < alpha[0] <= alpha[-1] < 1.0


class TestPairs:
    def test_symmetrized_error_is_square(self, poisson8, poisson_pair):
        """I - R_bar A = (I - R A)^2."""
        E = np.eye(poisson8.n) - poisson_pair.r_a.materialize() @ poisson8.A
        assert_allclose(np.eye(poisson8.n) - poisson_pair.r_a_bar @ poisson8.A, E @ E, atol=1e-10)

    def test_rescale_hits_margin(self, stokes_pair):
        """After rescaling, lambda_max(R_S S_bar) = 1 / (1 + margin)."""
        lam = LinalgService.generalized_eigvals(stokes_pair.s_bar, stokes_pair.r_s.inverse_materialize())
        assert lam[-1] == pytest.approx(1.0 / 1.001, rel=1e-9)
        assert len(stokes_pair.rescale_log) == 1
        assert stokes_pair.rescale_log[0].target == "S_bar"

    def test_rescale_to_s(self, random_sys):
        pair = sgs_pair(random_sys, target="S")
        lam = LinalgService.generalized_eigvals(pair.s, pair.r_s.inverse_materialize())
        assert lam[-1] == pytest.approx(1.0 / 1.001, rel=1e-9)

    def test_rescale_to_dominate(self):
        M = laplace_1d(5)
        r, record = OperatorService.rescale_to_dominate(OperatorService.exact_inverse(np.eye(5)), M, 0.01)
        assert record.lambda_max == pytest.approx(np.linalg.eigvalsh(M)[-1], rel=1e-10)
        assert record.factor == pytest.approx(1.0 / (record.lambda_max * 1.01), rel=1e-12)
        assert LinalgService.loewner_leq(1.01 * M, r.inverse_materialize()).holds
        with pytest.raises(ValueError):
            OperatorService.rescale_to_dominate(r, M, -0.1)

    def test_schur_surrogates_exact(self, stokes8):
        r_a = OperatorService.exact_inverse(stokes8.A)
        s, s_bar = OperatorService.schur_surrogates(stokes8, r_a, OperatorService.symmetrize(stokes8, r_a))
        assert_allclose(s, stokes8.schur, rtol=1e-8, atol=1e-10)
        assert_allclose(s_bar, s, rtol=1e-8, atol=1e-10)

    def test_schur_surrogate_ordering(self, poisson_pair):
        """R_A^{-1} > A gives S <= S_bar."""
        assert LinalgService.loewner_leq(poisson_pair.s, poisson_pair.s_bar).holds

    def test_exact_pair_reproduces_schur(self, stokes8, stokes_exact_pair):
        assert_allclose(stokes_exact_pair.s_bar, stokes8.schur, rtol=1e-8, atol=1e-10)
        assert stokes_exact_pair.rescale_log == ()

    def test_pair_dimension_mismatch(self, stokes8):
        r_a = OperatorService.sym_gauss_seidel(stokes8.A)
        with pytest.raises(DimensionMismatch):
            OperatorService.make_pair(stokes8, r_a, OperatorService.exact_inverse(np.eye(3)), "none")


class TestBlockFactors:
    def test_factorization(self, stokes8, stokes_pair):
        """A_hat = L H U, U = L^T and D = H J."""
        f = OperatorService.assemble_block_factors(stokes8, stokes_pair)
        assert_allclose(f.U, f.L.T)
        assert_allclose(f.L @ f.H @ f.U, f.a_hat, rtol=1e-9, atol=1e-9 * np.max(np.abs(f.a_hat)))
        assert_allclose(f.D, f.H @ f.J)
        assert f.D_bar is not None
        assert f.assembly_error < 1e-10

    def test_inverse_factors(self, poisson8, poisson_pair):
        f = OperatorService.assemble_block_factors(poisson8, poisson_pair)
        size = poisson8.n + poisson8.m
        assert_allclose(f.L_inv @ f.L, np.eye(size), atol=1e-10)
        assert_allclose(f.U_inv @ f.U, np.eye(size), atol=1e-10)

    def test_ldu_is_spd(self, random_sys, random_pair):
        f = OperatorService.assemble_block_factors(random_sys, random_pair)
        LinalgService.cholesky_factor(LinalgService.symmetric_part(f.ldu))


@pytest.mark.slow
def test_deflation_keeps_pressure_spectrum():
    """
    With the last pressure pinned, plain Jacobi on S_bar loses lambda_min to
    the near-constant mode as the grid refines; the deflated smoother keeps it.
    """
    plain, deflated = [], []
    for grid_n in (8, 16):
        sys = ProblemService.make_mac_stokes(grid_n)
        s_bar = two_grid_pair(sys).s_bar
        for ratios, r in (
            (plain, OperatorService.scaled_jacobi(s_bar, 0.25)),
            (deflated, OperatorService.deflated_jacobi(s_bar, 0.25)),
        ):
            lam = LinalgService.generalized_eigvals(s_bar, r.inverse_materialize())
            ratios.append(lam[0] / lam[-1])
    assert plain[1] <= 0.5 * plain[0]
    assert deflated[1] >= 0.5 * deflated[0]
    assert deflated[0] > plain[0]
