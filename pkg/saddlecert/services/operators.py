"""
Approximate inverses R_A and R_S, the preconditioner pair and block factors.
"""
import logging
from typing import Callable, List, Literal, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import block_diag, solve_triangular

from saddlecert.config import (
    ASSEMBLY_TOL,
    DEFAULT_DOMINANCE_MARGIN,
    DEFAULT_SGS_DAMPING,
    DEFAULT_TWO_GRID_DAMPING,
)
from saddlecert.exceptions import (
    AssemblyMismatch,
    DimensionMismatch,
    GridTooSmall,
    NoGridMetadata,
    NotSPD,
    ThetaTooLarge,
    ZeroOperator,
)
from saddlecert.models.linalg import SymMatrix, Vector
from saddlecert.models.operators import ApproxInverse, BlockFactors, PreconPair, RescaleRecord
from saddlecert.models.saddle import GridComponent, GridMetadata, SaddleSystem
from saddlecert.services.linalg_core import LinalgService

logger = logging.getLogger(__name__)

RescaleTarget = Literal["S", "S_bar", "none"]
SchurBuilder = Callable[[SymMatrix], ApproxInverse]


def _vertex_prolongation(fine: int) -> NDArray:
    """Linear interpolation between interior vertices; fine = 2 * coarse + 1."""
    coarse = (fine - 1) // 2
    P = np.zeros((fine, coarse))
    for k in range(coarse):
        P[2 * k + 1, k] = 1.0
        P[2 * k, k] = 0.5
        P[2 * k + 2, k] = 0.5
    return P


def _cell_prolongation(fine: int) -> NDArray:
    """Cell-centred bilinear weights 3/4, 1/4; fine = 2 * coarse."""
    coarse = fine // 2
    P = np.zeros((fine, coarse))
    for c in range(coarse):
        P[2 * c, c] = 0.75
        P[2 * c + 1, c] = 0.75
        if c > 0:
            P[2 * c, c - 1] = 0.25
        if c < coarse - 1:
            P[2 * c + 1, c + 1] = 0.25
    return P


def _axis_prolongation(size: int, kind: str) -> NDArray:
    return _vertex_prolongation(size) if kind == "vertex" else _cell_prolongation(size)


def _component_prolongation(comp: GridComponent) -> NDArray:
    # unknowns are stored row-major as (ny, nx)
    return np.kron(
        _axis_prolongation(comp.ny, comp.kind_y),
        _axis_prolongation(comp.nx, comp.kind_x),
    )


def grid_prolongation(grid: GridMetadata) -> NDArray:
    """Block-diagonal prolongation over all grid components."""
    if grid.grid_n % 2 or grid.grid_n < 4:
        raise GridTooSmall(f"two-grid coarsening needs an even grid_n >= 4, got {grid.grid_n}")
    return block_diag(*[_component_prolongation(c) for c in grid.components])


class OperatorService:
    """Constructors for smoothers, Schur surrogates and the block factors."""

    @staticmethod
    def exact_inverse(M: SymMatrix, scale: float = 1.0) -> ApproxInverse:
        """R = scale * M^{-1}."""
        if not 0.0 < scale <= 1.0:
            raise ValueError(f"scale must be in (0, 1], got {scale}")
        inv = LinalgService.inverse(M)
        matrix = LinalgService.symmetric(scale * inv)
        inverse = LinalgService.symmetric(np.asarray(M) / scale)
        label = "exact" if scale == 1.0 else f"exact({scale:g})"
        return ApproxInverse(matrix=matrix, label=label, inverse=inverse)

    @staticmethod
    def scaled_jacobi(M: SymMatrix, theta: float = 1.0) -> ApproxInverse:
        """R = theta * diag(M)^{-1}; needs theta * lambda_max(diag(M)^{-1} M) < 2."""
        if theta <= 0:
            raise ValueError(f"theta must be positive, got {theta}")
        diag = np.diag(M).astype(np.float64)
        if np.any(diag <= 0):
            raise NotSPD(int(np.argmax(diag <= 0)), "Jacobi needs a positive diagonal")

        lam_max = float(LinalgService.generalized_eigvals(M, np.diag(diag))[-1])
        if theta * lam_max >= 2.0:
            raise ThetaTooLarge(theta, lam_max)

        matrix = np.diag(theta / diag)
        matrix.setflags(write=False)
        inverse = np.diag(diag / theta)
        inverse.setflags(write=False)
        return ApproxInverse(
            matrix=matrix,
            label=f"jacobi({theta:g})",
            inverse=inverse,
            action=lambda x: (theta / diag) * x if x.ndim == 1 else (theta / diag)[:, None] * x,
        )

    @staticmethod
    def deflated_jacobi(M: SymMatrix, theta: float = 1.0, z: Optional[Vector] = None) -> ApproxInverse:
        """
        R = theta * diag(M)^{-1} + z (z^T M z)^{-1} z^T, Jacobi plus an exact
        Galerkin correction on span{z} (the constant vector by default).

        A pinned pressure leaves the Schur complement with a near-constant
        mode whose Jacobi Rayleigh quotient is O(1/m); the correction removes
        it so lambda_min(R M) does not decay with the grid.
        """
        if theta <= 0:
            raise ValueError(f"theta must be positive, got {theta}")
        M = np.asarray(M, dtype=np.float64)
        diag = np.diag(M).copy()
        if np.any(diag <= 0):
            raise NotSPD(int(np.argmax(diag <= 0)), "Jacobi needs a positive diagonal")
        z = np.ones(M.shape[0]) if z is None else np.asarray(z, dtype=np.float64)
        if z.shape != diag.shape:
            raise DimensionMismatch(f"deflation vector has {z.shape[0]} entries, matrix has {diag.shape[0]}")
        coarse = float(z @ M @ z)
        if coarse <= 0:
            raise ZeroOperator(f"z^T M z = {coarse:.3e}; the deflation vector is in the kernel")

        matrix = LinalgService.symmetric(np.diag(theta / diag) + np.outer(z, z) / coarse)
        # Sherman-Morrison on D / theta
        dz = diag * z / theta
        inverse = LinalgService.symmetric(np.diag(diag / theta) - np.outer(dz, dz) / (coarse + z @ dz))

        def action(x: Vector) -> Vector:
            if x.ndim == 1:
                return (theta / diag) * x + z * (z @ x) / coarse
            return (theta / diag)[:, None] * x + np.outer(z, z @ x) / coarse

        logger.debug(f"deflated Jacobi: m={M.shape[0]}, theta={theta:g}, z^T M z={coarse:.6g}")
        return ApproxInverse(matrix=matrix, label=f"deflated_jacobi({theta:g})", inverse=inverse, action=action)

    @staticmethod
    def sym_gauss_seidel(M: SymMatrix, damping: float = DEFAULT_SGS_DAMPING) -> ApproxInverse:
        """
        Symmetric Gauss-Seidel: R = damping * (Dg + Lo)^{-T} Dg (Dg + Lo)^{-1}.

        For damping = 1, R^{-1} = M + Lo Dg^{-1} Lo^T >= M; damping < 1 makes
        the dominance strict.
        """
        if not 0.0 < damping <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {damping}")
        M = np.asarray(M, dtype=np.float64)
        LinalgService.cholesky_factor(M)

        K = np.tril(M)
        dg = np.diag(M).copy()
        k_inv = solve_triangular(K, np.eye(M.shape[0]), lower=True)
        matrix = LinalgService.symmetric(damping * (k_inv.T * dg) @ k_inv)
        inverse = LinalgService.symmetric((K / dg) @ K.T / damping)

        def action(x: Vector) -> Vector:
            y = solve_triangular(K, x, lower=True)
            y = dg * y if y.ndim == 1 else dg[:, None] * y
            return damping * solve_triangular(K.T, y, lower=False)

        return ApproxInverse(matrix=matrix, label=f"sgs({damping:g})", inverse=inverse, action=action)

    @staticmethod
    def two_grid_vcycle(
        M: SymMatrix,
        grid: Optional[GridMetadata],
        pre_post_smooths: int = 1,
        damping: float = DEFAULT_TWO_GRID_DAMPING,
        coarsen: bool = True,
    ) -> ApproxInverse:
        """
        One symmetric two-grid cycle: forward Gauss-Seidel pre-smoothing,
        Galerkin coarse correction solved exactly, backward Gauss-Seidel
        post-smoothing. ``coarsen=False`` replaces the coarse space by the
        fine one, which makes the cycle an exact solve.
        """
        if grid is None:
            raise NoGridMetadata("two_grid_vcycle needs a matrix built by a grid generator")
        if pre_post_smooths < 1:
            # without smoothing the cycle is P A_c^{-1} P^T, singular on the fine space
            raise ValueError(f"pre_post_smooths must be at least 1, got {pre_post_smooths}")
        if not 0.0 < damping <= 1.0:
            raise ValueError(f"damping must be in (0, 1], got {damping}")
        M = np.asarray(M, dtype=np.float64)
        if M.shape[0] != grid.size:
            raise DimensionMismatch(f"matrix has {M.shape[0]} rows, grid has {grid.size} unknowns")

        P = grid_prolongation(grid) if coarsen else np.eye(M.shape[0])
        coarse = LinalgService.cholesky_factor(LinalgService.symmetric(P.T @ M @ P))
        lower = np.tril(M)
        upper = np.triu(M)

        def cycle(r: NDArray) -> NDArray:
            x = np.zeros_like(r)
            for _ in range(pre_post_smooths):
                x = x + solve_triangular(lower, r - M @ x, lower=True)
            x = x + P @ coarse.solve(P.T @ (r - M @ x))
            for _ in range(pre_post_smooths):
                x = x + solve_triangular(upper, r - M @ x, lower=False)
            return damping * x

        dense = cycle(np.eye(M.shape[0]))
        matrix = LinalgService.symmetric(0.5 * (dense + dense.T))
        logger.debug(
            f"two-grid cycle: n={M.shape[0]}, coarse={P.shape[1]}, smooths={pre_post_smooths}"
        )
        return ApproxInverse(
            matrix=matrix,
            label=f"two_grid({pre_post_smooths})" if coarsen else "two_grid(exact)",
            action=cycle,
        )

    @staticmethod
    def symmetrize(sys: SaddleSystem, r_a: ApproxInverse) -> SymMatrix:
        """R_bar_A = 2 R_A - R_A A R_A, checked against I - R_bar_A A = (I - R_A A)^2."""
        R = r_a.materialize()
        if R.shape[0] != sys.n:
            raise DimensionMismatch(f"R_A is {R.shape[0]}-dimensional, A is {sys.n}")
        r_bar = LinalgService.symmetric(2.0 * R - R @ sys.A @ R)

        eye = np.eye(sys.n)
        err = eye - R @ sys.A
        defect = np.max(np.abs((eye - r_bar @ sys.A) - err @ err))
        scale = max(1.0, float(np.max(np.abs(err))) ** 2)
        if defect > 1e-10 * scale * sys.n:
            raise AssemblyMismatch(f"I - R_bar A differs from (I - R A)^2 by {defect:.3e}")
        return r_bar

    @staticmethod
    def schur_surrogates(
        sys: SaddleSystem, r_a: ApproxInverse, r_a_bar: SymMatrix
    ) -> Tuple[SymMatrix, SymMatrix]:
        """S = B R_A B^T + C and S_bar = B R_bar_A B^T + C."""
        R = r_a.materialize()
        s = LinalgService.symmetric(sys.B @ R @ sys.B.T + sys.C)
        s_bar = LinalgService.symmetric(sys.B @ r_a_bar @ sys.B.T + sys.C)
        return s, s_bar

    @staticmethod
    def rescale_to_dominate(
        R: ApproxInverse,
        M: SymMatrix,
        margin: float = DEFAULT_DOMINANCE_MARGIN,
        target: str = "M",
    ) -> Tuple[ApproxInverse, RescaleRecord]:
        """
        R' = R / (lambda_max(R M) (1 + margin)), so that R'^{-1} >= (1 + margin) M.

        lambda_max(R M) comes from the generalized problem M v = lambda R^{-1} v.
        """
        if margin < 0:
            raise ValueError(f"margin must be nonnegative, got {margin}")
        lam_max = float(LinalgService.generalized_eigvals(M, R.inverse_materialize())[-1])
        if lam_max <= 0:
            raise ZeroOperator(f"lambda_max(R M) = {lam_max:.3e}; nothing to dominate")

        factor = 1.0 / (lam_max * (1.0 + margin))
        record = RescaleRecord(target=target, lambda_max=lam_max, margin=margin, factor=factor)
        logger.info(f"Rescaled {R.label} against {target}: lambda_max={lam_max:.6g}, factor={factor:.6g}")
        return R.scaled(factor, label=f"{R.label}/{target}"), record

    @staticmethod
    def make_pair(
        sys: SaddleSystem,
        r_a: ApproxInverse,
        r_s: Union[ApproxInverse, SchurBuilder],
        rescale_target: RescaleTarget = "S_bar",
        margin: float = DEFAULT_DOMINANCE_MARGIN,
    ) -> PreconPair:
        """
        Bind (R_A, R_S) to a system.

        ``r_s`` is either a ready operator or a builder called with the Schur
        surrogate named by ``rescale_target`` (S_bar when no rescaling).
        """
        r_a_bar = OperatorService.symmetrize(sys, r_a)
        s, s_bar = OperatorService.schur_surrogates(sys, r_a, r_a_bar)
        target_matrix = s if rescale_target == "S" else s_bar

        if callable(r_s) and not isinstance(r_s, ApproxInverse):
            r_s = r_s(target_matrix)
        if r_s.dim != sys.m:
            raise DimensionMismatch(f"R_S is {r_s.dim}-dimensional, need {sys.m}")

        log: List[RescaleRecord] = []
        if rescale_target != "none":
            r_s, record = OperatorService.rescale_to_dominate(r_s, target_matrix, margin, target=rescale_target)
            log.append(record)

        return PreconPair(r_a=r_a, r_s=r_s, r_a_bar=r_a_bar, s=s, s_bar=s_bar, rescale_log=tuple(log))

    @staticmethod
    def exact_pair(sys: SaddleSystem) -> PreconPair:
        """R_A = A^{-1}, R_S = S_A^{-1}: every method solves in one step."""
        r_a = OperatorService.exact_inverse(sys.A)
        return OperatorService.make_pair(
            sys, r_a, OperatorService.exact_inverse(sys.schur), rescale_target="none"
        )

    @staticmethod
    def assemble_block_factors(sys: SaddleSystem, pair: PreconPair) -> BlockFactors:
        """Dense L, U, H, D, J and A_hat = L H U, checked against the explicit block form."""
        n, m = sys.n, sys.m
        if pair.n != n or pair.m != m:
            raise DimensionMismatch(f"pair is ({pair.n}, {pair.m}), system is ({n}, {m})")
        R = pair.r_a.materialize()
        ra_inv = pair.r_a.inverse_materialize()
        rs_inv = pair.r_s.inverse_materialize()

        L = np.eye(n + m)
        L[n:, :n] = sys.B @ R
        U = L.T.copy()
        J = block_diag(np.eye(n), -np.eye(m))
        D = block_diag(ra_inv, rs_inv)
        H = block_diag(ra_inv, -rs_inv)

        a_hat = L @ H @ U
        explicit = np.block([[ra_inv, sys.B.T], [sys.B, sys.B @ R @ sys.B.T - rs_inv]])
        scale = max(1.0, float(np.max(np.abs(L))) ** 2 * float(np.max(np.abs(H))))
        error = float(np.max(np.abs(a_hat - explicit))) / scale
        if error > ASSEMBLY_TOL * (n + m):
            raise AssemblyMismatch(f"L H U differs from the explicit A_hat by {error:.3e} (relative)")
        if np.max(np.abs(D - H @ J)) > 0.0:
            raise AssemblyMismatch("D != H J")

        H_bar = D_bar = None
        try:
            r_bar_inv = LinalgService.inverse(pair.r_a_bar)
            H_bar = block_diag(r_bar_inv, -rs_inv)
            D_bar = block_diag(r_bar_inv, rs_inv)
        except NotSPD:
            logger.warning("R_bar_A is not SPD (delta >= 1); barred factors unavailable")

        return BlockFactors(
            L=L,
            U=U,
            H=H,
            D=D,
            J=J,
            a_hat=0.5 * (explicit + explicit.T),
            n=n,
            m=m,
            H_bar=H_bar,
            D_bar=D_bar,
            assembly_error=error,
        )
