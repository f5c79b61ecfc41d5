"""
Dense symmetric linear algebra: factorizations, generalized eigenproblems,
weighted norms and Loewner-order tests.
"""
import logging
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import eigh, eigvals, lapack, qr

from saddlecert.config import LOEWNER_REL_TOL, SYMMETRY_TOL
from saddlecert.exceptions import DimensionMismatch, NotSelfAdjoint, NotSPD
from saddlecert.models.linalg import (
    CholeskyFactor,
    EigenPairs,
    LoewnerResult,
    SymMatrix,
    Vector,
    WeightedNorm,
)

logger = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps


class LinalgService:
    """Dense linear algebra every other service builds on."""

    @staticmethod
    def symmetric(a: NDArray) -> SymMatrix:
        """Mirror the lower triangle of ``a`` into a read-only symmetric array."""
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        sym = np.tril(a) + np.tril(a, -1).T
        sym.setflags(write=False)
        return sym

    @staticmethod
    def symmetric_part(a: NDArray) -> NDArray:
        return 0.5 * (a + a.T)

    @staticmethod
    def cholesky_factor(M: NDArray) -> CholeskyFactor:
        """
        Lower Cholesky factor of M.

        Raises NotSPD with the failing pivot index when LAPACK stops early or
        when a pivot is below dim * eps * max(diag(M)).
        """
        M = np.asarray(M, dtype=np.float64)
        dim = M.shape[0]
        if dim < 1 or M.shape != (dim, dim):
            raise DimensionMismatch(f"cholesky needs a nonempty square matrix, got {M.shape}")

        lower, info = lapack.dpotrf(M, lower=1, clean=1)
        if info > 0:
            raise NotSPD(info - 1)
        if info < 0:
            raise ValueError(f"dpotrf: illegal argument {-info}")

        floor = dim * _EPS * max(float(np.max(np.abs(np.diag(M)))), _EPS)
        pivots = np.diag(lower) ** 2
        bad = np.nonzero(pivots <= floor)[0]
        if bad.size:
            raise NotSPD(int(bad[0]))
        return CholeskyFactor(lower=lower)

    @staticmethod
    def solve(handle: CholeskyFactor, b: NDArray) -> NDArray:
        if b.shape[0] != handle.dim:
            raise DimensionMismatch(f"rhs has {b.shape[0]} rows, factor is {handle.dim}")
        return handle.solve(b)

    @staticmethod
    def inverse(M: NDArray) -> SymMatrix:
        """Dense inverse of an SPD matrix."""
        handle = LinalgService.cholesky_factor(M)
        return LinalgService.symmetric(handle.solve(np.eye(handle.dim)))

    @staticmethod
    def sym_eig_generalized(A: NDArray, M: NDArray) -> EigenPairs:
        """All lambda with A v = lambda M v, ascending, eigenvectors M-orthonormal."""
        A = np.asarray(A, dtype=np.float64)
        M = np.asarray(M, dtype=np.float64)
        if A.shape != M.shape:
            raise DimensionMismatch(f"A is {A.shape}, M is {M.shape}")
        LinalgService.cholesky_factor(M)
        values, vectors = eigh(LinalgService.symmetric_part(A), LinalgService.symmetric_part(M))
        return EigenPairs(values=values, vectors=vectors)

    @staticmethod
    def generalized_eigvals(A: NDArray, M: NDArray) -> NDArray:
        """Eigenvalues only; same contract as ``sym_eig_generalized``."""
        A = np.asarray(A, dtype=np.float64)
        M = np.asarray(M, dtype=np.float64)
        if A.shape != M.shape:
            raise DimensionMismatch(f"A is {A.shape}, M is {M.shape}")
        LinalgService.cholesky_factor(M)
        return eigh(
            LinalgService.symmetric_part(A),
            LinalgService.symmetric_part(M),
            eigvals_only=True,
        )

    @staticmethod
    def weighted(W: NDArray) -> WeightedNorm:
        weight = LinalgService.symmetric(W)
        return WeightedNorm(weight=weight, factor=LinalgService.cholesky_factor(weight))

    @staticmethod
    def weighted_norm(x: Vector, W: WeightedNorm) -> float:
        """sqrt((Wx, x)); exactly zero for x = 0."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != W.dim:
            raise DimensionMismatch(f"vector has length {x.shape[0]}, weight is {W.dim}")
        if not np.any(x):
            return 0.0
        return float(np.sqrt(max(float(x @ (W.weight @ x)), 0.0)))

    @staticmethod
    def loewner_leq(
        A: NDArray,
        M: NDArray,
        rel_tol: float = LOEWNER_REL_TOL,
        strict: bool = False,
    ) -> LoewnerResult:
        """
        Test A <= M (or A < M when ``strict``).

        Passes iff lambda_min(M - A) >= -rel_tol * scale, or > +rel_tol * scale
        for the strict form, with scale = ||A||_2 + ||M||_2.
        """
        A = np.asarray(A, dtype=np.float64)
        M = np.asarray(M, dtype=np.float64)
        if A.shape != M.shape:
            raise DimensionMismatch(f"A is {A.shape}, M is {M.shape}")
        if A.shape[0] == 0:
            return LoewnerResult(holds=True, worst_eigenvalue=0.0, scale=0.0, strict=strict)

        diff = LinalgService.symmetric_part(M - A)
        worst = float(np.linalg.eigvalsh(diff)[0])
        scale = float(np.linalg.norm(A, 2) + np.linalg.norm(M, 2))
        margin = rel_tol * scale
        holds = worst > margin if strict else worst >= -margin
        return LoewnerResult(holds=holds, worst_eigenvalue=worst, scale=scale, strict=strict)

    @staticmethod
    def loewner_lt(A: NDArray, M: NDArray, rel_tol: float = LOEWNER_REL_TOL) -> LoewnerResult:
        return LinalgService.loewner_leq(A, M, rel_tol=rel_tol, strict=True)

    @staticmethod
    def check_self_adjoint(T: NDArray, W: NDArray, samples: int = 4, seed: int = 7) -> float:
        """Largest relative defect of (WTx, y) - (x, WTy) on random vector pairs."""
        rng = np.random.default_rng(seed)
        dim = T.shape[0]
        WT = W @ T
        worst = 0.0
        for _ in range(samples):
            x = rng.standard_normal(dim)
            y = rng.standard_normal(dim)
            lhs = float(y @ (WT @ x))
            rhs = float(x @ (WT @ y))
            scale = np.linalg.norm(WT, 2) * np.linalg.norm(x) * np.linalg.norm(y)
            if scale > 0:
                worst = max(worst, abs(lhs - rhs) / scale)
        return worst

    @staticmethod
    def spectral_radius(T: NDArray, symmetric_in: Optional[NDArray] = None) -> float:
        """max |lambda(T)|; T must be self-adjoint in the weight when one is given."""
        T = np.asarray(T, dtype=np.float64)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {T.shape}")
        if T.shape[0] == 0:
            return 0.0

        if symmetric_in is None:
            return float(np.max(np.abs(eigvals(T))))

        W = np.asarray(symmetric_in, dtype=np.float64)
        defect = LinalgService.check_self_adjoint(T, W)
        if defect > SYMMETRY_TOL:
            raise NotSelfAdjoint(f"operator is not self-adjoint in the weight (defect {defect:.3e})")
        values = LinalgService.generalized_eigvals(LinalgService.symmetric_part(W @ T), W)
        return float(np.max(np.abs(values)))

    @staticmethod
    def symmetric_spectral_radius(T: NDArray) -> float:
        """Spectral radius of a matrix known to be symmetric up to roundoff."""
        if T.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvalsh(LinalgService.symmetric_part(T)))))

    @staticmethod
    def operator_norm(T: NDArray, W: NDArray, W_out: Optional[NDArray] = None) -> float:
        """
        ||T||_{W -> W_out} = sqrt(lambda_max(T^T W_out T, W)).

        W_out defaults to W (the usual induced norm).
        """
        W_out = W if W_out is None else W_out
        if T.size == 0:
            return 0.0
        gram = LinalgService.symmetric_part(T.T @ W_out @ T)
        values = LinalgService.generalized_eigvals(gram, W)
        return float(np.sqrt(max(values[-1], 0.0)))

    @staticmethod
    def sqrt_spd(M: NDArray) -> SymMatrix:
        """SPD square root by eigendecomposition."""
        values, vectors = np.linalg.eigh(LinalgService.symmetric_part(np.asarray(M, dtype=np.float64)))
        LinalgService._require_positive(values)
        root = (vectors * np.sqrt(values)) @ vectors.T
        return LinalgService.symmetric(root)

    @staticmethod
    def inv_sqrt_spd(M: NDArray) -> SymMatrix:
        values, vectors = np.linalg.eigh(LinalgService.symmetric_part(np.asarray(M, dtype=np.float64)))
        LinalgService._require_positive(values)
        root = (vectors / np.sqrt(values)) @ vectors.T
        return LinalgService.symmetric(root)

    @staticmethod
    def _require_positive(values: NDArray) -> None:
        floor = values.size * _EPS * max(float(np.max(np.abs(values))), _EPS)
        bad = np.nonzero(values <= floor)[0]
        if bad.size:
            raise NotSPD(int(bad[0]), f"eigenvalue {values[bad[0]]:.3e} is not positive")

    @staticmethod
    def numerical_rank(B: NDArray, rel_tol: Optional[float] = None) -> int:
        """Rank from a column-pivoted QR factorization."""
        B = np.asarray(B, dtype=np.float64)
        if B.size == 0:
            return 0
        _, r, _ = qr(B.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        if diag.size == 0 or diag[0] == 0.0:
            return 0
        tol = rel_tol if rel_tol is not None else max(B.shape) * _EPS
        return int(np.sum(diag > tol * diag[0]))
