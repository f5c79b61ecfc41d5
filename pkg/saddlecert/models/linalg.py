"""
Dense linear algebra value types.

Symmetric matrices are plain read-only float64 ndarrays whose lower triangle
was mirrored onto the upper one at construction (see
``LinalgService.symmetric``), so symmetry is exact rather than approximate.
"""
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel
from scipy.linalg import cho_solve

SymMatrix = NDArray[np.float64]
RectMatrix = NDArray[np.float64]
Vector = NDArray[np.float64]


@dataclass(frozen=True)
class CholeskyFactor:
    """Reusable lower Cholesky factor of an SPD matrix."""
    lower: NDArray[np.float64]

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: NDArray[np.float64]) -> NDArray[np.float64]:
        return cho_solve((self.lower, True), b)


@dataclass(frozen=True)
class EigenPairs:
    """Ascending eigenvalues with M-orthonormal eigenvectors (columns)."""
    values: NDArray[np.float64]
    vectors: NDArray[np.float64]

    @property
    def lambda_min(self) -> float:
        return float(self.values[0])

    @property
    def lambda_max(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class WeightedNorm:
    """The norm ``||x||_W = (Wx, x)^{1/2}`` for an SPD weight."""
    weight: SymMatrix
    factor: CholeskyFactor = field(repr=False)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


class LoewnerResult(BaseModel):
    """Outcome of an ``A <= M`` (or ``A < M``) test."""
    holds: bool
    worst_eigenvalue: float  # lambda_min(M - A)
    scale: float
    strict: bool = False
