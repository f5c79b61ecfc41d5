"""
Approximate inverses, preconditioner pairs and block factors.
"""
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from saddlecert.exceptions import NotSPD
from saddlecert.models.linalg import SymMatrix, Vector


@dataclass(frozen=True)
class ApproxInverse:
    """An SPD operator R standing in for A^{-1} (or for a Schur inverse).

    ``matrix`` is the dense R; ``action`` optionally applies R without the
    dense product (triangular sweeps for Gauss-Seidel); ``inverse`` is R^{-1}
    when a closed form is known.
    """
    matrix: SymMatrix
    label: str
    inverse: Optional[SymMatrix] = field(default=None, repr=False)
    action: Optional[Callable[[Vector], Vector]] = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: Vector) -> Vector:
        if self.action is not None:
            return self.action(x)
        return self.matrix @ x

    def materialize(self) -> SymMatrix:
        return self.matrix

    @cached_property
    def _dense_inverse(self) -> SymMatrix:
        if self.inverse is not None:
            return self.inverse
        try:
            factor = cho_factor(self.matrix, lower=True)
        except LinAlgError as exc:
            match = re.match(r"(\d+)-th leading minor", str(exc))
            pivot = int(match.group(1)) - 1 if match else -1
            raise NotSPD(pivot, f"{self.label} is not numerically SPD: {exc}") from exc
        inv = cho_solve(factor, np.eye(self.dim))
        inv = np.tril(inv) + np.tril(inv, -1).T
        inv.setflags(write=False)
        return inv

    def inverse_materialize(self) -> SymMatrix:
        return self._dense_inverse

    def scaled(self, factor: float, label: Optional[str] = None) -> "ApproxInverse":
        """R' = factor * R."""
        action = None
        if self.action is not None:
            inner = self.action
            action = lambda x: factor * inner(x)  # noqa: E731
        inverse = None if self.inverse is None else self.inverse / factor
        matrix = self.matrix * factor
        matrix.setflags(write=False)
        return ApproxInverse(
            matrix=matrix,
            label=label or f"{factor:.6g}*{self.label}",
            inverse=inverse,
            action=action,
        )


class RescaleRecord(BaseModel):
    target: str
    lambda_max: float
    margin: float
    factor: float  # R' = factor * R


@dataclass(frozen=True)
class PreconPair:
    """(R_A, R_S) bound to a system, with R_bar_A, S and S_bar precomputed."""
    r_a: ApproxInverse
    r_s: ApproxInverse
    r_a_bar: SymMatrix
    s: SymMatrix
    s_bar: SymMatrix
    rescale_log: Tuple[RescaleRecord, ...] = ()

    @property
    def n(self) -> int:
        return self.r_a.dim

    @property
    def m(self) -> int:
        return self.r_s.dim

    @property
    def label(self) -> str:
        return f"R_A={self.r_a.label}; R_S={self.r_s.label}"

    def symmetrized(self) -> "SymmetrizedPair":
        return SymmetrizedPair(pair=self)


@dataclass(frozen=True)
class SymmetrizedPair:
    """Marks a pair whose u-solver is used in its symmetrized form R_bar_A."""
    pair: PreconPair

    @property
    def r_a_bar(self) -> SymMatrix:
        return self.pair.r_a_bar

    @property
    def r_s(self) -> ApproxInverse:
        return self.pair.r_s


@dataclass(frozen=True)
class BlockFactors:
    """Dense L, U, H, D, J with A_hat = L H U (and the barred H, D)."""
    L: NDArray[np.float64]
    U: NDArray[np.float64]
    H: NDArray[np.float64]
    D: NDArray[np.float64]
    J: NDArray[np.float64]
    a_hat: NDArray[np.float64]
    n: int
    m: int
    H_bar: Optional[NDArray[np.float64]] = None  # None when R_bar_A is not SPD
    D_bar: Optional[NDArray[np.float64]] = None
    assembly_error: float = 0.0

    @property
    def ldu(self) -> NDArray[np.float64]:
        """The L D U weight used for the left-preconditioned GMRes."""
        w = self.L @ self.D @ self.U
        return 0.5 * (w + w.T)

    @property
    def U_inv(self) -> NDArray[np.float64]:
        u_inv = np.eye(self.n + self.m)
        u_inv[: self.n, self.n:] = -self.U[: self.n, self.n:]
        return u_inv

    @property
    def L_inv(self) -> NDArray[np.float64]:
        l_inv = np.eye(self.n + self.m)
        l_inv[self.n:, : self.n] = -self.L[self.n:, : self.n]
        return l_inv


@dataclass(frozen=True)
class ScaledErrorBlocks:
    """F = M T M in the D (or D_bar) scaling, with the blocks it is built from.

    For the symmetrized scheme ``E_A`` and ``B_bar`` hold E_bar_A and B_hat.
    T and M are None when delta = 0.
    """
    F: NDArray[np.float64]
    E_A: NDArray[np.float64]
    B_bar: NDArray[np.float64]
    E_S_bar: NDArray[np.float64]
    delta: float
    barred: bool = False
    T: Optional[NDArray[np.float64]] = None
    M: Optional[NDArray[np.float64]] = None
