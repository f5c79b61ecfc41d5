"""
Saddle-point system records.
"""
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.linalg import cho_factor, cho_solve

from saddlecert.models.linalg import RectMatrix, SymMatrix, Vector

AxisKind = Literal["vertex", "cell"]


@dataclass(frozen=True)
class GridComponent:
    """One tensor-product block of unknowns, stored row-major as (ny, nx)."""
    nx: int
    ny: int
    kind_x: AxisKind
    kind_y: AxisKind

    @property
    def size(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class GridMetadata:
    """Structured-grid layout of the velocity/flux unknowns of A."""
    grid_n: int
    components: Tuple[GridComponent, ...]

    @property
    def size(self) -> int:
        return sum(c.size for c in self.components)


@dataclass(frozen=True)
class SaddleSystem:
    """The block system [[A, B^T], [B, -C]] with A SPD, B full rank, C PSD."""
    A: SymMatrix
    B: RectMatrix
    C: SymMatrix
    label: str = "saddle"
    grid: Optional[GridMetadata] = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @cached_property
    def schur(self) -> SymMatrix:
        """Exact Schur complement S_A = B A^{-1} B^T + C."""
        if self.m == 0:
            return np.zeros((0, 0))
        a_inv_bt = cho_solve(cho_factor(self.A, lower=True), self.B.T)
        s = self.B @ a_inv_bt + self.C
        s = np.tril(s) + np.tril(s, -1).T
        s.setflags(write=False)
        return s

    @cached_property
    def block_matrix(self) -> SymMatrix:
        """The full (n+m) system matrix."""
        mat = np.block([[self.A, self.B.T], [self.B, -self.C]])
        mat.setflags(write=False)
        return mat


@dataclass(frozen=True)
class RhsPair:
    f: Vector
    g: Vector

    @property
    def stacked(self) -> Vector:
        return np.concatenate([self.f, self.g])


class WellposedReport(BaseModel):
    """Standing-assumption checks for a saddle system."""
    A_spd: bool
    C_psd: bool
    B_rank: int
    B_full_rank: bool
    S_A_spd: bool
    min_eigs: dict
    notes: List[str] = []

    @property
    def all_ok(self) -> bool:
        return self.A_spd and self.C_psd and self.B_full_rank and self.S_A_spd
