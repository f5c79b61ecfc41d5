"""
Iterate and convergence-history records.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

from saddlecert.models.linalg import Vector


class Method(str, Enum):
    """Stationary schemes for the saddle system."""
    bwy = "bwy"
    sium = "sium"
    ium = "ium"


@dataclass(frozen=True)
class IterateState:
    u: Vector
    p: Vector
    k: int = 0

    @property
    def stacked(self) -> Vector:
        return np.concatenate([self.u, self.p])


class StepRecord(BaseModel):
    """Error norms after step k (k = 0 is the start)."""
    k: int
    err_u_ra: float        # ||u - u^k||_{R_A^{-1}}
    err_u_ra_bar: float    # ||u - u^k||_{R_bar_A^{-1}}
    err_p_rs: float        # ||p - p^k||_{R_S^{-1}}
    combined_sq: float     # squared sum in the norms of the method's bound
    residual_u: float
    residual_p: float
    bound_sq: Optional[float] = None


class ConvergenceHistory(BaseModel):
    method: Method
    steps: List[StepRecord]
    reference_sq: float            # initial error the bound is normalized by
    start_sq: float                # combined error of (u^0, p^0)
    half_step_sq: Optional[float] = None  # ium: error of (u^{1/2}, p^0)
    bound_factor: Optional[float] = None
    bound_rate: Optional[float] = None

    @property
    def n_steps(self) -> int:
        return len(self.steps) - 1

    @property
    def combined(self) -> np.ndarray:
        """Combined error norms (not squared), one per record."""
        return np.sqrt(np.array([s.combined_sq for s in self.steps]))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([s.model_dump() for s in self.steps])
        frame.insert(0, "method", self.method.value)
        return frame
