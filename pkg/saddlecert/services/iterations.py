"""
BWY, symmetrized inexact Uzawa and inexact Uzawa steps with error-norm drivers.
"""
import logging
import math
from typing import Optional, Union

import numpy as np

from saddlecert.config import DEFAULT_K_MAX, DEFAULT_TOL, RATE_WINDOW, ROUNDOFF_FLOOR
from saddlecert.exceptions import DimensionMismatch, NotSPD, NotSymmetrized, TooShort
from saddlecert.models.iteration import ConvergenceHistory, IterateState, Method, StepRecord
from saddlecert.models.operators import PreconPair, SymmetrizedPair
from saddlecert.models.saddle import RhsPair, SaddleSystem
from saddlecert.services.linalg_core import LinalgService
from saddlecert.services.problems import ProblemService

logger = logging.getLogger(__name__)

AnyPair = Union[PreconPair, SymmetrizedPair]

# (prefactor, index shift) of the squared-error envelope per method;
# an ium state (u^k, p^k) is bounded through the regrouped (u^{k-1/2}, p^{k-1})
_ENVELOPES = {
    Method.bwy: (9.0, 0),
    Method.sium: (9.0, 0),
    Method.ium: (36.0, 1),
}


def _check_dims(sys: SaddleSystem, rhs: RhsPair, state: IterateState) -> None:
    if state.u.shape[0] != sys.n or state.p.shape[0] != sys.m:
        raise DimensionMismatch(f"state is ({state.u.shape[0]}, {state.p.shape[0]}), system is ({sys.n}, {sys.m})")
    if rhs.f.shape[0] != sys.n or rhs.g.shape[0] != sys.m:
        raise DimensionMismatch(f"rhs is ({rhs.f.shape[0]}, {rhs.g.shape[0]}), system is ({sys.n}, {sys.m})")


def _base_pair(pair: AnyPair) -> PreconPair:
    return pair.pair if isinstance(pair, SymmetrizedPair) else pair


class IterationService:
    """Stationary iterations for the saddle system."""

    @staticmethod
    def half_step(sys: SaddleSystem, pair: AnyPair, rhs: RhsPair, state: IterateState) -> np.ndarray:
        """u^{k+1/2} = u^k + R_A (f - A u^k - B^T p^k)."""
        r_a = _base_pair(pair).r_a
        return state.u + r_a.apply(rhs.f - sys.A @ state.u - sys.B.T @ state.p)

    @staticmethod
    def _pressure_update(
        sys: SaddleSystem, pair: PreconPair, rhs: RhsPair, u_new: np.ndarray, p: np.ndarray
    ) -> np.ndarray:
        return p - pair.r_s.apply(rhs.g - sys.B @ u_new + sys.C @ p)

    @staticmethod
    def bwy_step(sys: SaddleSystem, pair: PreconPair, rhs: RhsPair, state: IterateState) -> IterateState:
        """Three-step BWY update; the last u-update restarts from u^k."""
        _check_dims(sys, rhs, state)
        u_half = IterationService.half_step(sys, pair, rhs, state)
        p_new = IterationService._pressure_update(sys, pair, rhs, u_half, state.p)
        u_new = state.u + pair.r_a.apply(rhs.f - sys.A @ state.u - sys.B.T @ p_new)
        return IterateState(u=u_new, p=p_new, k=state.k + 1)

    @staticmethod
    def sium_step(sys: SaddleSystem, pair: PreconPair, rhs: RhsPair, state: IterateState) -> IterateState:
        """Like ``bwy_step`` but the last u-update continues from u^{k+1/2}."""
        _check_dims(sys, rhs, state)
        u_half = IterationService.half_step(sys, pair, rhs, state)
        p_new = IterationService._pressure_update(sys, pair, rhs, u_half, state.p)
        u_new = u_half + pair.r_a.apply(rhs.f - sys.A @ u_half - sys.B.T @ p_new)
        return IterateState(u=u_new, p=p_new, k=state.k + 1)

    @staticmethod
    def ium_step(sys: SaddleSystem, pair: SymmetrizedPair, rhs: RhsPair, state: IterateState) -> IterateState:
        """Inexact Uzawa with the symmetrized u-solver R_bar_A."""
        if not isinstance(pair, SymmetrizedPair):
            raise NotSymmetrized(
                "the inexact Uzawa u-solver must be the symmetrized smoother R_bar_A = 2R_A - R_A A R_A; "
                "pass pair.symmetrized()"
            )
        _check_dims(sys, rhs, state)
        u_new = state.u + pair.r_a_bar @ (rhs.f - sys.A @ state.u - sys.B.T @ state.p)
        p_new = IterationService._pressure_update(sys, pair.pair, rhs, u_new, state.p)
        return IterateState(u=u_new, p=p_new, k=state.k + 1)

    @staticmethod
    def step(method: Method, sys: SaddleSystem, pair: AnyPair, rhs: RhsPair, state: IterateState) -> IterateState:
        method = Method(method)
        if method is Method.ium:
            return IterationService.ium_step(sys, pair, rhs, state)
        base = _base_pair(pair)
        if method is Method.bwy:
            return IterationService.bwy_step(sys, base, rhs, state)
        return IterationService.sium_step(sys, base, rhs, state)

    @staticmethod
    def run_iteration(
        method: Method,
        sys: SaddleSystem,
        pair: AnyPair,
        rhs: RhsPair,
        start: Optional[IterateState] = None,
        k_max: int = DEFAULT_K_MAX,
        stop_tol: float = DEFAULT_TOL,
        bound_rate: Optional[float] = None,
    ) -> ConvergenceHistory:
        """
        Iterate until k_max steps or combined error <= stop_tol * initial.

        BWY errors are measured in the R_A^{-1} / R_S^{-1} norms, the two
        symmetrized variants in R_bar_A^{-1} / R_S^{-1}. When ``bound_rate``
        is given each record carries the theorem's squared envelope.
        """
        method = Method(method)
        if method is Method.ium and not isinstance(pair, SymmetrizedPair):
            raise NotSymmetrized(
                "inexact Uzawa requires the symmetrized smoother R_bar_A; use ium_smoother = symmetrized"
            )
        base = _base_pair(pair)
        u_star, p_star = ProblemService.exact_solve(sys, rhs)
        if start is None:
            start = IterateState(u=np.zeros(sys.n), p=np.zeros(sys.m))

        ra_inv = base.r_a.inverse_materialize()
        rs_inv = base.r_s.inverse_materialize() if sys.m else np.zeros((0, 0))
        try:
            ra_bar_inv = LinalgService.inverse(base.r_a_bar)
        except NotSPD:
            if method is not Method.bwy:
                raise
            ra_bar_inv = None

        def sq(e: np.ndarray, W: Optional[np.ndarray]) -> float:
            if W is None:
                return math.nan
            return max(float(e @ (W @ e)), 0.0)

        def measure(state: IterateState) -> StepRecord:
            e_u = u_star - state.u
            e_p = p_star - state.p
            u_ra = sq(e_u, ra_inv)
            u_bar = sq(e_u, ra_bar_inv)
            p_rs = sq(e_p, rs_inv) if sys.m else 0.0
            r_u, r_p = ProblemService.residual(sys, rhs, state.u, state.p)
            return StepRecord(
                k=state.k,
                err_u_ra=math.sqrt(u_ra),
                err_u_ra_bar=math.sqrt(u_bar) if not math.isnan(u_bar) else math.nan,
                err_p_rs=math.sqrt(p_rs),
                combined_sq=(u_ra if method is Method.bwy else u_bar) + p_rs,
                residual_u=float(np.linalg.norm(r_u)),
                residual_p=float(np.linalg.norm(r_p)),
            )

        half_sq = None
        if method is Method.ium:
            u_half = IterationService.half_step(sys, base, rhs, start)
            half_sq = sq(u_star - u_half, ra_bar_inv) + (sq(p_star - start.p, rs_inv) if sys.m else 0.0)

        first = measure(start)
        start_sq = first.combined_sq
        reference_sq = half_sq if half_sq is not None else start_sq
        factor, shift = _ENVELOPES[method]

        def envelope(k: int) -> Optional[float]:
            if bound_rate is None or k < shift:
                return None
            return factor * bound_rate ** (2 * (k - shift)) * reference_sq

        steps = [first.model_copy(update={"bound_sq": envelope(0)})]
        state = start
        target_sq = (stop_tol ** 2) * start_sq
        while state.k < k_max and steps[-1].combined_sq > target_sq:
            state = IterationService.step(method, sys, pair, rhs, state)
            record = measure(state)
            steps.append(record.model_copy(update={"bound_sq": envelope(state.k)}))

        logger.debug(
            f"{method.value}: {len(steps) - 1} steps, final/initial = "
            f"{math.sqrt(steps[-1].combined_sq / start_sq) if start_sq else 0.0:.3e}"
        )
        return ConvergenceHistory(
            method=method,
            steps=steps,
            reference_sq=reference_sq,
            start_sq=start_sq,
            half_step_sq=half_sq,
            bound_factor=factor if bound_rate is not None else None,
            bound_rate=bound_rate,
        )

    @staticmethod
    def count_bound_violations(
        history: ConvergenceHistory, rel_slack: float = 1e-9, unshifted: bool = False
    ) -> int:
        """
        Steps whose squared error exceeds the envelope beyond roundoff.

        With ``unshifted`` the envelope is re-evaluated as
        factor * rate^(2k) * reference at every k, ignoring the method's
        index shift. Only a diagnostic for ium.
        """
        floor = ROUNDOFF_FLOOR ** 2 * max(history.start_sq, history.reference_sq)
        violations = 0
        for record in history.steps:
            bound_sq = record.bound_sq
            if unshifted:
                if history.bound_rate is None or history.bound_factor is None:
                    return 0
                bound_sq = history.bound_factor * history.bound_rate ** (2 * record.k) * history.reference_sq
            if bound_sq is None:
                continue
            if record.combined_sq > bound_sq * (1.0 + rel_slack) + floor:
                violations += 1
        return violations

    @staticmethod
    def observed_rate(
        history: ConvergenceHistory,
        tail_window: int = RATE_WINDOW,
        truncate_at_floor: bool = False,
    ) -> float:
        """
        Geometric mean of per-step contraction of the combined error over the
        last ``tail_window`` steps.

        Returns NaN when the final error is already below the roundoff floor.
        With ``truncate_at_floor`` the records under the floor are dropped
        first and a shorter window is used if needed.
        """
        if tail_window < 2:
            raise ValueError(f"tail_window must be at least 2, got {tail_window}")
        combined = history.combined
        floor = ROUNDOFF_FLOOR * combined[0]

        if truncate_at_floor:
            above = np.nonzero(combined > floor)[0]
            if above.size == 0:
                return math.nan
            combined = combined[: above[-1] + 1]
            tail_window = min(tail_window, combined.size - 1)
            if tail_window < 1:
                return math.nan
        else:
            if combined.size - 1 <= tail_window:
                raise TooShort(f"history has {combined.size - 1} steps, need more than {tail_window}")
            if combined[-1] < floor:
                return math.nan

        start = combined[-1 - tail_window]
        if start == 0.0:
            return math.nan
        return float((combined[-1] / start) ** (1.0 / tail_window))
