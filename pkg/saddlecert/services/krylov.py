"""
Weighted-inner-product GMRes with the block-factorization preconditioners.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Literal, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import solve_triangular

from saddlecert.config import GMRES_MAX_ITER, GMRES_TOL, REORTH_THRESHOLD
from saddlecert.exceptions import BadConstants, DimensionMismatch, MaxIterReached
from saddlecert.models.linalg import Vector
from saddlecert.models.operators import PreconPair
from saddlecert.models.reports import KrylovHistory
from saddlecert.models.saddle import RhsPair, SaddleSystem
from saddlecert.services.linalg_core import LinalgService
from saddlecert.services.operators import OperatorService

logger = logging.getLogger(__name__)

Mode = Literal["left_G_in_LDU_norm", "split_LH_left_Uinv_right_in_D_norm"]
MODES = ("left_G_in_LDU_norm", "split_LH_left_Uinv_right_in_D_norm")


@dataclass
class PreconApplication:
    """Matrix-free (L H)^{-1}, U^{-1} and G = U^{-1} (L H)^{-1}, counting every kernel call."""
    sys: SaddleSystem
    pair: PreconPair
    mode: Mode = "left_G_in_LDU_norm"
    counters: Dict[str, int] = field(default_factory=lambda: {"r_a": 0, "r_s": 0, "b": 0, "bt": 0, "system": 0})

    def _split(self, r: Vector) -> Tuple[Vector, Vector]:
        if r.shape[0] != self.sys.n + self.sys.m:
            raise DimensionMismatch(f"vector has length {r.shape[0]}, need {self.sys.n + self.sys.m}")
        return r[: self.sys.n], r[self.sys.n:]

    def lh_inverse(self, r: Vector) -> Vector:
        """Block forward solve with L H = [[R_A^{-1}, 0], [B, -R_S^{-1}]]."""
        r_u, r_p = self._split(r)
        w_u = self.pair.r_a.apply(r_u)
        w_p = -self.pair.r_s.apply(r_p - self.sys.B @ w_u)
        self.counters["r_a"] += 1
        self.counters["r_s"] += 1
        self.counters["b"] += 1
        return np.concatenate([w_u, w_p])

    def u_inverse(self, w: Vector) -> Vector:
        """Distribution step z_u = w_u - R_A B^T w_p."""
        w_u, w_p = self._split(w)
        self.counters["r_a"] += 1
        self.counters["bt"] += 1
        return np.concatenate([w_u - self.pair.r_a.apply(self.sys.B.T @ w_p), w_p])

    def system(self, x: Vector) -> Vector:
        self.counters["system"] += 1
        return self.sys.block_matrix @ x

    def apply_G(self, r: Vector) -> Vector:
        return self.u_inverse(self.lh_inverse(r))

    def operator(self) -> Callable[[Vector], Vector]:
        """The preconditioned operator of this mode."""
        if self.mode == "left_G_in_LDU_norm":
            return lambda x: self.apply_G(self.system(x))
        return lambda y: self.lh_inverse(self.system(self.u_inverse(y)))

    def reset(self) -> None:
        for key in self.counters:
            self.counters[key] = 0


class KrylovService:
    """GMRes in a weighted inner product and the preconditioned solves built on it."""

    @staticmethod
    def apply_G(sys: SaddleSystem, pair: PreconPair, r: Vector) -> Vector:
        """z = U^{-1} (L H)^{-1} r."""
        return PreconApplication(sys=sys, pair=pair).apply_G(np.asarray(r, dtype=np.float64))

    @staticmethod
    def gmres_weighted(
        operator_apply: Callable[[Vector], Vector],
        b: Vector,
        x0: Optional[Vector],
        weight: NDArray,
        tol: float = GMRES_TOL,
        max_iter: int = GMRES_MAX_ITER,
        restart: Optional[int] = None,
        strict: bool = False,
        mode: str = "weighted",
    ) -> Tuple[KrylovHistory, Vector]:
        """
        Minimize ||b - K x||_W over x0 + Krylov space, Arnoldi by modified
        Gram-Schmidt in the W inner product with one reorthogonalization pass
        when the orthogonality defect exceeds REORTH_THRESHOLD.

        Stops when the weighted residual is at most tol times the initial one.
        """
        W = np.asarray(weight, dtype=np.float64)
        dim = b.shape[0]
        if W.shape != (dim, dim):
            raise DimensionMismatch(f"weight is {W.shape}, rhs has length {dim}")
        LinalgService.cholesky_factor(W)

        def inner(x: Vector, y: Vector) -> float:
            return float(y @ (W @ x))

        def wnorm(x: Vector) -> float:
            return math.sqrt(max(inner(x, x), 0.0))

        started = time.perf_counter()
        x = np.zeros(dim) if x0 is None else np.array(x0, dtype=np.float64)
        r = b - operator_apply(x) if np.any(x) else b.copy()
        beta0 = wnorm(r)
        residuals = [beta0]
        if beta0 == 0.0:
            history = KrylovHistory(mode=mode, residuals=residuals, converged=True, iterations=0)
            return history, x

        target = tol * beta0
        cycle_len = restart or max_iter
        iterations = 0
        converged = False

        while iterations < max_iter and not converged:
            beta = wnorm(r)
            size = min(cycle_len, max_iter - iterations)
            V = np.zeros((dim, size + 1))
            Hm = np.zeros((size + 1, size))
            cs = np.zeros(size)
            sn = np.zeros(size)
            g = np.zeros(size + 1)
            g[0] = beta
            V[:, 0] = r / beta
            used = 0

            for j in range(size):
                w = operator_apply(V[:, j])
                for i in range(j + 1):
                    Hm[i, j] = inner(w, V[:, i])
                    w = w - Hm[i, j] * V[:, i]
                h_next = wnorm(w)
                if h_next > 0.0:
                    defect = max(abs(inner(w, V[:, i])) for i in range(j + 1)) / h_next
                    if defect > REORTH_THRESHOLD:
                        for i in range(j + 1):
                            c = inner(w, V[:, i])
                            Hm[i, j] += c
                            w = w - c * V[:, i]
                        h_next = wnorm(w)
                Hm[j + 1, j] = h_next

                for i in range(j):
                    upper = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
                    Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
                    Hm[i, j] = upper
                denom = math.hypot(Hm[j, j], Hm[j + 1, j])
                cs[j] = Hm[j, j] / denom if denom else 1.0
                sn[j] = Hm[j + 1, j] / denom if denom else 0.0
                Hm[j, j] = denom
                Hm[j + 1, j] = 0.0
                g[j + 1] = -sn[j] * g[j]
                g[j] = cs[j] * g[j]

                iterations += 1
                used = j + 1
                residuals.append(abs(g[j + 1]))
                breakdown = h_next <= 1e-14 * beta0
                if abs(g[j + 1]) <= target or breakdown:
                    converged = True
                    if breakdown:
                        logger.debug(f"{mode}: happy breakdown at iteration {iterations}")
                    break
                V[:, j + 1] = w / h_next

            y = solve_triangular(Hm[:used, :used], g[:used], lower=False)
            x = x + V[:, :used] @ y
            if not converged:
                r = b - operator_apply(x)

        history = KrylovHistory(
            mode=mode,
            residuals=residuals,
            converged=converged,
            iterations=iterations,
            wall_clock=time.perf_counter() - started,
        )
        if not converged:
            if strict:
                raise MaxIterReached(history, f"{mode}: no convergence in {max_iter} iterations")
            logger.warning(f"{mode}: stopped at max_iter={max_iter}, residual ratio {residuals[-1] / beta0:.3e}")
        return history, x

    @staticmethod
    def solve_preconditioned(
        sys: SaddleSystem,
        pair: PreconPair,
        rhs: RhsPair,
        mode: Mode = "left_G_in_LDU_norm",
        tol: float = GMRES_TOL,
        max_iter: int = GMRES_MAX_ITER,
        strict: bool = False,
    ) -> Tuple[KrylovHistory, Vector]:
        """
        GMRes on G A in the L D U norm, or on (L H)^{-1} A U^{-1} in the D norm
        followed by x = U^{-1} y. Returns the history and the solution.
        """
        if mode not in MODES:
            raise ValueError(f"unknown mode '{mode}', expected one of {MODES}")
        factors = OperatorService.assemble_block_factors(sys, pair)
        app = PreconApplication(sys=sys, pair=pair, mode=mode)
        b = rhs.stacked

        if mode == "left_G_in_LDU_norm":
            weight = factors.ldu
            b_pre = app.apply_G(b)
        else:
            weight = factors.D
            b_pre = app.lh_inverse(b)

        op = app.operator()
        app.reset()
        op(np.zeros(sys.n + sys.m))
        per_application = dict(app.counters)
        app.reset()

        history, y = KrylovService.gmres_weighted(
            op, b_pre, None, weight, tol=tol, max_iter=max_iter, strict=strict, mode=mode
        )
        x = y if mode == "left_G_in_LDU_norm" else app.u_inverse(y)

        cost = {f"per_step_{k}": v for k, v in per_application.items()}
        cost.update({f"total_{k}": v for k, v in app.counters.items()})
        history = history.model_copy(update={"cost": cost})
        logger.info(
            f"{sys.label} {mode}: {history.iterations} iterations, converged={history.converged}, "
            f"contraction={history.contraction:.4f}"
        )
        return history, x

    @staticmethod
    def elman_bound(gamma_fov: float, Gamma_fov: float) -> float:
        """Per-step GMRes factor sqrt(1 - (gamma / Gamma)^2) from field-of-values equivalence."""
        if not 0.0 < gamma_fov <= Gamma_fov:
            raise BadConstants(f"need 0 < gamma <= Gamma, got gamma={gamma_fov}, Gamma={Gamma_fov}")
        return math.sqrt(max(0.0, 1.0 - (gamma_fov / Gamma_fov) ** 2))
