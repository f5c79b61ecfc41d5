"""
Closed-form contraction rates and the brute-force verification engine.

Every certificate here is computed from dense matrices: error operators are
assembled explicitly and the inequality chains are checked with generalized
eigensolves, never assumed.
"""
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.linalg import block_diag

from saddlecert.config import CHAIN_REL_TOL, DELTA_ZERO_TOL, SUITE_REL_TOL
from saddlecert.exceptions import (
    AssemblyMismatch,
    DeltaZero,
    GammaOutOfRange,
    HypothesisViolated,
    NotSPD,
    NotStrictlyDominant,
    SpectrumAssumptionViolated,
)
from saddlecert.models.iteration import IterateState, Method
from saddlecert.models.linalg import LoewnerResult
from saddlecert.models.operators import PreconPair, ScaledErrorBlocks, SymmetrizedPair
from saddlecert.models.reports import (
    FovConstants,
    HypothesisReport,
    LoewnerCheck,
    LoewnerSuite,
    RateBound,
    RateBundle,
    SpectralReport,
    VerificationReport,
)
from saddlecert.models.saddle import SaddleSystem
from saddlecert.services.iterations import IterationService
from saddlecert.services.linalg_core import LinalgService
from saddlecert.services.operators import OperatorService
from saddlecert.services.problems import ProblemService, SplitMix64

logger = logging.getLogger(__name__)

HYP_RA_STRICT = "R_A⁻¹ > A"
HYP_RA_WEAK = "R_A⁻¹ ≥ A"
HYP_RS_S_BAR = "R_S⁻¹ ≥ S̄"
HYP_RS_S = "R_S⁻¹ ≥ S"

GOLDEN_THRESHOLD = (math.sqrt(5.0) - 1.0) / 2.0
SIUM_THRESHOLD = math.sqrt(2.0) / 2.0


def _mu1(delta: float, gamma: float) -> float:
    d = delta - gamma
    return (d - math.sqrt(d * d + 4.0 * (delta ** 2 * (1.0 - gamma) + delta * gamma))) / 2.0


def _eigen_extremes(A: NDArray, W: NDArray) -> Tuple[float, float]:
    if A.shape[0] == 0:
        return 1.0, 1.0
    values = LinalgService.generalized_eigvals(A, W)
    return float(values[0]), float(values[-1])


class TheoryService:
    """Rates, hypotheses and certificates for a system with a preconditioner pair."""

    # ---- spectra and hypotheses -------------------------------------------------

    @staticmethod
    def spectral_report(sys: SaddleSystem, pair: PreconPair) -> SpectralReport:
        """delta, gamma, gamma_bar from the eigenvalues of R_A A, R_S S and R_S S_bar."""
        ra_inv = pair.r_a.inverse_materialize()
        alpha_lo, alpha_hi = _eigen_extremes(sys.A, ra_inv)

        if sys.m:
            rs_inv = pair.r_s.inverse_materialize()
            kappa_lo, kappa_hi = _eigen_extremes(pair.s, rs_inv)
            kbar_lo, kbar_hi = _eigen_extremes(pair.s_bar, rs_inv)
        else:
            kappa_lo = kappa_hi = kbar_lo = kbar_hi = 1.0

        report = SpectralReport(
            delta=max(abs(1.0 - alpha_lo), abs(1.0 - alpha_hi)),
            gamma=max(abs(1.0 - kappa_lo), abs(1.0 - kappa_hi)),
            gamma_bar=max(abs(1.0 - kbar_lo), abs(1.0 - kbar_hi)),
            alpha_lo=alpha_lo,
            alpha_hi=alpha_hi,
            kappa_lo=kappa_lo,
            kappa_hi=kappa_hi,
            kappa_bar_lo=kbar_lo,
            kappa_bar_hi=kbar_hi,
        )
        logger.info(
            f"{sys.label} [{pair.label}]: delta={report.delta:.6g}, "
            f"gamma={report.gamma:.6g}, gamma_bar={report.gamma_bar:.6g}"
        )
        return report

    @staticmethod
    def check_hypotheses(
        sys: SaddleSystem, pair: PreconPair, spectral: Optional[SpectralReport] = None
    ) -> HypothesisReport:
        """Dominance assumptions with lambda_min of each difference."""
        spectral = spectral or TheoryService.spectral_report(sys, pair)
        ra_inv = pair.r_a.inverse_materialize()
        rs_inv = pair.r_s.inverse_materialize()

        ra_lt = LinalgService.loewner_lt(sys.A, ra_inv)
        ra_le = LinalgService.loewner_leq(sys.A, ra_inv)
        rs_sbar = LinalgService.loewner_leq(pair.s_bar, rs_inv)
        rs_s = LinalgService.loewner_leq(pair.s, rs_inv)

        report = HypothesisReport(
            ra_strict=ra_lt.holds,
            ra_weak=ra_le.holds,
            rs_dominates_s_bar=rs_sbar.holds,
            rs_dominates_s=rs_s.holds,
            delta_zero=spectral.delta <= DELTA_ZERO_TOL,
            worst={
                HYP_RA_STRICT: ra_lt.worst_eigenvalue,
                HYP_RS_S_BAR: rs_sbar.worst_eigenvalue,
                HYP_RS_S: rs_s.worst_eigenvalue,
            },
        )
        for name, ok in ((HYP_RA_STRICT, report.a_part_ok), (HYP_RS_S_BAR, report.rs_dominates_s_bar)):
            if not ok:
                logger.warning(f"{sys.label}: hypothesis {name} fails (worst eigenvalue {report.worst[name]:.3e})")
        return report

    # ---- closed-form rates ------------------------------------------------------

    @staticmethod
    def bwy_rates(delta: float, gamma: float, gamma_bar: float) -> Dict[str, object]:
        """rho1(delta, gamma_bar), its weak-dominance variant rho1_tilde, and mu1(delta, gamma_bar)."""
        d = delta - gamma_bar
        first = (-d + math.sqrt(d * d + 4.0 * (delta ** 2 * (1.0 - gamma_bar) + delta * gamma_bar))) / 2.0
        rho1 = max(first, (math.sqrt(5.0) + 1.0) * delta / 2.0)
        rho1_tilde = max(abs(_mu1(delta, gamma)), 2.0 * delta)
        return {
            "rho1": RateBound(
                name="rho1",
                value=rho1,
                threshold_ok=delta < GOLDEN_THRESHOLD and gamma_bar < 1.0,
            ),
            "rho1_tilde": RateBound(
                name="rho1_tilde",
                value=rho1_tilde,
                threshold_ok=delta < 0.5 and gamma < 1.0,
            ),
            "mu1": _mu1(delta, gamma_bar),
        }

    @staticmethod
    def sium_rates(delta: float, gamma: float, gamma_bar: float) -> Dict[str, object]:
        """
        rho2 and rho2_tilde.

        The first argument of rho2 is taken in absolute value. The second
        argument is the positive root of mu^2 - delta^2 mu - delta^2, i.e.
        (delta^2 + delta sqrt(delta^2 + 4)) / 2, which reaches 1 exactly at
        delta = sqrt(2)/2; the uncorrected variant delta^2 (1 + sqrt(delta^2 + 4)) / 2
        is returned alongside for comparison. The uncorrected form does not
        bound rho(E): at delta = 1/2 and gamma_bar near 0, rho2 built from it
        is about 0.39 while the SIUM error operator has spectral radius 1/2. It is a
        diagnostic only and never certifies.
        """
        d = delta ** 2 - gamma_bar
        first = abs(d - math.sqrt(d * d + 4.0 * delta ** 2)) / 2.0
        root = math.sqrt(delta ** 2 + 4.0)
        second = (delta ** 2 + delta * root) / 2.0
        uncorrected = delta ** 2 * (1.0 + root) / 2.0

        g = gamma - delta ** 2
        tilde_first = (g + math.sqrt(g * g + 4.0 * (delta ** 3 * (1.0 - gamma) + delta ** 2))) / 2.0
        tilde_second = (1.0 + delta + math.sqrt(delta ** 2 + 2.0 * delta + 5.0)) * delta / 2.0
        return {
            "rho2": RateBound(
                name="rho2",
                value=max(first, second),
                threshold_ok=delta < SIUM_THRESHOLD and gamma_bar < 1.0,
                note="first argument taken in absolute value",
            ),
            "rho2_tilde": RateBound(
                name="rho2_tilde",
                value=max(tilde_first, tilde_second),
                threshold_ok=delta < 0.5 and gamma < 1.0,
            ),
            "rho2_second_as_printed": uncorrected,
        }

    @staticmethod
    def prior_rates(delta: float, gamma: float) -> Dict[str, object]:
        """The classical max{delta, 2 gamma / (1 - gamma)} bound and the two sufficient conditions."""
        if not 0.0 <= gamma < 1.0:
            raise GammaOutOfRange(f"prior bounds need 0 <= gamma < 1, got {gamma}")
        return {
            "bwy1990_rate": max(delta, 2.0 * gamma / (1.0 - gamma)),
            "ts_convergent": delta < 1.0 and gamma < 1.0 / (1.0 + 2.0 * delta),
            "ts_rate_delta": delta < 1.0 and gamma <= delta / (2.0 + delta),
        }

    @staticmethod
    def rate_bundle(spectral: SpectralReport, hypotheses: HypothesisReport) -> RateBundle:
        """All rates with the dominance assumptions each one rests on."""
        delta, gamma, gamma_bar = spectral.delta, spectral.gamma, spectral.gamma_bar
        strict = {HYP_RA_STRICT: hypotheses.a_part_ok, HYP_RS_S_BAR: hypotheses.rs_dominates_s_bar}
        weak = {HYP_RA_WEAK: hypotheses.ra_weak, HYP_RS_S: hypotheses.rs_dominates_s}

        bwy = TheoryService.bwy_rates(delta, gamma, gamma_bar)
        sium = TheoryService.sium_rates(delta, gamma, gamma_bar)

        try:
            prior = TheoryService.prior_rates(delta, gamma)
            prior_bound = RateBound(
                name="bwy1990",
                value=prior["bwy1990_rate"],
                assumptions={HYP_RA_WEAK: hypotheses.ra_weak},
                threshold_ok=prior["bwy1990_rate"] < 1.0,
            )
            ts_convergent, ts_rate_delta = prior["ts_convergent"], prior["ts_rate_delta"]
        except GammaOutOfRange:
            prior_bound = RateBound(name="bwy1990", value=math.inf, threshold_ok=False, note="gamma >= 1")
            ts_convergent = ts_rate_delta = False

        def attach(bound: RateBound, assumptions: Dict[str, bool]) -> RateBound:
            return bound.model_copy(update={"assumptions": dict(assumptions)})

        return RateBundle(
            rho1=attach(bwy["rho1"], strict),
            rho1_tilde=attach(bwy["rho1_tilde"], weak),
            mu1=bwy["mu1"],
            rho2=attach(sium["rho2"], strict),
            rho2_tilde=attach(sium["rho2_tilde"], weak),
            rho2_second_as_printed=sium["rho2_second_as_printed"],
            prior_bwy1990=prior_bound,
            ts_convergent=ts_convergent,
            ts_rate_delta=ts_rate_delta,
        )

    @staticmethod
    def rate_landscape(deltas: Sequence[float], gammas: Sequence[float]) -> pd.DataFrame:
        """Closed-form rates on a (delta, gamma) grid; gamma stands in for both gamma and gamma_bar."""
        rows = []
        for delta in deltas:
            for gamma in gammas:
                bwy = TheoryService.bwy_rates(delta, gamma, gamma)
                sium = TheoryService.sium_rates(delta, gamma, gamma)
                prior = max(delta, 2.0 * gamma / (1.0 - gamma)) if gamma < 1.0 else math.inf
                rows.append(
                    {
                        "delta": delta,
                        "gamma": gamma,
                        "rho1": bwy["rho1"].value,
                        "rho1_tilde": bwy["rho1_tilde"].value,
                        "mu1": bwy["mu1"],
                        "rho2": sium["rho2"].value,
                        "rho2_tilde": sium["rho2_tilde"].value,
                        "rho2_second_as_printed": sium["rho2_second_as_printed"],
                        "bwy1990": prior,
                    }
                )
        return pd.DataFrame(rows)

    # ---- error operators --------------------------------------------------------

    @staticmethod
    def assemble_error_operator(method: Method, sys: SaddleSystem, pair: PreconPair) -> NDArray:
        """
        Dense error propagator in the (u, p) variables.

        bwy: I - U^{-1} H^{-1} L^{-1} A; sium: the same with H_bar; ium: I - P^{-1} A
        with the lower block-triangular P^{-1} = [[R_bar, 0], [R_S B R_bar, -R_S]].
        """
        method = Method(method)
        if isinstance(pair, SymmetrizedPair):
            pair = pair.pair
        n, m = sys.n, sys.m
        R = pair.r_a.materialize()
        Rs = pair.r_s.materialize()
        system = sys.block_matrix

        if method is Method.ium:
            precon = np.zeros((n + m, n + m))
            precon[:n, :n] = pair.r_a_bar
            precon[n:, :n] = Rs @ sys.B @ pair.r_a_bar
            precon[n:, n:] = -Rs
        else:
            l_inv = np.eye(n + m)
            l_inv[n:, :n] = -sys.B @ R
            u_inv = np.eye(n + m)
            u_inv[:n, n:] = -R @ sys.B.T
            first = pair.r_a_bar if method is Method.sium else R
            precon = u_inv @ block_diag(first, -Rs) @ l_inv
        return np.eye(n + m) - precon @ system

    @staticmethod
    def cross_validate_error_operator(
        method: Method,
        sys: SaddleSystem,
        pair: PreconPair,
        E: Optional[NDArray] = None,
        trials: int = 5,
        seed: int = 11,
    ) -> float:
        """Largest relative gap between one iteration step and E applied to the previous error."""
        method = Method(method)
        E = TheoryService.assemble_error_operator(method, sys, pair) if E is None else E
        rhs = ProblemService.make_rhs(sys, seed)
        u_star, p_star = ProblemService.exact_solve(sys, rhs)
        x_star = np.concatenate([u_star, p_star])
        step_pair = pair.symmetrized() if method is Method.ium else pair
        rng = SplitMix64(seed)

        worst = 0.0
        for _ in range(trials):
            start = rng.uniform(sys.n + sys.m, -1.0, 1.0)
            state = IterateState(u=start[: sys.n], p=start[sys.n:])
            nxt = IterationService.step(method, sys, step_pair, rhs, state)
            err_next = x_star - nxt.stacked
            predicted = E @ (x_star - start)
            scale = max(np.linalg.norm(x_star - start), 1e-300)
            worst = max(worst, float(np.linalg.norm(err_next - predicted) / scale))
        return worst

    # ---- F / T assembly ---------------------------------------------------------

    @staticmethod
    def _scaled_blocks(
        sys: SaddleSystem, pair: PreconPair, delta: float, barred: bool
    ) -> ScaledErrorBlocks:
        n = sys.n
        R = pair.r_a.materialize()
        rs_half = LinalgService.sqrt_spd(pair.r_s.materialize())
        e_s_bar = np.eye(sys.m) - rs_half @ pair.s_bar @ rs_half

        if barred:
            w_half = LinalgService.sqrt_spd(pair.r_a_bar)
            e_a = np.eye(n) - w_half @ sys.A @ w_half
            coupling = rs_half @ sys.B @ (np.eye(n) - R @ sys.A) @ w_half
        else:
            w_half = LinalgService.sqrt_spd(R)
            e_a = np.eye(n) - w_half @ sys.A @ w_half
            coupling = rs_half @ sys.B @ w_half @ e_a
        e_a = 0.5 * (e_a + e_a.T)
        e_s_bar = 0.5 * (e_s_bar + e_s_bar.T)
        F = np.block([[e_a, coupling.T], [coupling, -e_s_bar]])
        return ScaledErrorBlocks(F=F, E_A=e_a, B_bar=coupling, E_S_bar=e_s_bar, delta=delta, barred=barred)

    @staticmethod
    def _attach_T(sys: SaddleSystem, pair: PreconPair, blocks: ScaledErrorBlocks) -> ScaledErrorBlocks:
        delta = blocks.delta
        if delta <= DELTA_ZERO_TOL:
            raise DeltaZero(f"delta = {delta:.3e}: the A-solver is exact and T is undefined", blocks=blocks)
        if not LinalgService.loewner_lt(sys.A, pair.r_a.inverse_materialize()).holds:
            raise NotStrictlyDominant("R_A^{-1} > A fails, so E_A has no inverse square root")

        ea_half = LinalgService.sqrt_spd(blocks.E_A)
        ea_inv_half = LinalgService.inv_sqrt_spd(blocks.E_A)
        if blocks.barred:
            scale_a, diag_t, off = 1.0 / delta, delta ** 2, delta
        else:
            scale_a, diag_t, off = delta ** -0.5, delta, math.sqrt(delta)

        M = block_diag(scale_a * ea_half, np.eye(sys.m))
        cross = off * blocks.B_bar @ ea_inv_half
        T = np.block([[diag_t * np.eye(sys.n), cross.T], [cross, -blocks.E_S_bar]])

        defect = float(np.linalg.norm(blocks.F - M @ T @ M, 2))
        cond = float(np.linalg.cond(blocks.E_A))
        f_norm = max(float(np.linalg.norm(blocks.F, 2)), 1.0)
        if defect > 1e-10 * f_norm * max(1.0, math.sqrt(cond)):
            raise AssemblyMismatch(f"F differs from M T M by {defect:.3e}")
        return ScaledErrorBlocks(
            F=blocks.F,
            E_A=blocks.E_A,
            B_bar=blocks.B_bar,
            E_S_bar=blocks.E_S_bar,
            delta=delta,
            barred=blocks.barred,
            T=T,
            M=M,
        )

    @staticmethod
    def assemble_F_T(
        sys: SaddleSystem, pair: PreconPair, spectral: Optional[SpectralReport] = None
    ) -> ScaledErrorBlocks:
        """F = [[E_A, B_bar^T], [B_bar, -E_S_bar]] = M T M for the BWY scheme."""
        spectral = spectral or TheoryService.spectral_report(sys, pair)
        blocks = TheoryService._scaled_blocks(sys, pair, spectral.delta, barred=False)
        return TheoryService._attach_T(sys, pair, blocks)

    @staticmethod
    def assemble_F_T_bar(
        sys: SaddleSystem, pair: PreconPair, spectral: Optional[SpectralReport] = None
    ) -> ScaledErrorBlocks:
        """The symmetrized-scheme analogue with E_bar_A, B_hat and the D_bar scaling."""
        spectral = spectral or TheoryService.spectral_report(sys, pair)
        blocks = TheoryService._scaled_blocks(sys, pair, spectral.delta, barred=True)
        return TheoryService._attach_T(sys, pair, blocks)

    # ---- certificates -----------------------------------------------------------

    @staticmethod
    def verify_chain(
        sys: SaddleSystem,
        pair: PreconPair,
        method: Method = Method.bwy,
        spectral: Optional[SpectralReport] = None,
        hypotheses: Optional[HypothesisReport] = None,
    ) -> VerificationReport:
        """
        Certify rho(E_up) <= ||E||_D <= rho(F) <= rho(T) <= rate.

        bwy closes the chain with rho1 in the D norm; sium with rho2 in the
        D_bar norm.
        """
        method = Method(method)
        if method is Method.ium:
            raise ValueError("the chain certificate covers bwy and sium; ium is bounded through sium")
        spectral = spectral or TheoryService.spectral_report(sys, pair)
        hypotheses = hypotheses or TheoryService.check_hypotheses(sys, pair, spectral)

        failed = []
        if not hypotheses.a_part_ok:
            failed.append(HYP_RA_STRICT)
        if not hypotheses.rs_dominates_s_bar:
            failed.append(HYP_RS_S_BAR)
        if failed:
            raise HypothesisViolated(failed)

        E_up = TheoryService.assemble_error_operator(method, sys, pair)
        rho_E = LinalgService.spectral_radius(E_up)
        factors = OperatorService.assemble_block_factors(sys, pair)
        E = factors.U @ E_up @ factors.U_inv
        weight = factors.D_bar if method is Method.sium else factors.D
        norm_E = LinalgService.operator_norm(E, weight)

        assemble = TheoryService.assemble_F_T_bar if method is Method.sium else TheoryService.assemble_F_T
        try:
            blocks = assemble(sys, pair, spectral)
            rho_F = LinalgService.symmetric_spectral_radius(blocks.F)
            rho_T = LinalgService.symmetric_spectral_radius(blocks.T)
        except DeltaZero as exc:
            rho_F = LinalgService.symmetric_spectral_radius(exc.blocks.F)
            rho_T = rho_F

        if method is Method.sium:
            rate = TheoryService.sium_rates(spectral.delta, spectral.gamma, spectral.gamma_bar)["rho2"].value
        else:
            rate = TheoryService.bwy_rates(spectral.delta, spectral.gamma, spectral.gamma_bar)["rho1"].value

        gaps = {
            "rho_E_up<=norm_E_D": norm_E - rho_E,
            "norm_E_D<=rho_F": rho_F - norm_E,
            "rho_F<=rho_T": rho_T - rho_F,
            "rho_T<=rate": rate - rho_T,
        }
        tol = CHAIN_REL_TOL * max(1.0, rate)
        chain_ok = all(g >= -tol for g in gaps.values())
        if not chain_ok:
            worst = min(gaps, key=gaps.get)
            logger.warning(f"{sys.label} {method.value} chain fails at {worst} (gap {gaps[worst]:.3e})")

        checks = [
            LoewnerCheck(
                name=name,
                holds=ok,
                worst=hypotheses.worst.get(name, 0.0),
                hypotheses_met=True,
            )
            for name, ok in ((HYP_RA_STRICT, hypotheses.a_part_ok), (HYP_RS_S_BAR, hypotheses.rs_dominates_s_bar))
        ]
        return VerificationReport(
            method=method.value,
            rho_E_up=rho_E,
            norm_E_D=norm_E,
            rho_F=rho_F,
            rho_T=rho_T,
            rho1=rate,
            chain_ok=chain_ok,
            gaps=gaps,
            delta_zero=hypotheses.delta_zero,
            loewner_results=checks,
        )

    @staticmethod
    def verify_loewner_suite(
        sys: SaddleSystem,
        pair: PreconPair,
        spectral: Optional[SpectralReport] = None,
        hypotheses: Optional[HypothesisReport] = None,
    ) -> LoewnerSuite:
        """Every named inequality of the analysis, each with its own hypotheses."""
        spectral = spectral or TheoryService.spectral_report(sys, pair)
        hyp = hypotheses or TheoryService.check_hypotheses(sys, pair, spectral)
        delta, gamma_bar = spectral.delta, spectral.gamma_bar
        n, m = sys.n, sys.m
        tol = SUITE_REL_TOL

        R = pair.r_a.materialize()
        ra_inv = pair.r_a.inverse_materialize()
        Rs = pair.r_s.materialize()
        rs_inv = pair.r_s.inverse_materialize()
        r_bar = pair.r_a_bar
        try:
            r_bar_inv = LinalgService.inverse(r_bar)
        except NotSPD:
            r_bar_inv = None
        E = np.eye(n) - R @ sys.A
        rs_half = LinalgService.sqrt_spd(Rs)
        ra_half = LinalgService.sqrt_spd(R)

        checks: List[LoewnerCheck] = []

        def loewner(name: str, A, M, met: bool = True, strict: bool = False, detail: str = "") -> None:
            result: LoewnerResult = LinalgService.loewner_leq(A, M, rel_tol=tol, strict=strict)
            checks.append(
                LoewnerCheck(
                    name=name,
                    holds=result.holds,
                    worst=result.worst_eigenvalue,
                    hypotheses_met=met,
                    detail=detail,
                )
            )

        def bounded(name: str, value: float, bound: float, met: bool = True, detail: str = "") -> None:
            slack = tol * max(1.0, bound)
            checks.append(
                LoewnerCheck(
                    name=name,
                    holds=value <= bound + slack,
                    worst=bound - value,
                    bound=bound,
                    hypotheses_met=met,
                    detail=detail or f"value {value:.12g}",
                )
            )

        def unavailable(name: str, reason: str) -> None:
            checks.append(LoewnerCheck(name=name, holds=False, worst=math.nan, hypotheses_met=False, detail=reason))

        strict_a = hyp.ra_strict and not hyp.delta_zero

        # hypotheses themselves
        loewner("hyp_R_A_inv_gt_A", sys.A, ra_inv, met=not hyp.delta_zero, strict=True, detail=HYP_RA_STRICT)
        loewner("hyp_R_S_inv_ge_S_bar", pair.s_bar, rs_inv, detail=HYP_RS_S_BAR)
        loewner("hyp_R_S_inv_ge_S", pair.s, rs_inv, detail=HYP_RS_S)

        # smoother and Schur-surrogate ordering
        loewner("rel_R_A_lower", (1.0 - delta) * ra_inv, sys.A, met=hyp.ra_weak)
        loewner("rel_R_bar_lower_strict", R, r_bar, met=strict_a, strict=True)
        loewner("rel_R_bar_upper", r_bar, (1.0 + delta) * R, met=hyp.ra_weak)
        loewner("S_S_bar_lower_strict", pair.s, pair.s_bar, met=strict_a, strict=True)
        loewner("S_S_bar_upper", pair.s_bar, (1.0 + delta) * pair.s, met=hyp.ra_weak)

        # coupling bounds
        e_a = np.eye(n) - ra_half @ sys.A @ ra_half
        b_bar_ea_b_bar = rs_half @ sys.B @ ra_half @ e_a @ ra_half @ sys.B.T @ rs_half
        z_s = rs_half @ pair.s @ rs_half
        z_s_bar = rs_half @ pair.s_bar @ rs_half
        loewner("E_A_bound", b_bar_ea_b_bar, delta * z_s, met=strict_a)
        loewner("E_A_bound_strict", b_bar_ea_b_bar, delta * z_s_bar, met=strict_a, strict=True)
        loewner("RSR", (1.0 - gamma_bar) * np.eye(m), z_s_bar)
        s_inv = LinalgService.inverse(pair.s)
        loewner("BAB", sys.B.T @ s_inv @ sys.B, ra_inv)
        if r_bar_inv is not None:
            loewner("RSB", sys.B.T @ Rs @ sys.B, r_bar_inv, met=hyp.rs_dominates_s_bar)
        else:
            unavailable("RSB", "R_bar_A is not SPD")
        if strict_a and r_bar_inv is not None:
            bar = TheoryService._scaled_blocks(sys, pair, delta, barred=True)
            b_hat = bar.B_bar
            lhs = b_hat @ np.linalg.solve(bar.E_A, b_hat.T)
            loewner("E_A_bar_bound", 0.5 * (lhs + lhs.T), z_s_bar)
        else:
            unavailable("E_A_bar_bound", "needs R_A^{-1} > A")

        # change of variables
        factors = OperatorService.assemble_block_factors(sys, pair)
        D = factors.D
        u_met = hyp.a_part_ok and hyp.rs_dominates_s
        bounded("U_norm", LinalgService.operator_norm(factors.U, D) ** 2, 3.0, met=u_met)
        bounded("U_inv_norm", LinalgService.operator_norm(factors.U_inv, D) ** 2, 3.0, met=u_met)

        # smoother spectrum
        if r_bar_inv is not None:
            norm_bar = LinalgService.operator_norm(E, r_bar_inv)
            checks.append(
                LoewnerCheck(
                    name="smoother_norm_symmetrized",
                    holds=abs(norm_bar - delta) <= tol * max(1.0, delta) and norm_bar < 1.0,
                    worst=1.0 - norm_bar,
                    bound=delta,
                    hypotheses_met=strict_a,
                    detail=f"||I - R_A A||_(R_bar^-1) = {norm_bar:.12g}",
                )
            )
        else:
            unavailable("smoother_norm_symmetrized", "R_bar_A is not SPD")
        norm_ra = LinalgService.operator_norm(E, ra_inv)
        in_range = 0.0 < spectral.alpha_lo and spectral.alpha_hi < 2.0
        checks.append(
            LoewnerCheck(
                name="spec_E_norm",
                holds=abs(norm_ra - delta) <= tol * max(1.0, delta) and norm_ra < 1.0,
                worst=1.0 - norm_ra,
                bound=delta,
                hypotheses_met=in_range,
                detail=f"||I - R_A A||_(R_A^-1) = {norm_ra:.12g}",
            )
        )
        loewner("spec_E_ERA", E.T @ ra_inv @ E, delta ** 2 * ra_inv, met=in_range)
        loewner("spec_E_ET", E @ R @ E.T, delta ** 2 * R, met=in_range)

        # inexact Uzawa half step: (u^{k+1/2}, p^k) -> u^{k+1}, p^{k+1}
        if r_bar_inv is not None:
            d_bar = block_diag(r_bar_inv, rs_inv)
            to_u = np.hstack([E, -R @ sys.B.T])
            to_p = np.hstack([Rs @ sys.B @ E, np.eye(m) - Rs @ pair.s])
            met = strict_a and hyp.rs_dominates_s_bar
            bounded("ium_half_step_u", LinalgService.operator_norm(to_u, d_bar, r_bar_inv) ** 2, 2.0, met=met)
            bounded("ium_half_step_p", LinalgService.operator_norm(to_p, d_bar, rs_inv) ** 2, 2.0, met=met)
        else:
            unavailable("ium_half_step_u", "R_bar_A is not SPD")
            unavailable("ium_half_step_p", "R_bar_A is not SPD")

        suite = LoewnerSuite(checks=checks)
        if suite.failures:
            logger.warning(f"{sys.label}: inequality checks failed: {', '.join(suite.failures)}")
        return suite

    @staticmethod
    def fov_constants(
        sys: SaddleSystem, pair: PreconPair, spectral: Optional[SpectralReport] = None
    ) -> FovConstants:
        """
        Field-of-values constants of H^{-1} L^{-1} A U^{-1} in the D norm, and
        the measured extremes they must bracket (also for G A in the L D U norm).
        """
        spectral = spectral or TheoryService.spectral_report(sys, pair)
        mu1, mu2 = spectral.alpha_lo, spectral.alpha_hi
        k1, k2 = spectral.kappa_lo, spectral.kappa_hi
        delta = spectral.delta
        if not (0.0 < mu1 <= mu2 < 2.0):
            raise SpectrumAssumptionViolated(f"need 0 < mu1 <= mu2 < 2, got mu1={mu1:.6g}, mu2={mu2:.6g}")
        if not 0.0 < k1 <= k2:
            raise SpectrumAssumptionViolated(f"need 0 < kappa1 <= kappa2, got {k1:.6g}, {k2:.6g}")

        gamma_fov = min(mu1, min(2.0 - mu2, 1.0) * k1)
        Gamma_fov = math.sqrt(
            2.0 * max(mu2 ** 2 + k2 * delta ** 2, 2.0 * k2 ** 2 * (1.0 + delta ** 2) + k2 * delta ** 2)
        )

        factors = OperatorService.assemble_block_factors(sys, pair)
        n, m = sys.n, sys.m
        h_inv = block_diag(pair.r_a.materialize(), -pair.r_s.materialize())
        l_inv = factors.L_inv
        split_op = h_inv @ l_inv @ sys.block_matrix @ factors.U_inv
        left_op = factors.U_inv @ split_op @ factors.U

        def extremes(P: NDArray, W: NDArray) -> Tuple[float, float]:
            low = LinalgService.generalized_eigvals(LinalgService.symmetric_part(W @ P), W)[0]
            return float(low), LinalgService.operator_norm(P, W)

        emp_min, emp_max = extremes(split_op, factors.D)
        emp_min_ldu, emp_max_ldu = extremes(left_op, factors.ldu)

        slack = 1e-8 * max(1.0, Gamma_fov)
        sandwich_ok = (
            min(emp_min, emp_min_ldu) >= gamma_fov - slack
            and max(emp_max, emp_max_ldu) <= Gamma_fov + slack
        )
        if not sandwich_ok:
            logger.warning(
                f"{sys.label}: FOV sandwich fails: [{emp_min:.6g}, {emp_max:.6g}] vs [{gamma_fov:.6g}, {Gamma_fov:.6g}]"
            )
        return FovConstants(
            gamma_fov=gamma_fov,
            Gamma_fov=Gamma_fov,
            empirical_min=emp_min,
            empirical_max=emp_max,
            empirical_min_ldu=emp_min_ldu,
            empirical_max_ldu=emp_max_ldu,
            sandwich_ok=sandwich_ok,
        )
