"""
Measured spectra, rate bounds and certificates.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class SpectralReport(BaseModel):
    """Contraction factors and extreme eigenvalues of a preconditioner pair."""
    delta: float = Field(..., ge=0.0)
    gamma: float = Field(..., ge=0.0)
    gamma_bar: float = Field(..., ge=0.0)
    alpha_lo: float
    alpha_hi: float
    kappa_lo: float
    kappa_hi: float
    kappa_bar_lo: float
    kappa_bar_hi: float


class HypothesisReport(BaseModel):
    """Dominance assumptions, each with lambda_min of the difference."""
    ra_strict: bool            # R_A^{-1} > A
    ra_weak: bool              # R_A^{-1} >= A
    rs_dominates_s_bar: bool   # R_S^{-1} >= S_bar
    rs_dominates_s: bool       # R_S^{-1} >= S
    delta_zero: bool           # exact A-solver
    worst: Dict[str, float]

    @property
    def a_part_ok(self) -> bool:
        return self.ra_strict or self.delta_zero


class RateBound(BaseModel):
    """A closed-form rate with the conditions under which it is a bound."""
    name: str
    value: float
    assumptions: Dict[str, bool] = {}
    threshold_ok: bool = True
    note: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.threshold_ok and all(self.assumptions.values())


class RateBundle(BaseModel):
    rho1: RateBound
    rho1_tilde: RateBound
    mu1: float
    rho2: RateBound
    rho2_tilde: RateBound
    rho2_second_as_printed: float
    prior_bwy1990: RateBound
    ts_convergent: bool
    ts_rate_delta: bool


class LoewnerCheck(BaseModel):
    """One named inequality from the suite."""
    name: str
    holds: bool
    worst: float
    bound: Optional[float] = None
    hypotheses_met: bool = True
    detail: str = ""

    @property
    def failed(self) -> bool:
        return self.hypotheses_met and not self.holds


class LoewnerSuite(BaseModel):
    checks: List[LoewnerCheck]

    def __getitem__(self, name: str) -> LoewnerCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def pass_count(self) -> int:
        return sum(1 for c in self.checks if c.holds)

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if c.failed]

    @property
    def all_ok(self) -> bool:
        return not self.failures


class VerificationReport(BaseModel):
    """The chain rho(E_up) <= ||E||_D <= rho(F) <= rho(T) <= rate."""
    method: str
    rho_E_up: float
    norm_E_D: float
    rho_F: float
    rho_T: float
    rho1: float  # the closed-form rate closing the chain (rho2 for sium)
    chain_ok: bool
    gaps: Dict[str, float]
    delta_zero: bool = False
    loewner_results: List[LoewnerCheck] = []


class FovConstants(BaseModel):
    """Field-of-values bounds and the measured extremes they must bracket."""
    gamma_fov: float
    Gamma_fov: float
    empirical_min: float
    empirical_max: float
    empirical_min_ldu: float
    empirical_max_ldu: float
    sandwich_ok: bool


class KrylovHistory(BaseModel):
    mode: str
    residuals: List[float]
    converged: bool
    iterations: int
    wall_clock: float = 0.0
    cost: Dict[str, int] = {}

    @property
    def contraction(self) -> float:
        """Geometric-mean residual reduction per iteration."""
        if self.iterations == 0 or self.residuals[0] == 0.0:
            return 0.0
        ratio = self.residuals[-1] / self.residuals[0]
        return float(ratio ** (1.0 / self.iterations))
