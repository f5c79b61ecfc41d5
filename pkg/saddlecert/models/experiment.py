"""
Result rows and the outcome of one experiment run.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel

from saddlecert.models.iteration import ConvergenceHistory
from saddlecert.models.reports import (
    FovConstants,
    KrylovHistory,
    LoewnerSuite,
    RateBundle,
    SpectralReport,
    VerificationReport,
)
from saddlecert.models.saddle import WellposedReport


class ResultRow(BaseModel):
    """One CSV row: a (config, method) pair. Field order is the column order."""
    fingerprint: str
    problem: str
    pair: str
    method: str
    n: int
    m: int

    delta: float
    gamma: float
    gamma_bar: float
    alpha_lo: float
    alpha_hi: float
    kappa_lo: float
    kappa_hi: float

    rho1: float
    rho1_valid: bool
    rho1_tilde: float
    rho1_tilde_valid: bool
    rho2: float
    rho2_valid: bool
    rho2_tilde: float
    rho2_tilde_valid: bool
    rho2_second_as_printed: float
    prior_bwy1990: Optional[float]  # empty when gamma >= 1
    ts_convergent: bool
    ts_rate_delta: bool
    hyp_ra_strict: bool
    hyp_ra_weak: bool
    hyp_rs_s_bar: bool
    hyp_rs_s: bool

    bound_rate: Optional[float] = None
    observed_rate: Optional[float] = None
    steps: Optional[int] = None
    final_error_ratio: Optional[float] = None
    bound_violations: Optional[int] = None
    half_step_ratio: Optional[float] = None

    chain_status: str = "not_run"
    chain_worst_gap: Optional[float] = None
    loewner_pass: int = 0
    loewner_total: int = 0
    loewner_failures: str = ""

    gamma_fov: Optional[float] = None
    Gamma_fov: Optional[float] = None
    fov_empirical_min: Optional[float] = None
    fov_empirical_max: Optional[float] = None
    fov_sandwich_ok: Optional[bool] = None
    elman_bound: Optional[float] = None

    gmres_iterations: Optional[int] = None
    gmres_converged: Optional[bool] = None
    gmres_contraction: Optional[float] = None

    certificate_ok: bool = False
    notes: str = ""


CSV_COLUMNS: List[str] = list(ResultRow.model_fields)


class ExperimentOutcome(BaseModel):
    """Everything one config produced; ``rows`` are already in output order."""
    fingerprint: str
    label: str
    pair_label: str
    wellposed: WellposedReport
    spectral: SpectralReport
    rates: RateBundle
    suite: LoewnerSuite
    chains: Dict[str, VerificationReport] = {}
    chain_status: Dict[str, str] = {}
    fov: Optional[FovConstants] = None
    fov_note: Optional[str] = None
    histories: Dict[str, ConvergenceHistory] = {}
    krylov: Dict[str, KrylovHistory] = {}
    rows: List[ResultRow] = []

    @property
    def all_ok(self) -> bool:
        return all(row.certificate_ok for row in self.rows)
