"""
Tests for the closed-form rates, hypotheses and certificates.
"""
import math

import numpy as np
import pytest

from saddlecert.config import RATE_SLACK
from saddlecert.exceptions import DeltaZero, GammaOutOfRange, HypothesisViolated
from saddlecert.models.iteration import Method
from saddlecert.services.iterations import IterationService
from saddlecert.services.linalg_core import LinalgService
from saddlecert.services.operators import OperatorService
from saddlecert.services.problems import ProblemService
from saddlecert.services.theory import (
    GOLDEN_THRESHOLD,
    HYP_RS_S_BAR,
    SIUM_THRESHOLD,
    TheoryService,
)
from tests.conftest import broken_pair, sgs_pair


class TestRates:
    """Closed-form rates at known points."""

    @pytest.mark.parametrize("gamma_bar", [0.0, 0.3, 0.9])
    def test_rho1_exact_a_solver(self, gamma_bar):
        rates = TheoryService.bwy_rates(0.0, gamma_bar, gamma_bar)
        assert rates["rho1"].value == pytest.approx(gamma_bar)

    def test_rho1_at_golden_threshold(self):
        rates = TheoryService.bwy_rates(GOLDEN_THRESHOLD, 0.0, 0.0)
        assert rates["rho1"].value == pytest.approx(1.0, abs=1e-12)
        assert not rates["rho1"].threshold_ok

    def test_rho2_at_threshold(self):
        """The corrected second argument reaches 1 at sqrt(2)/2; the printed one does not."""
        rates = TheoryService.sium_rates(SIUM_THRESHOLD, 0.0, 0.0)
        assert rates["rho2"].value == pytest.approx(1.0)
        assert rates["rho2_second_as_printed"] == pytest.approx(0.78033, abs=1e-5)
        assert not rates["rho2"].threshold_ok

    @pytest.mark.parametrize("gamma_bar", [0.0, 0.5])
    def test_rho2_exact_a_solver(self, gamma_bar):
        assert TheoryService.sium_rates(0.0, gamma_bar, gamma_bar)["rho2"].value == pytest.approx(gamma_bar)

    def test_new_rate_beats_prior_bound(self):
        """gamma >= 1/3 leaves the classical bound useless while rho1 still contracts."""
        prior = TheoryService.prior_rates(0.1, 0.4)
        assert prior["bwy1990_rate"] >= 1.0
        assert TheoryService.bwy_rates(0.1, 0.4, 0.4)["rho1"].value < 1.0

    def test_prior_conditions(self):
        prior = TheoryService.prior_rates(0.2, 0.05)
        assert prior["ts_convergent"]
        assert prior["ts_rate_delta"]
        assert not TheoryService.prior_rates(0.2, 0.5)["ts_rate_delta"]

    def test_prior_gamma_out_of_range(self):
        with pytest.raises(GammaOutOfRange):
            TheoryService.prior_rates(0.1, 1.0)

    @pytest.mark.parametrize("gamma", [0.0, 0.2, 0.5, 0.9, 0.99])
    def test_rho1_nondecreasing_in_delta(self, gamma):
        frame = TheoryService.rate_landscape(np.linspace(0.0, 0.6, 61), [gamma])
        assert (np.diff(frame["rho1"].to_numpy()) >= -1e-12).all()

    @pytest.mark.parametrize("delta", [0.0, 0.1, 0.3, 0.5, 0.6])
    def test_rho1_nondecreasing_in_gamma(self, delta):
        frame = TheoryService.rate_landscape([delta], np.linspace(0.0, 0.99, 100))
        assert (np.diff(frame["rho1"].to_numpy()) >= -1e-12).all()

    def test_rho2_below_one_under_threshold(self):
        """delta < sqrt(2)/2 and gamma_bar < 1 keep both arguments of rho2 below 1."""
        deltas = np.linspace(0.0, SIUM_THRESHOLD, 40, endpoint=False)
        frame = TheoryService.rate_landscape(deltas, np.linspace(0.0, 0.999, 40))
        assert (frame["rho2"] < 1.0).all()

    def test_landscape(self):
        frame = TheoryService.rate_landscape([0.0, 0.1, 0.3], [0.0, 0.3, 0.6])
        assert len(frame) == 9
        assert (frame["rho1"] < 1.0).all()
        assert frame.loc[(frame.delta == 0.0) & (frame.gamma == 0.3), "rho1"].iloc[0] == pytest.approx(0.3)


class TestHypotheses:
    def test_sgs_pair_satisfies_all(self, poisson8, poisson_pair):
        spectral = TheoryService.spectral_report(poisson8, poisson_pair)
        hyp = TheoryService.check_hypotheses(poisson8, poisson_pair, spectral)
        assert hyp.ra_strict and hyp.rs_dominates_s_bar and hyp.rs_dominates_s
        assert 0.0 < spectral.delta < 1.0
        assert spectral.gamma_bar < 1.0

    def test_broken_pair(self, stokes8):
        pair = broken_pair(stokes8)
        spectral = TheoryService.spectral_report(stokes8, pair)
        hyp = TheoryService.check_hypotheses(stokes8, pair, spectral)
        assert not hyp.rs_dominates_s_bar
        bundle = TheoryService.rate_bundle(spectral, hyp)
        assert not bundle.rho1.valid
        assert not bundle.rho2.valid

    def test_exact_pair_is_delta_zero(self, stokes8, stokes_exact_pair):
        spectral = TheoryService.spectral_report(stokes8, stokes_exact_pair)
        assert spectral.delta == pytest.approx(0.0, abs=1e-10)
        assert spectral.gamma == pytest.approx(0.0, abs=1e-10)
        assert TheoryService.check_hypotheses(stokes8, stokes_exact_pair, spectral).a_part_ok


class TestErrorOperators:
    @pytest.mark.parametrize("method", [Method.bwy, Method.sium, Method.ium])
    def test_matches_iteration(self, poisson8, poisson_pair, method):
        assert TheoryService.cross_validate_error_operator(method, poisson8, poisson_pair) < 1e-10

    def test_spectral_radius_below_rate(self, random_sys, random_pair):
        spectral = TheoryService.spectral_report(random_sys, random_pair)
        rates = TheoryService.rate_bundle(spectral, TheoryService.check_hypotheses(random_sys, random_pair, spectral))
        E = TheoryService.assemble_error_operator(Method.bwy, random_sys, random_pair)
        assert LinalgService.spectral_radius(E) <= rates.rho1.value + 1e-10

    def test_printed_second_argument_is_not_a_bound(self, stokes8):
        """
        R_A = A^{-1}/2 gives delta = 1/2 and rho(E_sium) = 1/2 for any Schur
        scaling. rho2 built from the printed second argument stays near 0.39.
        """
        r_a = OperatorService.exact_inverse(stokes8.A, 0.5)
        pair = OperatorService.make_pair(stokes8, r_a, OperatorService.exact_inverse, "S_bar")
        spectral = TheoryService.spectral_report(stokes8, pair)
        rates = TheoryService.rate_bundle(spectral, TheoryService.check_hypotheses(stokes8, pair, spectral))
        assert spectral.delta == pytest.approx(0.5, abs=1e-8)
        assert spectral.gamma_bar < 0.01

        rho_e = LinalgService.spectral_radius(TheoryService.assemble_error_operator(Method.sium, stokes8, pair))
        assert rho_e == pytest.approx(0.5, abs=1e-6)
        d = spectral.delta ** 2 - spectral.gamma_bar
        first = abs(d - math.sqrt(d * d + 4.0 * spectral.delta ** 2)) / 2.0
        assert max(first, rates.rho2_second_as_printed) < rho_e - 0.05
        assert rates.rho2.valid
        assert rho_e <= rates.rho2.value

    def test_scaled_blocks_factor(self, poisson8, poisson_pair):
        """F = M T M holds for both variants."""
        for assemble in (TheoryService.assemble_F_T, TheoryService.assemble_F_T_bar):
            blocks = assemble(poisson8, poisson_pair)
            np.testing.assert_allclose(blocks.M @ blocks.T @ blocks.M, blocks.F, atol=1e-8)

    def test_delta_zero(self, stokes8, stokes_exact_pair):
        with pytest.raises(DeltaZero) as exc:
            TheoryService.assemble_F_T(stokes8, stokes_exact_pair)
        assert exc.value.blocks is not None
        assert np.allclose(exc.value.blocks.F, 0.0, atol=1e-8)


class TestCertificates:
    @pytest.mark.parametrize("method", [Method.bwy, Method.sium])
    def test_chain_holds(self, stokes8, stokes_pair, method):
        report = TheoryService.verify_chain(stokes8, stokes_pair, method)
        assert report.chain_ok
        assert report.rho_E_up <= report.norm_E_D + 1e-9
        assert report.rho_T < 1.0

    def test_chain_exact_pair(self, stokes8, stokes_exact_pair):
        report = TheoryService.verify_chain(stokes8, stokes_exact_pair)
        assert report.chain_ok
        assert report.delta_zero
        assert report.rho_E_up == pytest.approx(0.0, abs=1e-6)

    def test_chain_refuses_ium(self, poisson8, poisson_pair):
        with pytest.raises(ValueError):
            TheoryService.verify_chain(poisson8, poisson_pair, Method.ium)

    def test_chain_needs_hypotheses(self, stokes8):
        with pytest.raises(HypothesisViolated) as exc:
            TheoryService.verify_chain(stokes8, broken_pair(stokes8))
        assert HYP_RS_S_BAR in exc.value.failed

    @pytest.mark.parametrize("sys_name,pair_name", [
        ("poisson8", "poisson_pair"),
        ("stokes8", "stokes_pair"),
        ("random_sys", "random_pair"),
    ])
    def test_suite_passes(self, request, sys_name, pair_name):
        sys = request.getfixturevalue(sys_name)
        pair = request.getfixturevalue(pair_name)
        suite = TheoryService.verify_loewner_suite(sys, pair)
        assert suite.all_ok, suite.failures
        assert suite["U_norm"].holds

    def test_suite_flags_broken_pair(self, stokes8):
        suite = TheoryService.verify_loewner_suite(stokes8, broken_pair(stokes8))
        assert "hyp_R_S_inv_ge_S_bar" in suite.failures
        assert not suite.all_ok


class TestFieldOfValues:
    def test_exact_constants(self, stokes8, stokes_exact_pair):
        fov = TheoryService.fov_constants(stokes8, stokes_exact_pair)
        assert fov.gamma_fov == pytest.approx(1.0, abs=1e-9)
        assert fov.Gamma_fov == pytest.approx(2.0, abs=1e-9)
        assert fov.sandwich_ok

    @pytest.mark.parametrize("sys_name,pair_name", [("stokes8", "stokes_pair"), ("poisson8", "poisson_pair")])
    def test_sandwich(self, request, sys_name, pair_name):
        fov = TheoryService.fov_constants(request.getfixturevalue(sys_name), request.getfixturevalue(pair_name))
        assert 0.0 < fov.gamma_fov <= fov.empirical_min + 1e-8
        assert fov.empirical_max <= fov.Gamma_fov + 1e-8
        assert fov.sandwich_ok
        assert math.isfinite(fov.empirical_max_ldu)


class TestAcceptanceGrid:
    """Desk-scale sweeps over the rate formulas and seeded random systems."""

    def test_landscape_below_one(self):
        deltas = np.linspace(0.0, 0.6, 50)
        gammas = np.linspace(0.0, 0.99, 50)
        frame = TheoryService.rate_landscape(deltas, gammas)
        assert (frame["rho1"] < 1.0).all()
        edge = frame[frame.delta == 0.0]
        np.testing.assert_allclose(edge["rho1"], edge["gamma"], atol=1e-12)
        np.testing.assert_allclose(edge["rho2"], edge["gamma"], atol=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_systems(self, seed):
        sys = ProblemService.make_random_saddle(30 + 10 * seed, 10 + 3 * seed, seed=seed, c_mode="diag")
        pair = sgs_pair(sys)
        spectral = TheoryService.spectral_report(sys, pair)
        hyp = TheoryService.check_hypotheses(sys, pair, spectral)
        rates = TheoryService.rate_bundle(spectral, hyp)
        assert rates.rho1.valid
        assert TheoryService.verify_chain(sys, pair, Method.bwy, spectral, hyp).chain_ok
        rhs = ProblemService.make_rhs(sys, seed)
        assert rates.rho2.valid
        for method, step_pair, bound in (
            ("bwy", pair, rates.rho1.value),
            ("sium", pair, rates.rho2.value),
            ("ium", pair.symmetrized(), rates.rho2.value),
        ):
            history = IterationService.run_iteration(method, sys, step_pair, rhs, k_max=200, bound_rate=bound)
            assert IterationService.count_bound_violations(history) == 0, method
            observed = IterationService.observed_rate(history, truncate_at_floor=True)
            assert math.isnan(observed) or observed <= bound + RATE_SLACK, method

    def test_prior_bound_useless_on_instance(self, random_sys):
        """
        R_S = S_bar^{-1} / 2 fixes gamma_bar = 1/2 and puts gamma in [1/2, 1),
        so max{delta, 2 gamma / (1 - gamma)} >= 2 while rho1 still certifies.
        """
        r_a = OperatorService.sym_gauss_seidel(random_sys.A, 0.95)
        pair = OperatorService.make_pair(random_sys, r_a, lambda T: OperatorService.exact_inverse(T, 0.5), "none")
        spectral = TheoryService.spectral_report(random_sys, pair)
        rates = TheoryService.rate_bundle(spectral, TheoryService.check_hypotheses(random_sys, pair, spectral))
        assert spectral.gamma_bar == pytest.approx(0.5, abs=1e-8)
        assert 1.0 / 3.0 < spectral.gamma < 1.0

        prior = TheoryService.prior_rates(spectral.delta, spectral.gamma)["bwy1990_rate"]
        assert prior >= 2.0 - 1e-8
        assert rates.prior_bwy1990.value == pytest.approx(prior)
        assert not rates.prior_bwy1990.valid
        assert rates.rho1.valid
        assert rates.rho1.value < 1.0

        E = TheoryService.assemble_error_operator(Method.bwy, random_sys, pair)
        assert LinalgService.spectral_radius(E) <= rates.rho1.value + 1e-10
        history = IterationService.run_iteration(
            "bwy", random_sys, pair, ProblemService.make_rhs(random_sys, 0), k_max=300, bound_rate=rates.rho1.value
        )
        assert IterationService.count_bound_violations(history) == 0
        observed = IterationService.observed_rate(history, truncate_at_floor=True)
        assert observed < 1.0
        assert observed <= rates.rho1.value + RATE_SLACK


class TestNearSingularA:
    """Half-rank Gram part: n - n//2 eigenvalues of A sit at the small shift."""

    @pytest.fixture(scope="class")
    def sys(self):
        return ProblemService.make_random_saddle(30, 10, seed=3, c_mode="diag", a_mode="near_singular")

    def test_scaled_exact_solver_certifies(self, sys):
        """R_A = 0.9 A^{-1} keeps delta = 0.1 however badly A is conditioned."""
        pair = OperatorService.make_pair(
            sys, OperatorService.exact_inverse(sys.A, 0.9), OperatorService.exact_inverse, "S_bar"
        )
        spectral = TheoryService.spectral_report(sys, pair)
        hyp = TheoryService.check_hypotheses(sys, pair, spectral)
        rates = TheoryService.rate_bundle(spectral, hyp)
        assert spectral.delta == pytest.approx(0.1, abs=1e-6)
        assert hyp.ra_strict
        assert rates.rho1.valid
        history = IterationService.run_iteration(
            "bwy", sys, pair, ProblemService.make_rhs(sys, 1), k_max=5, stop_tol=0.0, bound_rate=rates.rho1.value
        )
        assert history.n_steps == 5
        assert IterationService.count_bound_violations(history) == 0

    def test_gauss_seidel_is_not_certified(self, sys):
        """SGS barely touches the near-kernel of A, so delta is close to 1 and no rate applies."""
        pair = sgs_pair(sys)
        spectral = TheoryService.spectral_report(sys, pair)
        rates = TheoryService.rate_bundle(spectral, TheoryService.check_hypotheses(sys, pair, spectral))
        assert spectral.delta > GOLDEN_THRESHOLD
        assert not rates.rho1.valid
        assert not rates.rho2.valid
