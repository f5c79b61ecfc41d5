"""
Tests for the stationary iterations and their error envelopes.
"""
import math

import numpy as np
import pytest

from saddlecert.config import RATE_SLACK
from saddlecert.exceptions import DimensionMismatch, NotSymmetrized, TooShort
from saddlecert.models.iteration import ConvergenceHistory, IterateState, Method, StepRecord
from saddlecert.services.iterations import IterationService
from saddlecert.services.operators import OperatorService
from saddlecert.services.problems import ProblemService
from saddlecert.services.theory import TheoryService


def record(k: int, combined_sq: float, bound_sq=None) -> StepRecord:
    return StepRecord(
        k=k,
        err_u_ra=0.0,
        err_u_ra_bar=0.0,
        err_p_rs=0.0,
        combined_sq=combined_sq,
        residual_u=0.0,
        residual_p=0.0,
        bound_sq=bound_sq,
    )


def history_from(errors, bounds=None) -> ConvergenceHistory:
    bounds = bounds or [None] * len(errors)
    steps = [record(k, e ** 2, b) for k, (e, b) in enumerate(zip(errors, bounds))]
    return ConvergenceHistory(method=Method.bwy, steps=steps, reference_sq=errors[0] ** 2, start_sq=errors[0] ** 2)


class TestExactSolvers:
    """R_A = A^{-1}, R_S = S_A^{-1}."""

    @pytest.mark.parametrize("method", ["bwy", "sium"])
    def test_one_step_stokes(self, stokes8, stokes_exact_pair, method):
        rhs = ProblemService.make_rhs(stokes8, 1)
        history = IterationService.run_iteration(method, stokes8, stokes_exact_pair, rhs, k_max=1)
        assert history.n_steps == 1
        assert history.steps[1].combined_sq <= (1e-10) ** 2 * history.start_sq

    @pytest.mark.parametrize("method", ["bwy", "sium"])
    def test_one_step_poisson(self, poisson8, poisson_exact_pair, method):
        rhs = ProblemService.make_rhs(poisson8, 2)
        history = IterationService.run_iteration(method, poisson8, poisson_exact_pair, rhs, k_max=1)
        assert history.steps[1].combined_sq <= (1e-10) ** 2 * history.start_sq

    def test_uzawa_two_steps(self, stokes8, stokes_exact_pair):
        """The first u-update uses p^0, so exact inexact Uzawa needs a second step."""
        rhs = ProblemService.make_rhs(stokes8, 1)
        history = IterationService.run_iteration("ium", stokes8, stokes_exact_pair.symmetrized(), rhs, k_max=2)
        assert history.steps[1].combined_sq > (1e-6) ** 2 * history.start_sq
        assert history.steps[-1].combined_sq <= (1e-10) ** 2 * history.start_sq


class TestSteps:
    def test_ium_needs_symmetrized_pair(self, poisson8, poisson_pair):
        rhs = ProblemService.make_rhs(poisson8, 0)
        state = IterateState(u=np.zeros(poisson8.n), p=np.zeros(poisson8.m))
        with pytest.raises(NotSymmetrized):
            IterationService.ium_step(poisson8, poisson_pair, rhs, state)
        with pytest.raises(NotSymmetrized):
            IterationService.run_iteration("ium", poisson8, poisson_pair, rhs)

    def test_state_dimension_check(self, poisson8, poisson_pair):
        rhs = ProblemService.make_rhs(poisson8, 0)
        state = IterateState(u=np.zeros(3), p=np.zeros(poisson8.m))
        with pytest.raises(DimensionMismatch):
            IterationService.bwy_step(poisson8, poisson_pair, rhs, state)

    def test_sium_continues_from_half_step(self, poisson8, poisson_pair):
        """BWY and SIUM share the half step and pressure update but differ in the last u-update."""
        rhs = ProblemService.make_rhs(poisson8, 4)
        state = IterateState(u=np.zeros(poisson8.n), p=np.zeros(poisson8.m))
        bwy = IterationService.bwy_step(poisson8, poisson_pair, rhs, state)
        sium = IterationService.sium_step(poisson8, poisson_pair, rhs, state)
        np.testing.assert_allclose(bwy.p, sium.p)
        assert not np.allclose(bwy.u, sium.u)
        assert bwy.k == sium.k == 1

    def test_fixed_point(self, random_sys, random_pair):
        """The exact solution is a fixed point of every scheme."""
        rhs = ProblemService.make_rhs(random_sys, 5)
        u, p = ProblemService.exact_solve(random_sys, rhs)
        state = IterateState(u=u, p=p)
        for method in (Method.bwy, Method.sium, Method.ium):
            pair = random_pair.symmetrized() if method is Method.ium else random_pair
            nxt = IterationService.step(method, random_sys, pair, rhs, state)
            np.testing.assert_allclose(nxt.stacked, state.stacked, atol=1e-9 * np.linalg.norm(state.stacked))


class TestEnvelopes:
    """Squared errors stay below 9 rho^(2k) (36 rho2^(2(k-1)) for ium) times the reference."""

    @pytest.mark.parametrize("sys_name,pair_name", [
        ("poisson8", "poisson_pair"),
        ("stokes8", "stokes_pair"),
        ("random_sys", "random_pair"),
    ])
    def test_bwy_zero_violations(self, request, sys_name, pair_name):
        sys = request.getfixturevalue(sys_name)
        pair = request.getfixturevalue(pair_name)
        rates = TheoryService.rate_bundle(
            TheoryService.spectral_report(sys, pair), TheoryService.check_hypotheses(sys, pair)
        )
        assert rates.rho1.valid
        rhs = ProblemService.make_rhs(sys, 0)
        history = IterationService.run_iteration("bwy", sys, pair, rhs, k_max=200, bound_rate=rates.rho1.value)
        assert IterationService.count_bound_violations(history) == 0
        observed = IterationService.observed_rate(history, truncate_at_floor=True)
        assert math.isnan(observed) or observed <= rates.rho1.value + RATE_SLACK

    @pytest.mark.parametrize("method", ["sium", "ium"])
    def test_symmetrized_zero_violations(self, stokes8, stokes_pair, method):
        rates = TheoryService.rate_bundle(
            TheoryService.spectral_report(stokes8, stokes_pair),
            TheoryService.check_hypotheses(stokes8, stokes_pair),
        )
        assert rates.rho2.valid
        rhs = ProblemService.make_rhs(stokes8, 0)
        pair = stokes_pair.symmetrized() if method == "ium" else stokes_pair
        history = IterationService.run_iteration(method, stokes8, pair, rhs, k_max=200, bound_rate=rates.rho2.value)
        assert IterationService.count_bound_violations(history) == 0
        if method == "ium":
            assert history.half_step_sq is not None
            assert history.reference_sq == history.half_step_sq
            assert history.steps[0].bound_sq is None
            assert history.bound_factor == 36.0
        else:
            assert history.bound_factor == 9.0

    def test_ium_envelope_lags_one_index(self, stokes8):
        """
        Near-exact solvers: the first step still carries R_bar_A B^T (p - p^0),
        so only the envelope shifted by one index holds.
        """
        r_a = OperatorService.exact_inverse(stokes8.A, 0.999)
        pair = OperatorService.make_pair(stokes8, r_a, OperatorService.exact_inverse, "S_bar")
        rates = TheoryService.rate_bundle(
            TheoryService.spectral_report(stokes8, pair), TheoryService.check_hypotheses(stokes8, pair)
        )
        assert rates.rho2.valid
        assert rates.rho2.value < 0.01
        rhs = ProblemService.make_rhs(stokes8, 0)
        history = IterationService.run_iteration(
            "ium", stokes8, pair.symmetrized(), rhs, k_max=50, bound_rate=rates.rho2.value
        )
        assert IterationService.count_bound_violations(history) == 0
        assert history.steps[1].combined_sq > 36.0 * rates.rho2.value ** 2 * history.reference_sq
        assert IterationService.count_bound_violations(history, unshifted=True) >= 1

    def test_unshifted_without_rate(self, poisson8, poisson_pair):
        rhs = ProblemService.make_rhs(poisson8, 0)
        history = IterationService.run_iteration("ium", poisson8, poisson_pair.symmetrized(), rhs, k_max=5)
        assert IterationService.count_bound_violations(history, unshifted=True) == 0

    def test_stops_at_tolerance(self, poisson8, poisson_pair):
        rhs = ProblemService.make_rhs(poisson8, 0)
        history = IterationService.run_iteration("bwy", poisson8, poisson_pair, rhs, k_max=500, stop_tol=1e-6)
        assert history.steps[-1].combined_sq <= 1e-12 * history.start_sq
        assert history.steps[-2].combined_sq > 1e-12 * history.start_sq

    def test_history_frame(self, poisson8, poisson_pair):
        rhs = ProblemService.make_rhs(poisson8, 0)
        history = IterationService.run_iteration("sium", poisson8, poisson_pair, rhs, k_max=5)
        frame = history.to_frame()
        assert len(frame) == 6
        assert (frame["method"] == "sium").all()


class TestDiagnostics:
    def test_violation_counted(self):
        history = history_from([1.0, 0.9, 0.5], bounds=[9.0, 0.25, 1.0])
        assert IterationService.count_bound_violations(history) == 1

    def test_observed_rate_geometric(self):
        errors = [0.5 ** k for k in range(15)]
        assert IterationService.observed_rate(history_from(errors), tail_window=10) == pytest.approx(0.5)

    def test_observed_rate_too_short(self):
        with pytest.raises(TooShort):
            IterationService.observed_rate(history_from([1.0, 0.5, 0.25]), tail_window=10)

    def test_observed_rate_window(self):
        with pytest.raises(ValueError):
            IterationService.observed_rate(history_from([1.0] * 20), tail_window=1)

    def test_observed_rate_at_floor(self):
        """Errors already at roundoff give NaN unless truncated."""
        errors = [1.0] + [0.1 ** k for k in range(1, 8)] + [1e-15] * 8
        history = history_from(errors)
        assert math.isnan(IterationService.observed_rate(history, tail_window=5))
        truncated = IterationService.observed_rate(history, tail_window=5, truncate_at_floor=True)
        assert truncated == pytest.approx(0.1)
