"""
Experiment pipeline: config parsing, problem and pair construction, and the
certify-then-run loop that produces result rows.
"""
import difflib
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from saddlecert.config import DEFAULT_SGS_DAMPING, MAX_DENSE_DIM, RATE_SLACK
from saddlecert.exceptions import (
    BadConstants,
    BadDims,
    BadValue,
    ConfigError,
    ConfigIssue,
    ExperimentError,
    HypothesisViolated,
    MissingRequired,
    SaddleCertError,
    SpectrumAssumptionViolated,
    UnknownKey,
)
from saddlecert.models.config import (
    ExperimentConfig,
    ITERATION_METHODS,
    ProblemKind,
    ProblemSection,
    RunSection,
    SmootherSection,
)
from saddlecert.models.experiment import ExperimentOutcome, ResultRow
from saddlecert.models.iteration import Method
from saddlecert.models.operators import ApproxInverse, PreconPair
from saddlecert.models.reports import (
    FovConstants,
    LoewnerSuite,
    RateBundle,
    SpectralReport,
    VerificationReport,
)
from saddlecert.models.saddle import RhsPair, SaddleSystem
from saddlecert.services.iterations import IterationService
from saddlecert.services.krylov import KrylovService
from saddlecert.services.operators import OperatorService
from saddlecert.services.problems import ProblemService
from saddlecert.services.theory import (
    HYP_RA_STRICT,
    HYP_RA_WEAK,
    HYP_RS_S,
    HYP_RS_S_BAR,
    TheoryService,
)

logger = logging.getLogger(__name__)

SECTIONS: Dict[str, type] = {
    "problem": ProblemSection,
    "smoothers": SmootherSection,
    "run": RunSection,
}

_SECTION_RE = re.compile(r"^\[\s*([^\]]*?)\s*\]$")
_GRID_RE = re.compile(r"^\s*(delta|gamma)\s*=\s*([^:]+):([^:]+):(\d+)\s*$")

KRYLOV_MODES = {
    "gmres_G": "left_G_in_LDU_norm",
    "gmres_split": "split_LH_left_Uinv_right_in_D_norm",
}

# which chain certificate backs the bound of each method
_CHAIN_FOR = {"bwy": "bwy", "sium": "sium", "ium": "sium", "gmres_G": "bwy", "gmres_split": "bwy"}


def _suggest(word: str, options: Sequence[str]) -> Optional[str]:
    matches = difflib.get_close_matches(word, list(options), n=1, cutoff=0.6)
    return matches[0] if matches else None


def _clean_message(msg: str) -> str:
    return msg[len("Value error, "):] if msg.startswith("Value error, ") else msg


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class _Cell(BaseModel):
    """Shared certificates handed to every method of one run."""
    fingerprint: str
    label: str
    pair_label: str
    n: int
    m: int
    spectral: SpectralReport
    rates: RateBundle
    suite: LoewnerSuite
    chains: Dict[str, VerificationReport]
    chain_status: Dict[str, str]
    fov: Optional[FovConstants] = None
    elman: Optional[float] = None


class ExperimentService:
    """Turns an experiment config into certificates and result rows."""

    # ---- configuration ----------------------------------------------------------

    @staticmethod
    def parse_config(text: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
        """
        Parse ``[section]`` / ``key = value`` text into a validated config.

        Every problem found is collected; a ConfigError carrying all of them
        is raised at the end. ``overrides`` are ``section.key=value`` strings
        applied on top of the file.
        """
        issues: List[ConfigIssue] = []
        raw: Dict[str, Dict[str, str]] = {name: {} for name in SECTIONS}
        key_lines: Dict[Tuple[str, str], Optional[int]] = {}
        section_lines: Dict[str, int] = {}
        current: Optional[str] = None
        skipping = False

        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].split(";", 1)[0].strip()
            if not stripped:
                continue
            header = _SECTION_RE.match(stripped)
            if header:
                name = header.group(1)
                if name not in SECTIONS:
                    issues.append(UnknownKey(lineno, f"[{name}]", "unknown section", _suggest(name, SECTIONS)))
                    current, skipping = None, True
                else:
                    current, skipping = name, False
                    section_lines.setdefault(name, lineno)
                continue
            if skipping:
                continue
            if "=" not in stripped:
                issues.append(BadValue(lineno, stripped, "expected 'key = value'"))
                continue
            key, value = (part.strip() for part in stripped.split("=", 1))
            if current is None:
                issues.append(BadValue(lineno, key, "key appears before any [section]"))
                continue
            fields = SECTIONS[current].model_fields
            if key not in fields:
                issues.append(UnknownKey(lineno, key, f"not a key of [{current}]", _suggest(key, fields)))
                continue
            if key in raw[current]:
                issues.append(BadValue(lineno, key, f"repeated (first set on line {key_lines[(current, key)]})"))
                continue
            raw[current][key] = value
            key_lines[(current, key)] = lineno

        for item in overrides:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                issues.append(BadValue(None, item, "override must look like section.key=value"))
                continue
            dotted, value = (part.strip() for part in item.split("=", 1))
            section, key = dotted.split(".", 1)
            if section not in SECTIONS:
                issues.append(UnknownKey(None, dotted, "unknown section", _suggest(section, SECTIONS)))
                continue
            if key not in SECTIONS[section].model_fields:
                issues.append(
                    UnknownKey(None, dotted, f"not a key of [{section}]", _suggest(key, SECTIONS[section].model_fields))
                )
                continue
            raw[section][key] = value
            key_lines[(section, key)] = None

        validated = {}
        for name, model in SECTIONS.items():
            try:
                validated[name] = model.model_validate(raw[name])
            except ValidationError as exc:
                for err in exc.errors():
                    key = str(err["loc"][0]) if err["loc"] else None
                    label = f"{name}.{key}" if key else f"[{name}]"
                    line = key_lines.get((name, key), section_lines.get(name))
                    if err["type"] == "missing":
                        issues.append(MissingRequired(section_lines.get(name), label, "required"))
                    else:
                        issues.append(BadValue(line, label, _clean_message(err["msg"])))

        if issues:
            for issue in issues:
                logger.debug(str(issue))
            raise ConfigError(issues)
        return ExperimentConfig(**validated)

    @staticmethod
    def load_config(path: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
        return ExperimentService.parse_config(Path(path).read_text(), overrides)

    # ---- construction -----------------------------------------------------------

    @staticmethod
    def build_system(problem: ProblemSection) -> SaddleSystem:
        if problem.problem is ProblemKind.random:
            size = problem.n + problem.m
        else:
            g = problem.grid_n
            size = 2 * (g - 1) * g + g * g - 1
        if size > MAX_DENSE_DIM:
            raise BadDims(f"{problem.problem.value} would have {size} unknowns, dense limit is {MAX_DENSE_DIM}")

        if problem.problem is ProblemKind.mac_stokes:
            sys = ProblemService.make_mac_stokes(problem.grid_n, problem.viscosity)
        elif problem.problem is ProblemKind.mixed_poisson:
            sys = ProblemService.make_mixed_poisson(problem.grid_n, problem.c_weight)
        else:
            sys = ProblemService.make_random_saddle(
                problem.n, problem.m, problem.seed, problem.c_mode, problem.a_mode
            )
        return sys

    @staticmethod
    def build_pair(smoothers: SmootherSection, sys: SaddleSystem) -> PreconPair:
        """R_A from ``smoother_a``; R_S built on the rescale target and rescaled to dominate it."""
        spec_a, spec_s = smoothers.smoother_a, smoothers.smoother_s

        if spec_a.kind == "exact":
            r_a = OperatorService.exact_inverse(sys.A, spec_a.param or 1.0)
        elif spec_a.kind == "jacobi":
            r_a = OperatorService.scaled_jacobi(sys.A, spec_a.param or 1.0)
        elif spec_a.kind == "sgs":
            r_a = OperatorService.sym_gauss_seidel(sys.A, spec_a.param or DEFAULT_SGS_DAMPING)
        else:
            smooths = int(spec_a.param) if spec_a.param is not None else 1
            r_a = OperatorService.two_grid_vcycle(sys.A, sys.grid, smooths)

        builder: Callable[[np.ndarray], ApproxInverse]
        if spec_s.kind == "exact":
            builder = lambda target: OperatorService.exact_inverse(sys.schur, spec_s.param or 1.0)
        elif spec_s.kind == "jacobi":
            builder = lambda target: OperatorService.scaled_jacobi(target, spec_s.param or 1.0)
        elif spec_s.kind == "deflated_jacobi":
            builder = lambda target: OperatorService.deflated_jacobi(target, spec_s.param or 1.0)
        else:
            builder = lambda target: OperatorService.sym_gauss_seidel(target, spec_s.param or DEFAULT_SGS_DAMPING)

        return OperatorService.make_pair(sys, r_a, builder, smoothers.rescale_target, smoothers.margin)

    # ---- pipeline ---------------------------------------------------------------

    @staticmethod
    def certify(config: ExperimentConfig, sys: SaddleSystem, pair: PreconPair) -> _Cell:
        """Spectral report, rate bundle, inequality suite, chains and FOV constants."""
        spectral = TheoryService.spectral_report(sys, pair)
        hypotheses = TheoryService.check_hypotheses(sys, pair, spectral)
        rates = TheoryService.rate_bundle(spectral, hypotheses)
        suite = TheoryService.verify_loewner_suite(sys, pair, spectral, hypotheses)

        chains: Dict[str, VerificationReport] = {}
        status: Dict[str, str] = {}
        for method in (Method.bwy, Method.sium):
            try:
                report = TheoryService.verify_chain(sys, pair, method, spectral, hypotheses)
            except HypothesisViolated as exc:
                status[method.value] = f"not_applicable ({'; '.join(exc.failed)})"
                continue
            chains[method.value] = report
            status[method.value] = "ok" if report.chain_ok else "failed"

        fov, elman = None, None
        try:
            fov = TheoryService.fov_constants(sys, pair, spectral)
            elman = KrylovService.elman_bound(fov.gamma_fov, fov.Gamma_fov)
        except (SpectrumAssumptionViolated, BadConstants) as exc:
            logger.info(f"{sys.label}: field-of-values constants unavailable: {exc}")

        return _Cell(
            fingerprint=config.fingerprint,
            label=sys.label,
            pair_label=pair.label,
            n=sys.n,
            m=sys.m,
            spectral=spectral,
            rates=rates,
            suite=suite,
            chains=chains,
            chain_status=status,
            fov=fov,
            elman=elman,
        )

    @staticmethod
    def _base_row(cell: _Cell, method: str) -> Dict[str, object]:
        sp, rates = cell.spectral, cell.rates
        chain_key = _CHAIN_FOR.get(method, "bwy")
        chain = cell.chains.get(chain_key)
        row = {
            "fingerprint": cell.fingerprint,
            "problem": cell.label,
            "pair": cell.pair_label,
            "method": method,
            "n": cell.n,
            "m": cell.m,
            "delta": sp.delta,
            "gamma": sp.gamma,
            "gamma_bar": sp.gamma_bar,
            "alpha_lo": sp.alpha_lo,
            "alpha_hi": sp.alpha_hi,
            "kappa_lo": sp.kappa_lo,
            "kappa_hi": sp.kappa_hi,
            "rho1": rates.rho1.value,
            "rho1_valid": rates.rho1.valid,
            "rho1_tilde": rates.rho1_tilde.value,
            "rho1_tilde_valid": rates.rho1_tilde.valid,
            "rho2": rates.rho2.value,
            "rho2_valid": rates.rho2.valid,
            "rho2_tilde": rates.rho2_tilde.value,
            "rho2_tilde_valid": rates.rho2_tilde.valid,
            "rho2_second_as_printed": rates.rho2_second_as_printed,
            "prior_bwy1990": _finite(rates.prior_bwy1990.value),
            "ts_convergent": rates.ts_convergent,
            "ts_rate_delta": rates.ts_rate_delta,
            "hyp_ra_strict": rates.rho1.assumptions.get(HYP_RA_STRICT, False),
            "hyp_ra_weak": rates.rho1_tilde.assumptions.get(HYP_RA_WEAK, False),
            "hyp_rs_s_bar": rates.rho1.assumptions.get(HYP_RS_S_BAR, False),
            "hyp_rs_s": rates.rho1_tilde.assumptions.get(HYP_RS_S, False),
            "chain_status": cell.chain_status.get(chain_key, "not_run"),
            "chain_worst_gap": min(chain.gaps.values()) if chain else None,
            "loewner_pass": cell.suite.pass_count,
            "loewner_total": len(cell.suite.checks),
            "loewner_failures": ";".join(cell.suite.failures),
            "elman_bound": cell.elman,
        }
        if cell.fov is not None:
            row.update(
                {
                    "gamma_fov": cell.fov.gamma_fov,
                    "Gamma_fov": cell.fov.Gamma_fov,
                    "fov_empirical_min": min(cell.fov.empirical_min, cell.fov.empirical_min_ldu),
                    "fov_empirical_max": max(cell.fov.empirical_max, cell.fov.empirical_max_ldu),
                    "fov_sandwich_ok": cell.fov.sandwich_ok,
                }
            )
        return row

    @staticmethod
    def _shared_ok(cell: _Cell, method: str) -> Tuple[bool, List[str]]:
        notes = []
        ok = cell.suite.all_ok
        if not ok:
            notes.append(f"inequality checks failed: {', '.join(cell.suite.failures)}")
        status = cell.chain_status.get(_CHAIN_FOR.get(method, "bwy"), "not_run")
        if status == "failed":
            ok = False
            notes.append("chain certificate failed")
        elif status.startswith("not_applicable"):
            notes.append(f"chain {status}")
        if cell.fov is not None and not cell.fov.sandwich_ok:
            ok = False
            notes.append("field-of-values sandwich failed")
        return ok, notes

    @staticmethod
    def run_method(
        method: str,
        config: ExperimentConfig,
        sys: SaddleSystem,
        pair: PreconPair,
        rhs: RhsPair,
        cell: _Cell,
    ) -> Tuple[ResultRow, object]:
        """One (problem, pair, method) cell; returns the row and the raw history."""
        run = config.run
        row = ExperimentService._base_row(cell, method)
        ok, notes = ExperimentService._shared_ok(cell, method)

        if method in ITERATION_METHODS:
            bound = cell.rates.rho1 if method == "bwy" else cell.rates.rho2
            bound_rate = bound.value if bound.valid else None
            if bound_rate is None:
                notes.append(f"{bound.name} does not certify this pair")
            step_pair = pair.symmetrized() if method == "ium" else pair
            history = IterationService.run_iteration(
                Method(method), sys, step_pair, rhs, k_max=run.k_max, stop_tol=run.tol, bound_rate=bound_rate
            )
            violations = IterationService.count_bound_violations(history) if bound_rate is not None else None
            observed = IterationService.observed_rate(history, run.rate_window, truncate_at_floor=True)
            final_ratio = math.sqrt(history.steps[-1].combined_sq / history.start_sq) if history.start_sq else 0.0
            if history.n_steps <= 1 and final_ratio <= run.tol:
                notes.append("one-step solve")
            if violations:
                ok = False
                notes.append(f"{violations} steps above the error envelope")
            if method == "ium" and bound_rate is not None:
                unshifted = IterationService.count_bound_violations(history, unshifted=True)
                if unshifted:
                    notes.append(f"{unshifted} steps above the unshifted 36 rho2^(2k) envelope (diagnostic)")
            if bound_rate is not None and math.isfinite(observed) and observed > bound_rate + RATE_SLACK:
                ok = False
                notes.append(f"observed rate {observed:.4f} exceeds bound {bound_rate:.4f}")
            half_ratio = None
            if history.half_step_sq is not None and history.start_sq:
                half_ratio = math.sqrt(history.half_step_sq / history.start_sq)
            row.update(
                {
                    "bound_rate": bound_rate,
                    "observed_rate": _finite(observed),
                    "steps": history.n_steps,
                    "final_error_ratio": final_ratio,
                    "bound_violations": violations,
                    "half_step_ratio": half_ratio,
                }
            )
            raw = history
        else:
            k_hist, _ = KrylovService.solve_preconditioned(
                sys, pair, rhs, KRYLOV_MODES[method], tol=run.gmres_tol, max_iter=run.gmres_max_iter
            )
            if not k_hist.converged:
                ok = False
                notes.append(f"no convergence in {run.gmres_max_iter} iterations")
            if cell.elman is not None and k_hist.contraction > cell.elman + RATE_SLACK:
                ok = False
                notes.append(f"contraction {k_hist.contraction:.4f} exceeds {cell.elman:.4f}")
            row.update(
                {
                    "bound_rate": cell.elman,
                    "gmres_iterations": k_hist.iterations,
                    "gmres_converged": k_hist.converged,
                    "gmres_contraction": k_hist.contraction,
                }
            )
            raw = k_hist

        row["certificate_ok"] = ok
        row["notes"] = "; ".join(notes)
        return ResultRow(**row), raw

    @staticmethod
    def run_experiment(config: ExperimentConfig, certificates_only: bool = False) -> ExperimentOutcome:
        """
        Build the system and pair, certify, then run every requested method.

        Methods run on ``config.run.workers`` threads; rows come back in the
        order the methods were requested. Any module error aborts the run with
        an ExperimentError carrying the rows finished so far.
        """
        if "ium" in config.run.methods and config.smoothers.ium_smoother != "symmetrized":
            raise ExperimentError(
                "ium is defined with the symmetrized smoother R_bar_A = 2 R_A - R_A A R_A as its u-solver; "
                "a raw R_A gives no convergence guarantee. Set ium_smoother = symmetrized."
            )

        rows: List[ResultRow] = []
        try:
            sys = ExperimentService.build_system(config.problem)
            wellposed = ProblemService.check_wellposed(sys)
            if not wellposed.all_ok:
                raise ExperimentError(f"{sys.label} is not well-posed: {'; '.join(wellposed.notes)}")
            pair = ExperimentService.build_pair(config.smoothers, sys)
            logger.info(f"{config.fingerprint}: {sys.label} (n={sys.n}, m={sys.m}) with {pair.label}")

            cell = ExperimentService.certify(config, sys, pair)
            outcome = ExperimentOutcome(
                fingerprint=cell.fingerprint,
                label=sys.label,
                pair_label=pair.label,
                wellposed=wellposed,
                spectral=cell.spectral,
                rates=cell.rates,
                suite=cell.suite,
                chains=cell.chains,
                chain_status=cell.chain_status,
                fov=cell.fov,
            )

            if certificates_only:
                base = ExperimentService._base_row(cell, "certificates")
                ok, notes = ExperimentService._shared_ok(cell, "bwy")
                sium_status = cell.chain_status.get("sium", "")
                if sium_status == "failed":
                    ok = False
                    notes.append("sium chain certificate failed")
                base.update({"certificate_ok": ok, "notes": "; ".join(notes)})
                outcome.rows = [ResultRow(**base)]
                return outcome

            rhs = ProblemService.make_rhs(sys, config.run.seed)
            methods = list(config.run.methods)
            workers = min(config.run.workers, len(methods))

            def task(method: str):
                return ExperimentService.run_method(method, config, sys, pair, rhs, cell)

            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = [pool.submit(task, method) for method in methods]
                    results = []
                    for future in futures:
                        results.append(future.result())
                        rows.append(results[-1][0])
            else:
                results = []
                for method in methods:
                    results.append(task(method))
                    rows.append(results[-1][0])

            for method, (_, raw) in zip(methods, results):
                if method in ITERATION_METHODS:
                    outcome.histories[method] = raw
                else:
                    outcome.krylov[method] = raw
            outcome.rows = rows
        except ExperimentError as exc:
            exc.rows = exc.rows or rows
            raise
        except SaddleCertError as exc:
            logger.error(f"{config.fingerprint}: aborted by {type(exc).__name__}: {exc}")
            raise ExperimentError(f"{type(exc).__name__}: {exc}", rows=rows) from exc

        passed = sum(r.certificate_ok for r in rows)
        logger.info(f"{config.fingerprint}: {passed}/{len(rows)} certificates passed")
        return outcome

    @staticmethod
    def sort_rows(rows: Sequence[ResultRow]) -> List[ResultRow]:
        """Deterministic output order: by fingerprint, then by method as requested."""
        return sorted(rows, key=lambda r: r.fingerprint)

    # ---- landscape --------------------------------------------------------------

    @staticmethod
    def parse_grid(grid: str) -> Dict[str, np.ndarray]:
        """``delta=0:0.6:50,gamma=0:0.99:50`` into two linspaces."""
        axes: Dict[str, np.ndarray] = {}
        for part in grid.split(","):
            match = _GRID_RE.match(part)
            if not match:
                raise BadValue(None, part.strip(), "expected name=start:stop:count with name delta or gamma")
            name, start, stop, count = match.groups()
            try:
                axes[name] = np.linspace(float(start), float(stop), int(count))
            except ValueError as exc:
                raise BadValue(None, part.strip(), str(exc)) from exc
        missing = [name for name in ("delta", "gamma") if name not in axes]
        if missing:
            raise MissingRequired(None, "--grid", f"missing axis {', '.join(missing)}")
        return axes

    @staticmethod
    def sweep(grid: str) -> pd.DataFrame:
        """Closed-form rate landscape on the grid named by ``grid``; no matrices are built."""
        axes = ExperimentService.parse_grid(grid)
        if np.any(axes["gamma"] >= 1.0) or np.any(axes["gamma"] < 0.0):
            raise BadValue(None, "gamma", "landscape needs 0 <= gamma < 1")
        if np.any(axes["delta"] < 0.0) or np.any(axes["delta"] >= 1.0):
            raise BadValue(None, "delta", "landscape needs 0 <= delta < 1")
        frame = TheoryService.rate_landscape(axes["delta"], axes["gamma"])
        logger.info(f"landscape: {len(frame)} points, rho1 < 1 at {int((frame['rho1'] < 1.0).sum())}")
        return frame
