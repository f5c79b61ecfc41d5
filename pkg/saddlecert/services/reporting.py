"""
CSV tables and Markdown certificates from result rows.
"""
import math
from itertools import groupby
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import pandas as pd

from saddlecert.models.experiment import CSV_COLUMNS, ResultRow
from saddlecert.services.theory import (
    GOLDEN_THRESHOLD,
    HYP_RA_STRICT,
    HYP_RA_WEAK,
    HYP_RS_S,
    HYP_RS_S_BAR,
    SIUM_THRESHOLD,
)
from saddlecert.storage import init_output_dir, write_frame, write_text

ReportFormat = Literal["csv", "markdown"]

_HYP_COLUMNS = {
    HYP_RA_STRICT: "hyp_ra_strict",
    HYP_RA_WEAK: "hyp_ra_weak",
    HYP_RS_S_BAR: "hyp_rs_s_bar",
    HYP_RS_S: "hyp_rs_s",
}

# (title, method rows it bounds, rate column, hypotheses, delta threshold)
_THEOREMS: List[Tuple[str, str, str, Tuple[str, ...], Optional[float]]] = [
    ("BWY convergence", "bwy", "rho1", (HYP_RA_STRICT, HYP_RS_S_BAR), GOLDEN_THRESHOLD),
    ("BWY convergence, weak dominance", "bwy", "rho1_tilde", (HYP_RA_WEAK, HYP_RS_S), None),
    ("Symmetrized inexact Uzawa", "sium", "rho2", (HYP_RA_STRICT, HYP_RS_S_BAR), SIUM_THRESHOLD),
    ("Symmetrized inexact Uzawa, weak dominance", "sium", "rho2_tilde", (HYP_RA_WEAK, HYP_RS_S), None),
    ("Inexact Uzawa (36 ρ₂ envelope from the half step)", "ium", "rho2", (HYP_RA_STRICT, HYP_RS_S_BAR),
     SIUM_THRESHOLD),
]


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    return f"{value:.6g}"


class ReportService:
    """Writes result rows as CSV or as a Markdown certificate."""

    @staticmethod
    def rows_to_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in rows], columns=CSV_COLUMNS)

    @staticmethod
    def applicability(row: ResultRow, hypotheses: Sequence[str], valid: bool) -> str:
        failed = [h for h in hypotheses if not getattr(row, _HYP_COLUMNS[h])]
        if failed:
            return f"NOT APPLICABLE (hypothesis {', '.join(failed)} failed)"
        if not valid:
            return "NOT APPLICABLE (rate bound not below 1)"
        return "APPLICABLE"

    @staticmethod
    def _theorem_block(
        title: str, row: ResultRow, rate_col: str, hypotheses: Sequence[str], threshold: Optional[float]
    ) -> List[str]:
        valid = getattr(row, f"{rate_col}_valid")
        lines = [f"### {title}", "", "| hypothesis | held |", "|---|---|"]
        for hyp in hypotheses:
            lines.append(f"| {hyp} | {_fmt(getattr(row, _HYP_COLUMNS[hyp]))} |")
        if threshold is not None:
            lines.append(f"| δ < {threshold:.6f} | {_fmt(row.delta < threshold)} |")
        else:
            lines.append(f"| bound < 1 | {_fmt(getattr(row, rate_col) < 1.0)} |")
        lines.append("")
        lines.append(f"- status: {ReportService.applicability(row, hypotheses, valid)}")
        lines.append(f"- bound: {_fmt(getattr(row, rate_col))}")
        if rate_col == "rho2":
            lines.append(f"- uncorrected second argument: {_fmt(row.rho2_second_as_printed)}")
        lines.append(f"- observed rate: {_fmt(row.observed_rate)} after {_fmt(row.steps)} steps")
        lines.append(f"- envelope violations: {_fmt(row.bound_violations)}")
        lines.append(f"- chain certificate: {row.chain_status}")
        lines.append("")
        return lines

    @staticmethod
    def render_markdown(rows: Sequence[ResultRow]) -> str:
        out: List[str] = ["# Saddle-point convergence certificates", ""]
        for fingerprint, group in groupby(rows, key=lambda r: r.fingerprint):
            group = list(group)
            head = group[0]
            by_method: Dict[str, ResultRow] = {r.method: r for r in group}
            out += [
                f"## Config {fingerprint}",
                "",
                f"- problem: {head.problem} (n={head.n}, m={head.m})",
                f"- pair: {head.pair}",
                f"- δ = {_fmt(head.delta)}, γ = {_fmt(head.gamma)}, γ̄ = {_fmt(head.gamma_bar)}",
                f"- α ∈ [{_fmt(head.alpha_lo)}, {_fmt(head.alpha_hi)}], κ ∈ [{_fmt(head.kappa_lo)}, {_fmt(head.kappa_hi)}]",
                f"- inequality checks: {head.loewner_pass}/{head.loewner_total} hold"
                + (f"; failed: {head.loewner_failures}" if head.loewner_failures else ""),
                f"- earlier bound max(δ, 2γ/(1-γ)): {_fmt(head.prior_bwy1990)}"
                f" (convergence condition met: {_fmt(head.ts_convergent)})",
                "",
            ]
            for title, method, rate_col, hyps, threshold in _THEOREMS:
                row = by_method.get(method) or (by_method.get("certificates") if method != "ium" else None)
                if row is not None:
                    out += ReportService._theorem_block(title, row, rate_col, hyps, threshold)

            krylov = [r for r in group if r.method.startswith("gmres")]
            fov_row = krylov[0] if krylov else by_method.get("certificates")
            if fov_row is not None:
                out += ["### Field-of-values equivalence", ""]
                if fov_row.gamma_fov is None:
                    out += ["- status: NOT APPLICABLE (smoother spectrum outside (0, 2))", ""]
                else:
                    out += [
                        f"- bounds: γ = {_fmt(fov_row.gamma_fov)}, Γ = {_fmt(fov_row.Gamma_fov)}",
                        f"- measured: [{_fmt(fov_row.fov_empirical_min)}, {_fmt(fov_row.fov_empirical_max)}]",
                        f"- sandwich holds: {_fmt(fov_row.fov_sandwich_ok)}",
                        f"- GMRes factor bound: {_fmt(fov_row.elman_bound)}",
                    ]
                    for r in krylov:
                        out.append(
                            f"- {r.method}: {_fmt(r.gmres_iterations)} iterations, "
                            f"contraction {_fmt(r.gmres_contraction)}, converged {_fmt(r.gmres_converged)}"
                        )
                    out.append("")

            out += ["### Result", "", "| method | certificate | notes |", "|---|---|---|"]
            for r in group:
                out.append(f"| {r.method} | {'PASS' if r.certificate_ok else 'FAIL'} | {r.notes or ''} |")
            out.append("")
        return "\n".join(out)

    @staticmethod
    def emit_report(
        rows: Sequence[ResultRow],
        fmt: ReportFormat = "csv",
        out_dir: Optional[str] = None,
        stem: str = "results",
        allow_empty: bool = False,
    ) -> Path:
        """Write ``{stem}.csv`` or ``{stem}.md`` under ``out_dir``; returns the path."""
        if not rows and not allow_empty:
            raise ValueError("emit_report needs at least one row")
        out = init_output_dir(out_dir)
        if fmt == "csv":
            return write_frame(ReportService.rows_to_frame(rows), out / f"{stem}.csv", CSV_COLUMNS)
        if fmt == "markdown":
            return write_text(ReportService.render_markdown(rows), out / f"{stem}.md")
        raise ValueError(f"unknown format '{fmt}', expected csv or markdown")
