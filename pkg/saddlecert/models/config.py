"""
Experiment configuration schema.
"""
import hashlib
import json
import re
from enum import Enum
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from saddlecert.config import (
    DEFAULT_DOMINANCE_MARGIN,
    DEFAULT_K_MAX,
    DEFAULT_TOL,
    GMRES_MAX_ITER,
    GMRES_TOL,
    RATE_WINDOW,
)

_SMOOTHER_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*?)\s*\))?\s*$")


def _spec_fields(text: str) -> dict:
    match = _SMOOTHER_RE.match(text)
    if not match:
        raise ValueError(f"cannot read smoother '{text}', expected kind or kind(value)")
    kind, raw = match.groups()
    try:
        param = float(raw) if raw else None
    except ValueError:
        raise ValueError(f"smoother parameter '{raw}' is not a number") from None
    return {"kind": kind, "param": param}


class ProblemKind(str, Enum):
    mac_stokes = "mac_stokes"
    mixed_poisson = "mixed_poisson"
    random = "random"


MethodName = Literal["bwy", "sium", "ium", "gmres_G", "gmres_split"]
ITERATION_METHODS = ("bwy", "sium", "ium")
KRYLOV_METHODS = ("gmres_G", "gmres_split")


class SmootherSpec(BaseModel):
    """``kind(param)`` as written in the config, e.g. ``sgs(0.95)`` or ``two_grid(2)``."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["exact", "jacobi", "deflated_jacobi", "sgs", "two_grid"]
    param: Optional[float] = None

    @classmethod
    def parse(cls, text: str) -> "SmootherSpec":
        return cls(**_spec_fields(text))

    @model_validator(mode="after")
    def check_param(self) -> "SmootherSpec":
        p = self.param
        if p is None:
            return self
        if self.kind == "exact" and not 0.0 < p <= 1.0:
            raise ValueError(f"exact scale must be in (0,1], got {p:g}")
        if self.kind in ("jacobi", "deflated_jacobi") and p <= 0.0:
            raise ValueError(f"{self.kind} theta must be positive, got {p:g}")
        if self.kind == "sgs" and not 0.0 < p <= 1.0:
            raise ValueError(f"sgs damping must be in (0,1], got {p:g}")
        if self.kind == "two_grid" and (p < 1 or p != int(p)):
            raise ValueError(f"two_grid smoothing count must be a positive integer, got {p:g}")
        return self

    def __str__(self) -> str:
        return self.kind if self.param is None else f"{self.kind}({self.param:g})"


class ProblemSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemKind
    grid_n: int = Field(8, ge=4)
    viscosity: float = Field(1.0, gt=0.0)
    c_weight: float = Field(0.0, ge=0.0)
    n: Optional[int] = Field(None, ge=1)
    m: Optional[int] = Field(None, ge=1)
    seed: int = 1
    c_mode: Literal["zero", "diag", "laplace"] = "zero"
    a_mode: Literal["well", "near_singular"] = "well"

    @model_validator(mode="after")
    def check_random_dims(self) -> "ProblemSection":
        if self.problem is ProblemKind.random:
            if self.n is None or self.m is None:
                raise ValueError("random problems need both n and m")
            if self.m > self.n:
                raise ValueError(f"need m <= n, got n={self.n}, m={self.m}")
        return self


class SmootherSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    smoother_a: SmootherSpec
    smoother_s: SmootherSpec
    rescale_target: Literal["S", "S_bar", "none"] = "S_bar"
    margin: float = Field(DEFAULT_DOMINANCE_MARGIN, ge=0.0)
    ium_smoother: Literal["symmetrized", "raw"] = "symmetrized"

    @field_validator("smoother_a", "smoother_s", mode="before")
    @classmethod
    def parse_spec(cls, v):
        if isinstance(v, str):
            return _spec_fields(v)
        return v

    @field_validator("smoother_s")
    @classmethod
    def no_two_grid_schur(cls, v: SmootherSpec) -> SmootherSpec:
        if v.kind == "two_grid":
            raise ValueError("the Schur surrogate carries no grid; use exact, jacobi, deflated_jacobi or sgs")
        return v

    @field_validator("smoother_a")
    @classmethod
    def no_deflated_velocity(cls, v: SmootherSpec) -> SmootherSpec:
        if v.kind == "deflated_jacobi":
            raise ValueError("deflated_jacobi corrects the constant pressure mode; use it for smoother_s")
        return v


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    methods: List[MethodName]
    k_max: int = Field(DEFAULT_K_MAX, ge=1)
    tol: float = Field(DEFAULT_TOL, ge=0.0)
    seed: int = 0
    output_dir: Optional[str] = None
    rate_window: int = Field(RATE_WINDOW, ge=2)
    gmres_tol: float = Field(GMRES_TOL, gt=0.0)
    gmres_max_iter: int = Field(GMRES_MAX_ITER, ge=1)
    workers: int = Field(1, ge=1)

    @field_validator("methods", mode="before")
    @classmethod
    def split_methods(cls, v):
        if isinstance(v, str):
            items = [item.strip() for item in v.split(",") if item.strip()]
            if not items:
                raise ValueError("at least one method is required")
            return items
        return v


class ExperimentConfig(BaseModel):
    """A fully validated experiment; every run is determined by it."""
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSection
    smoothers: SmootherSection
    run: RunSection

    @property
    def fingerprint(self) -> str:
        """First 12 hex digits of the sha256 of the result-relevant settings."""
        payload = self.model_dump(mode="json", exclude={"run": {"output_dir", "workers"}})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
