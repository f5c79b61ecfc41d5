"""
Deterministic generators of desk-scale saddle-point systems.
"""
import json
import logging
from pathlib import Path
from typing import Literal, Tuple

import numpy as np
from scipy import io as sio
from scipy.sparse import coo_matrix

from saddlecert.config import MAX_DENSE_DIM, NEAR_SINGULAR_SHIFT
from saddlecert.exceptions import BadDims, DimensionMismatch, GridTooSmall, NotSPD
from saddlecert.models.linalg import Vector
from saddlecert.models.saddle import (
    GridComponent,
    GridMetadata,
    RhsPair,
    SaddleSystem,
    WellposedReport,
)
from saddlecert.services.linalg_core import LinalgService

logger = logging.getLogger(__name__)

CMode = Literal["zero", "diag", "laplace"]
AMode = Literal["well", "near_singular"]

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    """
    Counter-based splitmix64 stream.

    Output i of a stream seeded with s is mix(s + (i + 1) * golden), so the
    sequence is fixed by the seed alone on every platform.
    """

    def __init__(self, seed: int):
        self.state = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.drawn = 0

    def next_raw(self, count: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            steps = np.arange(self.drawn + 1, self.drawn + count + 1, dtype=np.uint64)
            z = (self.state + steps * _GOLDEN) & _MASK64
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
        self.drawn += count
        return z

    def uniform(self, count: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """Doubles in [low, high) from the top 53 bits."""
        unit = (self.next_raw(count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return low + (high - low) * unit


def _tridiag(size: int, lower: float, diag: float, upper: float) -> np.ndarray:
    return (
        np.diag(np.full(size, diag))
        + np.diag(np.full(size - 1, lower), -1)
        + np.diag(np.full(size - 1, upper), 1)
    )


def _difference(cells: int) -> np.ndarray:
    """Cell-from-face difference: row i is face i minus face i - 1 (interior faces only)."""
    d = np.zeros((cells, cells - 1))
    idx = np.arange(cells - 1)
    d[idx, idx] = 1.0
    d[idx + 1, idx] = -1.0
    return d


def _staggered_grid(grid_n: int) -> GridMetadata:
    return GridMetadata(
        grid_n=grid_n,
        components=(
            GridComponent(nx=grid_n - 1, ny=grid_n, kind_x="vertex", kind_y="cell"),
            GridComponent(nx=grid_n, ny=grid_n - 1, kind_x="cell", kind_y="vertex"),
        ),
    )


def _divergence(grid_n: int) -> np.ndarray:
    """Undivided divergence from interior face unknowns onto all cells."""
    eye = np.eye(grid_n)
    dx = _difference(grid_n)
    return np.hstack([np.kron(eye, dx), np.kron(dx, eye)])


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


class ProblemService:
    """Builds saddle systems and checks the standing assumptions."""

    @staticmethod
    def make_mac_stokes(grid_n: int, viscosity: float = 1.0) -> SaddleSystem:
        """
        Staggered-grid Stokes on the unit square with no-slip walls.

        A is the viscous vector Laplacian on interior face velocities, B the
        negative divergence onto cell centres with the last pressure pinned,
        C = 0.
        """
        if grid_n < 4:
            raise GridTooSmall(f"grid_n must be at least 4, got {grid_n}")
        if viscosity <= 0:
            raise ValueError(f"viscosity must be positive, got {viscosity}")

        h = 1.0 / grid_n
        n_face = grid_n - 1
        lap_vertex = _tridiag(n_face, -1.0, 2.0, -1.0) / h ** 2
        lap_cell = _tridiag(grid_n, -1.0, 2.0, -1.0)
        lap_cell[0, 0] = lap_cell[-1, -1] = 3.0  # ghost reflection at the wall
        lap_cell /= h ** 2

        a_u = np.kron(np.eye(grid_n), lap_vertex) + np.kron(lap_cell, np.eye(n_face))
        a_v = np.kron(np.eye(n_face), lap_cell) + np.kron(lap_vertex, np.eye(grid_n))
        n_u = a_u.shape[0]
        A = np.zeros((2 * n_u, 2 * n_u))
        A[:n_u, :n_u] = a_u
        A[n_u:, n_u:] = a_v
        A = LinalgService.symmetric(viscosity * A)

        B = (-_divergence(grid_n) / h)[:-1].copy()
        m = B.shape[0]
        C = np.zeros((m, m))
        _freeze(B, C)

        logger.debug(f"MAC Stokes grid {grid_n}: n={A.shape[0]}, m={m}")
        return SaddleSystem(A=A, B=B, C=C, label=f"mac_stokes_{grid_n}", grid=_staggered_grid(grid_n))

    @staticmethod
    def make_mixed_poisson(grid_n: int, c_weight: float = 0.0) -> SaddleSystem:
        """Flux mass matrix, scaled divergence and a weighted pressure mass matrix."""
        if grid_n < 4:
            raise GridTooSmall(f"grid_n must be at least 4, got {grid_n}")
        if c_weight < 0:
            raise ValueError(f"c_weight must be nonnegative, got {c_weight}")

        h = 1.0 / grid_n
        n_face = grid_n - 1
        mass_line = _tridiag(n_face, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0)
        m_u = np.kron(np.eye(grid_n), mass_line)
        m_v = np.kron(mass_line, np.eye(grid_n))
        n_u = m_u.shape[0]
        A = np.zeros((2 * n_u, 2 * n_u))
        A[:n_u, :n_u] = m_u
        A[n_u:, n_u:] = m_v
        A = LinalgService.symmetric(h ** 2 * A)

        B = (h * _divergence(grid_n))[:-1].copy()
        m = B.shape[0]
        C = c_weight * h ** 2 * np.eye(m)
        _freeze(B, C)

        return SaddleSystem(
            A=A,
            B=B,
            C=C,
            label=f"mixed_poisson_{grid_n}_c{c_weight:g}",
            grid=_staggered_grid(grid_n),
        )

    @staticmethod
    def make_random_saddle(
        n: int, m: int, seed: int, c_mode: CMode = "zero", a_mode: AMode = "well"
    ) -> SaddleSystem:
        """
        Seeded dense system; bit-identical for identical arguments.

        ``a_mode="well"`` draws A = G^T G + I/2 with G of size 8n x n.
        ``"near_singular"`` uses n//2 rows and the shift NEAR_SINGULAR_SHIFT,
        so n - n//2 eigenvalues of A sit at the shift.
        """
        if m < 1 or m > n:
            raise BadDims(f"need 1 <= m <= n, got n={n}, m={m}")
        if n > MAX_DENSE_DIM:
            raise BadDims(f"n={n} exceeds the dense limit {MAX_DENSE_DIM}")
        if c_mode not in ("zero", "diag", "laplace"):
            raise ValueError(f"unknown c_mode '{c_mode}'")
        if a_mode not in ("well", "near_singular"):
            raise ValueError(f"unknown a_mode '{a_mode}'")

        rng = SplitMix64(seed)
        rows, shift = (8 * n, 0.5) if a_mode == "well" else (max(n // 2, 1), NEAR_SINGULAR_SHIFT)
        half_width = np.sqrt(3.0 / rows)  # unit variance per column after G^T G
        G = rng.uniform(rows * n, -half_width, half_width).reshape(rows, n)
        A = LinalgService.symmetric(G.T @ G + shift * np.eye(n))

        B = rng.uniform(m * n, -np.sqrt(3.0), np.sqrt(3.0)).reshape(m, n)
        attempts = 0
        while LinalgService.numerical_rank(B) < m:
            attempts += 1
            if attempts > 16:
                raise BadDims(f"could not draw a rank-{m} B for n={n}")
            B = rng.uniform(m * n, -np.sqrt(3.0), np.sqrt(3.0)).reshape(m, n)

        if c_mode == "zero":
            C = np.zeros((m, m))
        elif c_mode == "diag":
            C = np.diag(rng.uniform(m, 0.1, 1.0))
        else:
            C = 0.1 * _tridiag(m, -1.0, 2.0, -1.0) if m > 1 else np.full((1, 1), 0.2)
        _freeze(B, C)

        label = f"random_{n}x{m}_s{seed}_{c_mode}" + ("" if a_mode == "well" else "_near_singular")
        return SaddleSystem(A=A, B=B, C=C, label=label)

    @staticmethod
    def make_rhs(sys: SaddleSystem, seed: int) -> RhsPair:
        """Seeded right-hand side with entries in [-1, 1)."""
        rng = SplitMix64(seed ^ 0x5DEECE66D)
        return RhsPair(f=rng.uniform(sys.n, -1.0, 1.0), g=rng.uniform(sys.m, -1.0, 1.0))

    @staticmethod
    def check_wellposed(sys: SaddleSystem) -> WellposedReport:
        """Run the four standing-assumption checks; never raises for a failed one."""
        notes = []
        min_eigs = {}

        eig_a = np.linalg.eigvalsh(0.5 * (sys.A + sys.A.T))
        min_eigs["A"] = float(eig_a[0])
        try:
            LinalgService.cholesky_factor(sys.A)
            a_spd = True
        except NotSPD as exc:
            a_spd = False
            notes.append(f"A: {exc}")

        if sys.m:
            eig_c = np.linalg.eigvalsh(0.5 * (sys.C + sys.C.T))
            min_eigs["C"] = float(eig_c[0])
            c_scale = max(float(np.max(np.abs(eig_c))), 1.0)
            c_psd = bool(eig_c[0] >= -1e-12 * c_scale)
        else:
            c_psd = True

        rank = LinalgService.numerical_rank(sys.B) if sys.m else 0
        b_full = rank == sys.m
        if not b_full:
            notes.append(f"B: numerical rank {rank} < {sys.m}")

        s_spd = False
        if a_spd and sys.m:
            s_a = sys.schur
            min_eigs["S_A"] = float(np.linalg.eigvalsh(s_a)[0])
            try:
                LinalgService.cholesky_factor(s_a)
                s_spd = True
            except NotSPD as exc:
                notes.append(f"S_A: {exc}")
        elif a_spd:
            s_spd = True

        report = WellposedReport(
            A_spd=a_spd,
            C_psd=c_psd,
            B_rank=rank,
            B_full_rank=b_full,
            S_A_spd=s_spd,
            min_eigs=min_eigs,
            notes=notes,
        )
        if not report.all_ok:
            logger.warning(f"{sys.label} is not well-posed: {'; '.join(notes) or 'C not PSD'}")
        return report

    @staticmethod
    def exact_solve(sys: SaddleSystem, rhs: RhsPair) -> Tuple[Vector, Vector]:
        """Block elimination through S_A: p = S_A^{-1}(B A^{-1} f - g), u = A^{-1}(f - B^T p)."""
        if rhs.f.shape[0] != sys.n or rhs.g.shape[0] != sys.m:
            raise DimensionMismatch(
                f"rhs is ({rhs.f.shape[0]}, {rhs.g.shape[0]}), system is ({sys.n}, {sys.m})"
            )
        a_handle = LinalgService.cholesky_factor(sys.A)
        if sys.m == 0:
            return a_handle.solve(rhs.f), np.zeros(0)

        a_inv_f = a_handle.solve(rhs.f)
        s_handle = LinalgService.cholesky_factor(sys.schur)
        p = s_handle.solve(sys.B @ a_inv_f - rhs.g)
        u = a_handle.solve(rhs.f - sys.B.T @ p)
        return u, p

    @staticmethod
    def residual(sys: SaddleSystem, rhs: RhsPair, u: Vector, p: Vector) -> Tuple[Vector, Vector]:
        """(f - A u - B^T p, g - B u + C p)."""
        return rhs.f - sys.A @ u - sys.B.T @ p, rhs.g - sys.B @ u + sys.C @ p

    @staticmethod
    def dump_system(sys: SaddleSystem, directory: str) -> Path:
        """Write A, B, C as Matrix Market files plus a small JSON descriptor."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / sys.label
        for name, mat in (("A", sys.A), ("B", sys.B), ("C", sys.C)):
            sio.mmwrite(
                f"{stem}_{name}.mtx",
                coo_matrix(mat),
                comment=f"{sys.label} block {name}",
                precision=17,
            )
        meta = {"label": sys.label, "n": sys.n, "m": sys.m, "grid_n": sys.grid.grid_n if sys.grid else None}
        Path(f"{stem}.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        logger.info(f"Dumped {sys.label} to {out}")
        return Path(f"{stem}.json")

    @staticmethod
    def load_system(descriptor: str) -> SaddleSystem:
        """Inverse of ``dump_system``; takes the path of the JSON descriptor."""
        meta_path = Path(descriptor)
        meta = json.loads(meta_path.read_text())
        stem = meta_path.with_suffix("")

        def read(name: str, shape: Tuple[int, int]) -> np.ndarray:
            mat = sio.mmread(f"{stem}_{name}.mtx")
            dense = mat.toarray() if hasattr(mat, "toarray") else np.asarray(mat)
            if dense.shape != shape:
                raise DimensionMismatch(f"{name} is {dense.shape}, descriptor says {shape}")
            return np.asarray(dense, dtype=np.float64)

        n, m = meta["n"], meta["m"]
        A = LinalgService.symmetric(read("A", (n, n)))
        B = read("B", (m, n))
        C = read("C", (m, m))
        _freeze(B, C)
        grid = _staggered_grid(meta["grid_n"]) if meta.get("grid_n") else None
        return SaddleSystem(A=A, B=B, C=C, label=meta["label"], grid=grid)
