"""
Shared systems and preconditioner pairs.

Systems are frozen, so session-scoped fixtures are safe to share.
"""
from pathlib import Path

import pytest

from saddlecert.services.operators import OperatorService
from saddlecert.services.problems import ProblemService

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def sgs_pair(sys, damping=0.95, theta=0.5, target="S_bar"):
    """SGS velocity solver, scaled Jacobi on the Schur surrogate, rescaled to dominate it."""
    r_a = OperatorService.sym_gauss_seidel(sys.A, damping)
    return OperatorService.make_pair(
        sys, r_a, lambda T: OperatorService.scaled_jacobi(T, theta), rescale_target=target
    )


def two_grid_pair(sys, smooths=2, schur=None):
    r_a = OperatorService.two_grid_vcycle(sys.A, sys.grid, smooths)
    schur = schur or (lambda T: OperatorService.scaled_jacobi(T, 0.5))
    return OperatorService.make_pair(sys, r_a, schur, "S_bar")


def broken_pair(sys):
    """R_S = 2 S_bar^{-1}: R_S^{-1} = S_bar / 2 cannot dominate S_bar."""
    r_a = OperatorService.sym_gauss_seidel(sys.A, 0.95)
    return OperatorService.make_pair(
        sys, r_a, lambda T: OperatorService.exact_inverse(T).scaled(2.0, "2*exact"), rescale_target="none"
    )


@pytest.fixture(scope="session")
def stokes8():
    return ProblemService.make_mac_stokes(8)


@pytest.fixture(scope="session")
def poisson8():
    return ProblemService.make_mixed_poisson(8)


@pytest.fixture(scope="session")
def random_sys():
    return ProblemService.make_random_saddle(40, 15, seed=5, c_mode="diag")


@pytest.fixture(scope="session")
def stokes_pair(stokes8):
    return two_grid_pair(stokes8)


@pytest.fixture(scope="session")
def poisson_pair(poisson8):
    return sgs_pair(poisson8)


@pytest.fixture(scope="session")
def random_pair(random_sys):
    return sgs_pair(random_sys)


@pytest.fixture(scope="session")
def stokes_exact_pair(stokes8):
    return OperatorService.exact_pair(stokes8)


@pytest.fixture(scope="session")
def poisson_exact_pair(poisson8):
    return OperatorService.exact_pair(poisson8)


@pytest.fixture
def config_path():
    def resolve(name: str) -> str:
        return str(CONFIG_DIR / name)

    return resolve
