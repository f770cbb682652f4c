import numpy as np
import pytest

from fuyau.grid import TorusGrid
from fuyau.model import ProblemData, make_problem
from fuyau.problems import (
    random_hermitian_modes,
    random_scalar_modes,
    rng_from_seed,
    synth_hermitian,
    synth_scalar,
)


def small_problem(seed=0, n=2, N=8, alpha=-1.0, M0=1e3, rho_sup=1.0, mu_sup=0.5,
                  kmax=2) -> ProblemData:
    """Random band-limited instance for unit tests."""
    grid = TorusGrid(n, N)
    rng = rng_from_seed(seed)
    rho = synth_hermitian(grid, random_hermitian_modes(rng, n, kmax=kmax, sup_bound=rho_sup))
    mu = synth_scalar(grid, random_scalar_modes(rng, n, kmax=kmax, sup_bound=mu_sup))
    return make_problem(grid, np.eye(n), rho, mu, alpha, M0)


def perturbed_log_field(P: ProblemData, seed=0, amplitude=0.1, kmax=2) -> np.ndarray:
    """log(M0) plus a band-limited perturbation; generic admissible iterate."""
    rng = rng_from_seed(seed + 1000)
    bump = synth_scalar(P.grid, random_scalar_modes(rng, P.n, kmax=kmax, sup_bound=amplitude))
    return np.log(P.M0) + bump


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
