import numpy as np
import pytest

from statetrim.linalg import StateSpaceModel, diagonal_model
from statetrim.lru import LruParams


def random_stable_eigs(rng, n, rho_max=0.9, rho_min=0.15):
    mod = rng.uniform(rho_min, rho_max, n)
    theta = rng.uniform(1e-3, 2 * np.pi - 1e-3, n)
    return mod * np.exp(1j * theta)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_diag_system(rng, n, n_u=2, n_y=2, rho_max=0.9,
                       take_real_output=False) -> StateSpaceModel:
    lam = random_stable_eigs(rng, n, rho_max)
    b = random_complex(rng, (n, n_u))
    c = random_complex(rng, (n_y, n))
    d = rng.standard_normal((n_y, n_u))
    return diagonal_model(lam, b, c, d, take_real_output=take_real_output)


def random_dense_system(rng, n, n_u=2, n_y=2, rho_max=0.9) -> StateSpaceModel:
    a = random_complex(rng, (n, n))
    rho = np.max(np.abs(np.linalg.eigvals(a)))
    a *= rho_max * rng.uniform(0.5, 1.0) / rho
    b = random_complex(rng, (n, n_u))
    c = random_complex(rng, (n_y, n))
    d = rng.standard_normal((n_y, n_u))
    return StateSpaceModel(a, b, c, d)


def random_lru(rng, n_x=4, n_u=2, n_y=2, rho_max=0.9) -> LruParams:
    lam = random_stable_eigs(rng, n_x, rho_max)
    nu = np.log(-np.log(np.abs(lam)))
    phi = np.log(np.angle(lam) % (2 * np.pi))
    b_tilde = random_complex(rng, (n_x, n_u)) / np.sqrt(n_x)
    c = random_complex(rng, (n_y, n_x)) / np.sqrt(n_x)
    d = rng.standard_normal((n_y, n_u)) * 0.3
    return LruParams(nu, phi, b_tilde, c, d)


def oracle_depth(ss, tol=1e-12):
    rho = ss.spectral_radius()
    if rho <= 0:
        return 2
    return int(np.ceil(np.log(tol) / np.log(rho))) + 1


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
