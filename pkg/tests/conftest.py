import numpy as np
import pytest

from covert_kalman import mass_spring_scenario


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def stable_model():
    return mass_spring_scenario(1.0, 1.0)


@pytest.fixture(scope="session")
def unstable_model():
    return mass_spring_scenario(-1.0, -1.0)


def random_stable_model(rng, n=4, p=2, m=2, rho_max=0.95):
    """Random well-posed model with spectral radius below rho_max."""
    from covert_kalman import SystemModel, validate_model

    A = rng.standard_normal((n, n))
    radius = max(abs(np.linalg.eigvals(A)))
    A *= rho_max * rng.uniform(0.5, 1.0) / radius
    B = rng.standard_normal((n, p))
    C = rng.standard_normal((m, n))
    Lq = rng.standard_normal((p, p))
    Q = Lq @ Lq.T + 0.1 * np.eye(p)
    Lr = rng.standard_normal((m, m))
    R = Lr @ Lr.T + 0.1 * np.eye(m)
    model = SystemModel(
        A=A,
        B=B,
        C=C,
        Q=Q,
        R=R,
        x0_mean=np.zeros(n),
        P0=np.eye(n),
    )
    return validate_model(model)


def random_unstable_model(rng, n=4, p=2, m=2):
    """Random well-posed model with at least one eigenvalue outside the circle."""
    from covert_kalman import SystemModel, validate_model

    for _ in range(100):
        A = rng.standard_normal((n, n))
        radius = max(abs(np.linalg.eigvals(A)))
        A *= rng.uniform(1.02, 1.3) / radius
        B = rng.standard_normal((n, p))
        C = rng.standard_normal((m, n))
        Lq = rng.standard_normal((p, p))
        Q = Lq @ Lq.T + 0.1 * np.eye(p)
        Lr = rng.standard_normal((m, m))
        R = Lr @ Lr.T + 0.1 * np.eye(m)
        model = SystemModel(
            A=A, B=B, C=C, Q=Q, R=R, x0_mean=np.zeros(n), P0=np.eye(n)
        )
        try:
            return validate_model(model)
        except Exception:
            continue
    raise RuntimeError("could not draw a valid unstable model")
