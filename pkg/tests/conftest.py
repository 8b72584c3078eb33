import numpy as np
import pytest

from mfldp.core.config import settings
from mfldp.services.model_service import (
    ehrenfest_from_potential,
    ehrenfest_nonunique_example,
    ehrenfest_sqrt_example,
    glauber_from_potential,
    simplex_quadratic_potential,
    zero_potential,
)

# =====================================================================
# Environment isolation
# =====================================================================

@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Send log files to a per-test directory and pin the thread count."""
    monkeypatch.setattr(settings, 'LOG_DIR', str(tmp_path / "logs"))
    monkeypatch.setattr(settings, 'LDP_THREADS', None)
    yield

# =====================================================================
# Models
# =====================================================================

@pytest.fixture
def free_ehrenfest():
    """d=1 Ehrenfest model with V = 0: v_+(x) = (1-x)/2, v_-(x) = (1+x)/2, F(x) = -2x."""
    V = zero_potential()
    return ehrenfest_from_potential(V.value, V.gradient, 1, "zero")


@pytest.fixture
def free_ehrenfest_2d():
    V = zero_potential()
    return ehrenfest_from_potential(V.value, V.gradient, 2, "zero")


@pytest.fixture
def sqrt_model():
    return ehrenfest_sqrt_example()


@pytest.fixture
def nonunique_model():
    return ehrenfest_nonunique_example(0.5)


@pytest.fixture
def symmetric_glauber():
    """d=2 Glauber model with r = 1 and V = 0."""
    V = zero_potential()
    return glauber_from_potential(np.ones((2, 2)), V.value, V.gradient, "zero")


@pytest.fixture
def symmetric_glauber_3():
    V = zero_potential()
    return glauber_from_potential(np.ones((3, 3)), V.value, V.gradient, "zero")


@pytest.fixture
def curie_weiss_glauber():
    """Factory: d=2 Curie-Weiss Glauber model V(mu) = -beta (mu(1) - mu(2))^2 / 2."""
    def factory(beta: float):
        V = simplex_quadratic_potential(-beta, 2)
        return glauber_from_potential(np.ones((2, 2)), V.value, V.gradient, "curie_weiss", beta)
    return factory


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240611))
