import numpy as np
import pytest
from scipy import integrate

from gclab.burgers import FlowConfig
from gclab.noise import GAUSSIAN, NoiseModel
from gclab.oracle import ScalarMap, build_kernel, stationary_density
from gclab.spectral_field import SpectralField, WeightSequence
from gclab.transition import TransitionModel


@pytest.fixture(scope="session")
def tanh_kernel():
    k = build_kernel(ScalarMap("tanh", kappa=2.0))
    return k, stationary_density(k)


@pytest.fixture(scope="session")
def ar1_kernel():
    k = build_kernel(ScalarMap("linear", q=0.5))
    return k, stationary_density(k)


@pytest.fixture(scope="session")
def const_kernel():
    k = build_kernel(ScalarMap("constant", c=0.0))
    return k, stationary_density(k)


def benchmark_model(N=32, substeps=100, amplitude=1.0, nu=0.5):
    h = SpectralField.unit_mode(N, 1, "cos", amplitude)
    return TransitionModel(FlowConfig(nu, h, substeps), NoiseModel(WeightSequence.power_law(N, 1.0, 1.0), GAUSSIAN))


@pytest.fixture(scope="session")
def burgers_tm():
    return benchmark_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def quadrature_tv(model: NoiseModel, a, a2) -> float:
    """Exact TV of two shifts of a product law, by quadrature (1 or 2 coordinates)."""
    comps = model.components()
    b = model.b

    def dens(x, shift):
        return np.prod([comps[j].pdf((x[j] - shift[j]) / b[j]) / b[j] for j in range(len(b))])

    a, a2 = np.asarray(a, float), np.asarray(a2, float)
    R = [comps[j].support_radius(30) * b[j] + abs(a[j]) + abs(a2[j]) for j in range(len(b))]
    if len(b) == 1:
        val, _ = integrate.quad(lambda x: abs(dens([x], a) - dens([x], a2)), -R[0], R[0], limit=400,
                                points=sorted({float(a[0]), float(a2[0]), 0.5 * float(a[0] + a2[0])}))
    else:
        x0 = np.linspace(-R[0], R[0], 801)
        x1 = np.linspace(-R[1], R[1], 801)
        X0, X1 = np.meshgrid(x0, x1, indexing="ij")
        f = lambda s: (comps[0].pdf((X0 - s[0]) / b[0]) / b[0]) * (comps[1].pdf((X1 - s[1]) / b[1]) / b[1])
        val = integrate.simpson(integrate.simpson(np.abs(f(a) - f(a2)), x=x1, axis=1), x=x0)
    return 0.5 * val
