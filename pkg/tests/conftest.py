import numpy as np
import pytest

from vpreg.field import Domain, ScalarField, VectorField, from_displacement


def band_limited_scalar(dom: Domain, rng, modes: int = 3, periodic: bool = False):
    """Smooth random scalar field from a few low-frequency trig modes."""
    mesh = np.meshgrid(*[np.arange(n, dtype=float) for n in dom.dims], indexing="ij")
    acc = np.zeros(dom.dims)
    for _ in range(4):
        term = np.ones(dom.dims)
        for ax in range(dom.d):
            k = int(rng.integers(1, modes + 1))
            if periodic:
                phase = rng.uniform(0, 2 * np.pi)
                term = term * np.sin(2 * np.pi * k * mesh[ax] / dom.dims[ax] + phase)
            else:
                term = term * np.sin(np.pi * k * mesh[ax] / (dom.dims[ax] - 1))
        acc += rng.uniform(-1.0, 1.0) * term
    return ScalarField(dom, acc)


def band_limited_vector(dom: Domain, rng, modes: int = 3, periodic: bool = False):
    comps = np.stack(
        [band_limited_scalar(dom, rng, modes, periodic).values for _ in range(dom.d)]
    )
    return VectorField(dom, comps)


def smooth_transform(dom: Domain, rng, amplitude: float = 1.5):
    u = band_limited_vector(dom, rng).components.copy()
    peak = np.abs(u).max()
    if peak > 0:
        u *= amplitude / peak
    phi = from_displacement(dom, u)
    while not phi.is_diffeomorphic():
        u *= 0.7
        phi = from_displacement(dom, u)
    return phi


@pytest.fixture
def rng():
    return np.random.default_rng(20240612)
