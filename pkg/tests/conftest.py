import numpy as np
import pytest
from scipy import special

from latticeqpt import LatticeConfig, bound_states, compute_bands


def mathieu_band_edge(depth, band, at_edge):
    """Independent band-edge oracle from Mathieu characteristic values.

    For V = s sin^2(z) the Mathieu parameter is q = s/4 and E/E_r = char + s/2.
    Band n touches a_n / b_{n+1} at zone center for even / odd n, with the
    roles swapped at the zone edge.
    """
    q = depth / 4.0
    even = band % 2 == 0
    use_a = even != at_edge
    char = special.mathieu_a(band, q) if use_a else special.mathieu_b(band + 1, q)
    return char + depth / 2.0


@pytest.fixture(scope="session")
def config18():
    return LatticeConfig(depth=18.0)


@pytest.fixture(scope="session")
def bands18(config18):
    return compute_bands(config18)


@pytest.fixture(scope="session")
def states18(config18, bands18):
    return bound_states(config18, bands18)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


def random_density_matrix(rng, pure=False):
    """Haar-ish random 2x2 state."""
    if pure:
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        return np.outer(v, v.conj())
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_cp_channel(rng, n_kraus=3, trace_preserving=True):
    """Random CP map as a Kraus set; TP by left-normalization."""
    ops = [rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
           for _ in range(n_kraus)]
    total = sum(a.conj().T @ a for a in ops)
    if trace_preserving:
        w, v = np.linalg.eigh(total)
        inv_sqrt = (v * (1.0 / np.sqrt(w))) @ v.conj().T
        ops = [a @ inv_sqrt for a in ops]
    else:
        scale = np.sqrt(np.linalg.eigvalsh(total).max()) * 1.1
        ops = [a / scale for a in ops]
    return ops
