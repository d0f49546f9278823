import numpy as np
import pytest

from slitqudit.geometry import MultiSlit, OpticalSetup
from slitqudit.states import phase_phi

# reference double-slit layout (same as the shipped default config)
REF_SLITS = MultiSlit(num_slits=2, half_width=45e-6, spacing=180e-6)
REF_SETUP = OpticalSetup(pump_wavelength=413e-9, crystal_to_slit=0.2,
                           slit_to_detector=0.6, detector_half_width=50e-6)
REF_PHI = phase_phi(REF_SETUP, REF_SLITS)


@pytest.fixture
def slits():
    return REF_SLITS


@pytest.fixture
def setup():
    return REF_SETUP


@pytest.fixture
def phi():
    return REF_PHI


def random_density(rng, n, rank=None):
    """Random density matrix G G^dag / tr from a complex Ginibre matrix."""
    rank = n if rank is None else rank
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
