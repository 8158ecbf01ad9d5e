import numpy as np
import pytest

from bbsinglet.config import load_config
from bbsinglet.spins import Coupling, CouplingTable, SpeciesChannel, SpinSite, SpinSystem


def make_system(species, offsets, couplings=(), pair=(0, 1), amps=None, gammas=None, max_spins=12):
    """SpinSystem from parallel lists; couplings = [(i, j, J, form)]."""
    labels = list(dict.fromkeys(species))
    amps = amps or {}
    gammas = gammas or {}
    channels = [SpeciesChannel(k, gammas.get(k, 1.0), amps.get(k, 250.0)) for k in labels]
    sites = [SpinSite(i, sp, off, f"{sp}{i}") for i, (sp, off) in enumerate(zip(species, offsets))]
    table = CouplingTable({(i, j): Coupling(jc, form) for i, j, jc, form in couplings})
    return SpinSystem(sites, channels, table, pair, max_spins=max_spins)


def random_hetero_system(rng, n_c=2, n_h=1):
    """Weakly coupled 13C/1H system with random offsets, couplings and RF amplitudes."""
    species = ["13C"] * n_c + ["1H"] * n_h
    n = len(species)
    offsets = list(rng.uniform(-300, 300, n))
    couplings = [(i, j, float(rng.uniform(-20, 20)), "weak") for i in range(n) for j in range(i + 1, n)]
    amps = {"13C": float(rng.uniform(50, 500)), "1H": float(rng.uniform(50, 500))}
    return make_system(species, offsets, couplings, (0, 1), amps=amps, gammas={"1H": 3.9767}), offsets, couplings, amps


@pytest.fixture(scope="session")
def three_spin_cfg():
    return load_config("bundled:three_spin")


@pytest.fixture(scope="session")
def three_spin(three_spin_cfg):
    return three_spin_cfg.build_system()


@pytest.fixture(scope="session")
def btmsb_cfg():
    return load_config("bundled:btmsb")


@pytest.fixture(scope="session")
def btmsb(btmsb_cfg):
    return btmsb_cfg.build_system()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# --- acceptance report ----------------------------------------------------

ACCEPTANCE: dict[int, str] = {}
N_CRITERIA = 11


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in range(1, N_CRITERIA + 1):
            terminalreporter.write_line(ACCEPTANCE.get(n, f"criterion {n:2d} NOT RUN (deselected; see its marker)"))
