import math

import pytest

from faradaykit import atomdata, polarizability as pol


@pytest.fixture(scope="session")
def species():
    return atomdata.load_species()


@pytest.fixture(scope="session")
def magic_wavelength(species):
    roots = pol.magic_zero_wavelengths(species, 1, (781e-9, 794e-9))
    assert len(roots) == 1
    return roots[0]


@pytest.fixture(scope="session")
def magic_table(species, magic_wavelength):
    return pol.coupling_table(species, 1, magic_wavelength)


@pytest.fixture(scope="session")
def fine_structure_splitting(species):
    return species.line("D2").omega - species.line("D1").omega


def detuned_wavelength(species, line_label, detuning_hz):
    """Wavelength at a given detuning (Hz, of 2pi) from a line centroid."""
    line = species.line(line_label)
    omega = line.omega + 2 * math.pi * detuning_hz
    from scipy.constants import c
    return 2 * math.pi * c / omega
