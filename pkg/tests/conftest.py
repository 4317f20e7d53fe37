import math

import pytest

from lidarbias import BeamGeometry, PulseParams, load_preset


@pytest.fixture(scope="session")
def pulse():
    return PulseParams(peak_power=0.39, pulse_length=50e-9)


@pytest.fixture(scope="session")
def lms151():
    return load_preset("LMS151")


@pytest.fixture(scope="session")
def rs_lidar_16():
    return load_preset("RS-LiDAR-16")


@pytest.fixture(scope="session")
def hdl_32e():
    return load_preset("HDL-32E")


@pytest.fixture(scope="session")
def lms151_beam(lms151):
    return BeamGeometry(wavelength=905e-9, half_aperture=lms151.half_aperture)


@pytest.fixture(scope="session")
def narrow_beam():
    return BeamGeometry(wavelength=905e-9, half_aperture=math.radians(0.085))
