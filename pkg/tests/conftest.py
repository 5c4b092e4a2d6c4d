import numpy as np
import pytest

from disagg import DeviceLibrary, FirModel


@pytest.fixture
def single_gain5():
    return DeviceLibrary((FirModel("heater", 0, np.array([5.0])),))


@pytest.fixture
def lib_215():
    return DeviceLibrary((FirModel("kettle", 2, np.array([2.0, 1.0, 0.5])),))


@pytest.fixture
def two_device_lib():
    return DeviceLibrary((
        FirModel("kettle", 2, np.array([2.0, 1.0, 0.5])),
        FirModel("lamp", 1, np.array([3.0, -1.0])),
    ))
