import numpy as np
import pytest

from wiretrap.dressed import DressedParams
from wiretrap.magnetostatics import InfiniteLine, Wire, WireAssembly
from wiretrap.model import RB87_LIKE, RFDrive

X_HAT = np.array([1.0, 0.0, 0.0])
Y_HAT = np.array([0.0, 1.0, 0.0])
Z_HAT = np.array([0.0, 0.0, 1.0])


def make_single_wire(i_dc=0.0925, i_rf=0.05, bias=(0.0, 0.0, 0.0), frequency=0.8e6):
    wire = Wire(geometry=InfiniteLine(point=np.zeros(3), direction=X_HAT),
                i_dc=i_dc, i_rf=i_rf)
    return WireAssembly(wires=(wire,), bias=np.asarray(bias, float),
                        drive=RFDrive(frequency))


def make_crossed(i_dc=0.0925, i_rf=0.05, bias=(0.0, 0.0, 0.0), gap=0.0,
                 frequency=0.8e6):
    """Wire A along x through the origin, wire B along y through (0, 0, -gap)."""
    wire_a = Wire(geometry=InfiniteLine(point=np.zeros(3), direction=X_HAT),
                  i_dc=i_dc, i_rf=i_rf)
    wire_b = Wire(geometry=InfiniteLine(point=np.array([0.0, 0.0, -gap]),
                                        direction=Y_HAT),
                  i_dc=i_dc, i_rf=i_rf)
    return WireAssembly(wires=(wire_a, wire_b), bias=np.asarray(bias, float),
                        drive=RFDrive(frequency))


@pytest.fixture
def drive():
    return RFDrive(0.8e6)


@pytest.fixture
def params(drive):
    return DressedParams(species=RB87_LIKE, drive=drive)


@pytest.fixture
def single_wire():
    return make_single_wire()


@pytest.fixture
def crossed_nobias():
    return make_crossed()
