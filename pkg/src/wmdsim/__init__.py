"""Simulation and design tools for a meter-range wireless motor drive.

The drive is a series-compensated transmitter coupled to a hybrid repeater
(two wired coils), which in turn feeds an LCC-compensated in-pipe receiver, a
diode rectifier and a brushed PM DC motor.  Two engines are provided:

* :mod:`wmdsim.phasor` -- steady-state mesh analysis at one frequency.
* :mod:`wmdsim.transient` -- fixed-step RK4 simulation of the switched circuit.
"""

from wmdsim.circuit import (
    OPEN_CIRCUIT,
    CoilSpec,
    CouplingLink,
    DcSource,
    LccCompensation,
    MotorLoadSpec,
    NetworkDescription,
    SeriesCompensation,
    SeriesTank,
    WmdUnit,
    design_lcc,
    design_series_cap,
    equivalent_ac_load,
    table1_preset,
    validate_network,
)

__version__ = "0.1.0"

__all__ = [
    "OPEN_CIRCUIT",
    "CoilSpec",
    "CouplingLink",
    "DcSource",
    "LccCompensation",
    "MotorLoadSpec",
    "NetworkDescription",
    "SeriesCompensation",
    "SeriesTank",
    "WmdUnit",
    "design_lcc",
    "design_series_cap",
    "equivalent_ac_load",
    "table1_preset",
    "validate_network",
    "__version__",
]
