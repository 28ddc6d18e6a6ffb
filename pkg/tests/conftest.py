"""Shared fixtures: shipped data, flux-map models and the WLTC trace."""

from __future__ import annotations

import sys

import pytest

from wfsmkit.control import DriveModel
from wfsmkit.losses import LossParams, load_device, load_gear
from wfsmkit.magnetics import build_flux_map, load_machine
from wfsmkit.materials import default_library
from wfsmkit.powertrain import load_vehicle
from wfsmkit.resources import resolve

SHIPPED_MACHINES = ("wfsm_m0", "wfsm_m6", "pmsm_ref")
SHIPPED_DEVICES = {"wfsm_m0": "inverter_sic", "wfsm_m6": "inverter_sic", "pmsm_ref": "inverter_igbt"}
COARSE = (9, 9, 5)


def machine(name):
    return load_machine(resolve(name, "machine"))


def device(name):
    return load_device(resolve(name, "params"))


def gear(name):
    return load_gear(resolve(name, "params"))


def vehicle():
    return load_vehicle(resolve("vehicle", "params"))


@pytest.fixture(scope="session")
def library():
    return default_library()


@pytest.fixture(scope="session")
def shipped():
    return {name: machine(name) for name in SHIPPED_MACHINES}


@pytest.fixture(scope="session")
def full_models(shipped):
    """Default-grid maps with each machine's own inverter."""
    out = {}
    for name, (d, r) in shipped.items():
        out[name] = DriveModel(d, build_flux_map(d, r), r, LossParams(), device(SHIPPED_DEVICES[name]))
    return out


@pytest.fixture(scope="session")
def coarse_m0(shipped):
    d, r = shipped["wfsm_m0"]
    return DriveModel(d, build_flux_map(d, r, COARSE), r)


@pytest.fixture(scope="session")
def coarse_pmsm(shipped):
    d, r = shipped["pmsm_ref"]
    return DriveModel(d, build_flux_map(d, r, COARSE), r)


@pytest.fixture(scope="session")
def wltp_cycle(tmp_path_factory):
    pytest.importorskip("wltp")
    from wfsmkit.powertrain import fetch_wltp_class3

    return fetch_wltp_class3(tmp_path_factory.mktemp("wltp") / "wltc_class3b.csv")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(lines):
        terminalreporter.write_line(lines[num])
