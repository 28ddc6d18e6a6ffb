from .design import MachineDesign, MachineRatings, Topology, ToothTip, load_machine, save_machine
from .fluxmap import FluxLinkageMap, GridSpec, build_flux_map, steady_voltage, torque
from .network import build_reluctance_network, solve_network
from .estimator import FluxMapModel

__all__ = [
    "MachineDesign", "MachineRatings", "Topology", "ToothTip", "load_machine", "save_machine",
    "FluxLinkageMap", "GridSpec", "build_flux_map", "steady_voltage", "torque",
    "build_reluctance_network", "solve_network", "FluxMapModel",
]
