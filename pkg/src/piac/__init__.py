"""Secondary frequency control of lossless power networks by power-imbalance allocation."""
from .netmodel import (
    Edge,
    NetworkError,
    Node,
    NodeKind,
    Partition,
    PowerNetwork,
    area_price,
    comm_laplacian,
    power_imbalance,
    validate_network,
)
from .controllers import ControllerGains, Variant, optimal_dispatch
from .dynamics import Disturbance, SimulationError, Trajectory, integrate

__all__ = [
    "ControllerGains", "Disturbance", "Edge", "NetworkError", "Node", "NodeKind", "Partition",
    "PowerNetwork", "SimulationError", "Trajectory", "Variant", "area_price", "comm_laplacian",
    "integrate", "optimal_dispatch", "power_imbalance", "validate_network",
]
