"""Survivable elastic optical network allocation with robust crosstalk checks."""

from importlib import resources

from .engine import Allocation, Blocked, EngineMode, SbppEngine, verify_no_qot_failures
from .pli import MF_TABLE, PliParameters
from .spectrum import SpectrumGrid
from .topology import LINK, SRLG, Topology

__all__ = [
    "Allocation", "Blocked", "EngineMode", "LINK", "MF_TABLE", "PliParameters", "SRLG",
    "SbppEngine", "SpectrumGrid", "Topology", "bundled_topology", "verify_no_qot_failures",
]

BUNDLED = {"six": "six_node.txt", "fourteen": "fourteen_node.txt"}


def bundled_topology(name: str) -> Topology:
    """Load one of the shipped test networks ("six" or "fourteen")."""
    text = resources.files(__package__).joinpath("data", BUNDLED[name]).read_text()
    return Topology.loads(text)
