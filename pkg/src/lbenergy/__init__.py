"""Lattice Boltzmann propagate/collide benchmark with energy-to-solution accounting."""
from .field import PopulationField, field_checksum, init_field, moments
from .lattice import LatticeGeometry, SiteCoord, VelocitySet, build_velocity_set
from .layouts import ALL_LAYOUTS, LayoutIndexer, LayoutKind, address, convert, make_indexer

__version__ = "0.1.0"

__all__ = [
    "ALL_LAYOUTS",
    "LatticeGeometry",
    "LayoutIndexer",
    "LayoutKind",
    "PopulationField",
    "SiteCoord",
    "VelocitySet",
    "address",
    "build_velocity_set",
    "convert",
    "field_checksum",
    "init_field",
    "make_indexer",
    "moments",
]
