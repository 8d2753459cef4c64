"""
topoband: band topology and interface modes of one-dimensional periodic media.

The equation ``-(1/mu psi')' = E eps psi`` with 1-periodic ``eps`` and ``mu``
is analysed through its transfer matrices.  Submodules:

``medium``        structure descriptions and JSON input
``propagator``    transfer matrices, monodromy and Floquet data
``spectrum``      band edges, dispersion, Dirac points, interlacing
``bloch``         Bloch modes, Zak phases, parities and bulk indices
``perturbation``  gap opening at Dirac points under small perturbations
``interface``     interface modes, defects and Prufer angles
``resonance``     resonances and transmission of finite structures
"""

__version__ = "0.1.0"

from .errors import InputError, NoConvergence, NumericalError, PreconditionError, TopobandError
from .medium import (
    DefectSpec,
    FiniteStructure,
    MediumProfile,
    PerturbationProfile,
    Piece,
    apply_perturbation,
    homogeneous,
    layered,
    load_bundled,
    parse_defect,
    parse_perturbation,
    parse_structure,
    shift_origin,
)
from .propagator import discriminant, floquet_eigen, monodromy
from .spectrum import band_edges, band_structure, bc_eigenvalues, dirac_points, dispersion
from .bloch import bulk_index, edge_parity, zak_parity, zak_wilson
from .interface import common_gap, defect_mode_search, find_interface_modes, impedance
from .resonance import find_resonance_near, transmission

__all__ = [
    "__version__",
    "TopobandError", "InputError", "PreconditionError", "NumericalError", "NoConvergence",
    "Piece", "MediumProfile", "PerturbationProfile", "DefectSpec", "FiniteStructure",
    "homogeneous", "layered", "shift_origin", "apply_perturbation",
    "parse_structure", "parse_perturbation", "parse_defect", "load_bundled",
    "monodromy", "discriminant", "floquet_eigen",
    "band_edges", "band_structure", "dispersion", "dirac_points", "bc_eigenvalues",
    "zak_wilson", "zak_parity", "edge_parity", "bulk_index",
    "impedance", "common_gap", "find_interface_modes", "defect_mode_search",
    "find_resonance_near", "transmission",
]
