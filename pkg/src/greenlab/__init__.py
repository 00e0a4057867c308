"""Green-hyperbolic operators, CCR/CAR algebras and states on a discretised 1+1 cylinder."""
from .geometry import CylinderGrid, Section, make_grid, bump_section, pairing
from .greenops import (GreenSystem, build_scalar_kg, build_oneform_kg, build_proca,
                       build_dirac_doubled, direct_sum, green_retarded, green_advanced,
                       pauli_jordan, pauli_jordan_form)

__version__ = "0.1.0"
