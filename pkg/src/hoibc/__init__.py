"""Method-of-moments scattering by coated conductors with high-order impedance boundary conditions."""

__version__ = "0.1.0"

from .assembly import PlaneWave, assemble_blocks, assemble_rhs, build_full_system, reduce_system
from .basis import BasisSet
from .coefficients import (
    CoatingSpec,
    HoibcCoefficients,
    check_uniqueness_condition,
    hoibc_coefficients,
    sibc_coefficients,
)
from .hmatrix import HSettings
from .kernels import QuadSettings
from .mesh import TriangleMesh, gen_geodesic_sphere, gen_icosphere, gen_spheroid, load_mesh
from .postprocess import RcsCurve, bistatic_rcs, compare_curves, far_field, monostatic_sweep
from .solver import Scatterer, SolveSettings, solve_scattering

__all__ = [
    "BasisSet",
    "CoatingSpec",
    "HSettings",
    "HoibcCoefficients",
    "PlaneWave",
    "QuadSettings",
    "RcsCurve",
    "Scatterer",
    "SolveSettings",
    "TriangleMesh",
    "assemble_blocks",
    "assemble_rhs",
    "bistatic_rcs",
    "build_full_system",
    "check_uniqueness_condition",
    "compare_curves",
    "far_field",
    "gen_geodesic_sphere",
    "gen_icosphere",
    "gen_spheroid",
    "hoibc_coefficients",
    "load_mesh",
    "monostatic_sweep",
    "reduce_system",
    "sibc_coefficients",
    "solve_scattering",
]
