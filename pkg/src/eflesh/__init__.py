"""Toolchain for printable magnetic tactile sensors.

Geometry is in millimetres throughout; magnetics and the sensor model work in SI.
"""

from .errors import EFleshError
from .mesh import TriMesh, emit_mesh, parse_mesh, validate_shell

__version__ = "0.1.0"

__all__ = ["EFleshError", "TriMesh", "emit_mesh", "parse_mesh", "validate_shell", "__version__"]
