"""Singular quasisymmetric metric on the unit cube: construction and verification."""

from qsmetric.config import TOOL_VERSION

__version__ = TOOL_VERSION
