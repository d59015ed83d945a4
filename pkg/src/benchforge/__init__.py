"""Automated design of black-box-optimization benchmark suites by multi-objective program evolution."""

__version__ = "0.1.0"
