"""Simulation and verification toolkit for infinite-server queues with
state-dependent arrivals and general service hazards."""

__version__ = "0.1.0"
SPEC_VERSION = "1"
