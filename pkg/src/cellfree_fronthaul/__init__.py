"""Uplink cell-free massive MIMO over capacity-limited fronthaul with hardware impairments."""

__version__ = "0.1.0"
