"""Airspace-channel capacity, air corridors and closed-loop sensing/control for low-altitude wireless networks."""

from . import airspace, beamforming, channel, corridor, sensing_control

__version__ = "0.1.0"

__all__ = ["airspace", "beamforming", "channel", "corridor", "sensing_control"]
