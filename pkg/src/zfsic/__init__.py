"""Outage and ergodic capacity of ZF/ZF-SIC receivers over rank-1 Rician fading
with hardware impairments and imperfect channel estimation."""

from .channel import ChannelRealization, SystemConfig
from .specfun import SeriesControl, SeriesResult

__all__ = ["ChannelRealization", "SystemConfig", "SeriesControl", "SeriesResult"]
__version__ = "0.1.0"
