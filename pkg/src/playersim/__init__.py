"""playersim: deterministic emulation of an SD-card music player appliance.

Every peripheral of the device — IR remote link, SPI bus, SDHC card,
audio codec, character LCD — is a pure state machine driven by one
virtual-time scheduler, with the firmware-style drivers implemented
against those models.
"""

__version__ = "0.1.0"

from .simcore import Scheduler, VirtualClock  # noqa: F401
