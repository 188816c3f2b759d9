"""Joint active and passive beamforming for IRS-aided MISO downlinks."""

__version__ = "0.1.0"
