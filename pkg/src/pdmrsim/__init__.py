"""pdmrsim: forward simulation and inversion for photocurrent-detected
magnetic resonance of NV-center ensembles in diamond."""

__version__ = "0.1.0"
